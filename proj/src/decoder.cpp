#include "cpgnn/decoder.hpp"

#include <cmath>

#include "cpgnn/encoder.hpp"
#include "cpgnn/error.hpp"
#include "cpgnn/random.hpp"

namespace cpgnn {

std::size_t default_reshape_height(std::size_t dim) {
  std::size_t best = 1;
  for (std::size_t h = 1; h * h <= dim; ++h) {
    if (dim % h == 0) best = h;
  }
  return best;
}

void DecoderConfig::resolve(std::size_t dim) {
  if (reshape_height == 0 && reshape_width == 0) {
    reshape_height = default_reshape_height(dim);
    reshape_width = dim / reshape_height;
  } else if (reshape_height == 0 && reshape_width != 0 && dim % reshape_width == 0) {
    reshape_height = dim / reshape_width;
  } else if (reshape_width == 0 && reshape_height != 0 && dim % reshape_height == 0) {
    reshape_width = dim / reshape_height;
  }
  validate(dim);
}

void DecoderConfig::validate(std::size_t dim) const {
  if (reshape_height * reshape_width != dim) {
    throw ConfigError("decoder reshape " + std::to_string(reshape_height) + "x" + std::to_string(reshape_width) +
                      " does not match embedding dimension " + std::to_string(dim));
  }
  if (filters == 0 || kernel == 0) throw ConfigError("decoder needs at least one filter of positive size");
  if (kernel > stacked_height() || kernel > reshape_width) {
    throw ConfigError("decoder kernel " + std::to_string(kernel) + " exceeds the stacked input " +
                      std::to_string(stacked_height()) + "x" + std::to_string(reshape_width));
  }
  for (Real rate : {input_dropout, feature_dropout, hidden_dropout}) {
    if (!(rate >= 0 && rate < 1)) throw ConfigError("decoder dropout rates must lie in [0, 1)");
  }
  if (!(label_smoothing >= 0 && label_smoothing <= 1)) throw ConfigError("label smoothing must lie in [0, 1]");
}

ConvEDecoder::ConvEDecoder(const DecoderConfig& config, std::size_t dim, std::size_t num_entities,
                           std::uint64_t seed)
    : config_(config), dim_(dim) {
  config_.resolve(dim);
  const std::size_t c = config_.filters, k = config_.kernel;
  const std::size_t features = config_.feature_count();
  const Real conv_bound = Real(1) / std::sqrt(static_cast<Real>(k * k));
  const Real fc_bound = Real(1) / std::sqrt(static_cast<Real>(features));
  conv_w_ = Parameter("decoder.conv.weight", uniform_tensor({c, 1, k, k}, conv_bound, hash_key({seed, 0x646563ULL, 0})));
  conv_b_ = Parameter("decoder.conv.bias", Tensor({c}));
  fc_w_ = Parameter("decoder.fc.weight", uniform_tensor({dim, features}, fc_bound, hash_key({seed, 0x646563ULL, 1})));
  fc_b_ = Parameter("decoder.fc.bias", Tensor({dim}));
  entity_b_ = Parameter("decoder.entity_bias", Tensor({num_entities}));
}

Var ConvEDecoder::logits(Var heads, Var relations, Var entities, bool training, std::uint64_t dropout_seed,
                         std::uint64_t step) {
  Tape& tape = heads.tape();
  if (heads.shape().size() != 2 || heads.shape()[1] != dim_ || relations.shape() != heads.shape()) {
    throw ContractViolation("decoder expects [B, " + std::to_string(dim_) + "] query rows, got " +
                            shape_str(heads.shape()) + " and " + shape_str(relations.shape()));
  }
  if (entities.shape().size() != 2 || entities.shape()[1] != dim_) {
    throw ContractViolation("decoder expects [n_e, " + std::to_string(dim_) + "] entity rows");
  }
  const std::size_t batch = heads.shape()[0];
  Var stacked = ops::reshape(ops::concat_cols(heads, relations),
                             {batch, 1, config_.stacked_height(), config_.reshape_width});
  stacked = ops::dropout(stacked, config_.input_dropout, {dropout_seed, 1, step}, training);
  Var maps = ops::relu(ops::conv2d(stacked, tape.parameter(conv_w_), tape.parameter(conv_b_)));
  maps = ops::dropout(maps, config_.feature_dropout, {dropout_seed, 2, step}, training);
  Var flat = ops::reshape(maps, {batch, config_.feature_count()});
  Var hidden = ops::matmul_nt(flat, tape.parameter(fc_w_)) + tape.parameter(fc_b_);
  hidden = ops::relu(ops::dropout(hidden, config_.hidden_dropout, {dropout_seed, 3, step}, training));
  return ops::matmul_nt(hidden, entities) + tape.parameter(entity_b_);
}

Var ConvEDecoder::score(Var heads, Var relations, Var entities, bool training, std::uint64_t dropout_seed,
                        std::uint64_t step) {
  return ops::sigmoid(logits(heads, relations, entities, training, dropout_seed, step));
}

std::vector<Parameter*> ConvEDecoder::parameters() { return {&conv_w_, &conv_b_, &fc_w_, &fc_b_, &entity_b_}; }

}  // namespace cpgnn
