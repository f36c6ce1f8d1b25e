#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "cpgnn/autodiff.hpp"

namespace cpgnn {

struct DecoderConfig {
  // 0 selects the default: height = largest divisor of d not above sqrt(d).
  std::size_t reshape_height = 0;
  std::size_t reshape_width = 0;
  std::size_t filters = 32;
  std::size_t kernel = 3;
  Real input_dropout = Real(0.2);
  Real feature_dropout = Real(0.2);
  Real hidden_dropout = Real(0.3);
  Real label_smoothing = Real(0.1);

  // Fills in the reshape for dimension d and checks the invariants.
  void resolve(std::size_t dim);
  void validate(std::size_t dim) const;

  std::size_t stacked_height() const { return 2 * reshape_height; }
  std::size_t feature_count() const {
    return filters * (stacked_height() - kernel + 1) * (reshape_width - kernel + 1);
  }
};

std::size_t default_reshape_height(std::size_t dim);

// ConvE-style scorer: stack reshaped (h, r), convolve, project back to d and
// match against every entity row.
class ConvEDecoder {
 public:
  ConvEDecoder() = default;
  ConvEDecoder(const DecoderConfig& config, std::size_t dim, std::size_t num_entities, std::uint64_t seed);

  const DecoderConfig& config() const { return config_; }
  std::size_t dim() const { return dim_; }

  // Logits [B, n_e] for query rows heads [B,d], relations [B,d] against
  // entities [n_e,d]. Dropout masks are keyed by (seed, layer, step).
  Var logits(Var heads, Var relations, Var entities, bool training, std::uint64_t dropout_seed,
             std::uint64_t step);
  // sigmoid(logits)
  Var score(Var heads, Var relations, Var entities, bool training, std::uint64_t dropout_seed, std::uint64_t step);

  std::vector<Parameter*> parameters();

  Parameter& conv_weight() { return conv_w_; }
  Parameter& conv_bias() { return conv_b_; }
  Parameter& fc_weight() { return fc_w_; }
  Parameter& fc_bias() { return fc_b_; }
  Parameter& entity_bias() { return entity_b_; }

 private:
  DecoderConfig config_;
  std::size_t dim_ = 0;
  Parameter conv_w_;    // [C, 1, k, k]
  Parameter conv_b_;    // [C]
  Parameter fc_w_;      // [d, features]
  Parameter fc_b_;      // [d]
  Parameter entity_b_;  // [n_e]
};

}  // namespace cpgnn
