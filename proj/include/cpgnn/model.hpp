#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "cpgnn/decoder.hpp"
#include "cpgnn/encoder.hpp"

namespace cpgnn {

// A tail-direction query (anchor, relation, ?); head queries use the inverse relation.
struct Query {
  EntityId anchor = 0;
  RelationId relation = 0;
  friend bool operator==(const Query&, const Query&) = default;
};

struct ModelConfig {
  EncoderConfig encoder;
  DecoderConfig decoder;
};

// CP-GNN encoder chained into the ConvE decoder.
class Model {
 public:
  Model(const ModelConfig& config, std::size_t num_entities, std::size_t num_relations, std::uint64_t seed);

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return config_; }
  std::size_t num_entities() const { return encoder_.num_entities(); }
  std::size_t num_relations() const { return encoder_.num_relations(); }

  Encoder& encoder() { return encoder_; }
  ConvEDecoder& decoder() { return decoder_; }

  // Probabilities [B, n_e] for a batch of queries.
  Var forward(Tape& tape, const RelationalAdjacency& adj, const ProximityAggregation* prox,
              std::span<const Query> queries, bool training, std::uint64_t dropout_seed, std::uint64_t step);

  // Inference over many queries: encodes once, then scores in chunks and
  // hands each query's probability row to `sink`.
  void score_queries(const RelationalAdjacency& adj, const ProximityAggregation* prox, std::span<const Query> queries,
                     std::size_t chunk, const std::function<void(std::size_t, std::span<const Real>)>& sink);

  // Stable order; names are unique.
  std::vector<Parameter*> parameters();

 private:
  ModelConfig config_;
  Encoder encoder_;
  ConvEDecoder decoder_;
};

}  // namespace cpgnn
