#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cpgnn/autodiff.hpp"
#include "cpgnn/kg.hpp"
#include "cpgnn/proximity.hpp"

namespace cpgnn {

enum class Composition { kAdditive, kMultiplicative, kMlp };
enum class WeightScheme { kPrior, kGcn, kAttention };

std::string_view to_string(Composition c);
std::string_view to_string(WeightScheme w);
Composition parse_composition(std::string_view s);
WeightScheme parse_weight_scheme(std::string_view s);

struct EncoderConfig {
  std::size_t dim = 200;
  int kg_layers = 1;
  int proximity_layers = 1;
  Composition composition = Composition::kAdditive;
  WeightScheme weight_scheme = WeightScheme::kAttention;
  // CP-GNN(KG): skip the proximity GNN entirely.
  bool kg_only = false;

  // Layer counts outside {1, 2, 3} are rejected unless allow_any_depth.
  void validate(bool allow_any_depth = false) const;
};

// Message-passing view of the (augmented) train split. Edge k carries
// (source, relation) into destination; edges are grouped by destination.
struct RelationalAdjacency {
  std::size_t num_entities = 0;
  std::vector<std::uint32_t> source;
  std::vector<std::uint32_t> relation;
  std::vector<std::uint32_t> destination;
  std::vector<std::uint32_t> in_degree;
  std::vector<std::uint32_t> out_degree;

  std::size_t edge_count() const { return source.size(); }

  static RelationalAdjacency build(const KnowledgeGraph& kg);
  // Only the train edges whose indices appear in `active`.
  static RelationalAdjacency build(const KnowledgeGraph& kg, std::span<const std::uint32_t> active);
  static RelationalAdjacency from_triples(std::size_t num_entities, std::span<const Triple> triples);
};

// Fixed neighbor weights of the proximity GNN: per destination, softmax of
// the SPM weights over its proximity neighbors.
struct ProximityAggregation {
  std::size_t num_entities = 0;
  std::vector<std::uint32_t> source;
  std::vector<std::uint32_t> destination;
  Tensor weights;  // [edges]

  static ProximityAggregation build(const ProximityGraph& graph);
  // Each undirected edge survives with probability 1 - drop_rate, keyed by
  // (seed, pair); softmax is taken over the survivors.
  static ProximityAggregation build(const ProximityGraph& graph, std::uint64_t seed, double drop_rate);
};

// Per-layer weights of the composition MLP; empty unless composition == kMlp.
struct CompositionWeights {
  Var weight;  // [d, 2d]
  Var bias;    // [d]
};

// phi(e, r) row-wise over [E, d] operands.
Var compose(Var entities, Var relations, Composition mode, const CompositionWeights* mlp = nullptr);

// alpha_ij for every edge of adj at the current layer. `phi` is the composed
// message per edge; it is only read by the attention scheme.
Var relational_weights(Tape& tape, const RelationalAdjacency& adj, Var entities, Var phi, WeightScheme scheme);

// e' = tanh(W n) + e with n_i = sum_j alpha_ij phi(e_j, r_j). `relations` is
// the initial relation table at every layer.
Var gr_layer(Var entities, Var relations, const RelationalAdjacency& adj, const EncoderConfig& config, Var w_kg,
             const CompositionWeights* mlp = nullptr);

// e' = tanh(W n) + e with n_i = sum_j softmax(P_i.)_j e_j.
Var gp_layer(Var entities, const ProximityAggregation& prox, Var w_prox);

struct EncoderOutput {
  Var entities;   // [n_e, d]
  Var relations;  // [n_r, d]
};

// Trainable state of the CP-GNN encoder.
class Encoder {
 public:
  Encoder() = default;
  Encoder(const EncoderConfig& config, std::size_t num_entities, std::size_t num_relations, std::uint64_t seed);

  const EncoderConfig& config() const { return config_; }
  std::size_t num_entities() const { return entity_.value.dim(0); }
  std::size_t num_relations() const { return relation_.value.dim(0); }

  // E_enc = Gp(Gr(E, R)) (or Gr(E, R) when kg_only), R_enc = MLP(R).
  EncoderOutput encode(Tape& tape, const RelationalAdjacency& adj, const ProximityAggregation* prox);

  std::vector<Parameter*> parameters();

  Parameter& entity_embedding() { return entity_; }
  Parameter& relation_embedding() { return relation_; }
  std::vector<Parameter>& kg_transforms() { return w_kg_; }
  std::vector<Parameter>& proximity_transforms() { return w_prox_; }
  std::vector<Parameter>& composition_weights() { return comp_w_; }
  std::vector<Parameter>& composition_biases() { return comp_b_; }
  Parameter& mlp_hidden_weight() { return mlp_w1_; }
  Parameter& mlp_hidden_bias() { return mlp_b1_; }
  Parameter& mlp_out_weight() { return mlp_w2_; }
  Parameter& mlp_out_bias() { return mlp_b2_; }

 private:
  EncoderConfig config_;
  Parameter entity_;
  Parameter relation_;
  std::vector<Parameter> w_kg_;
  std::vector<Parameter> w_prox_;
  std::vector<Parameter> comp_w_;
  std::vector<Parameter> comp_b_;
  Parameter mlp_w1_, mlp_b1_, mlp_w2_, mlp_b2_;
};

// Uniform in [-bound, bound] from a seeded counter stream.
Tensor uniform_tensor(Shape shape, Real bound, std::uint64_t seed);

}  // namespace cpgnn
