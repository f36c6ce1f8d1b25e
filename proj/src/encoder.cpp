#include "cpgnn/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "cpgnn/error.hpp"
#include "cpgnn/random.hpp"

namespace cpgnn {

std::string_view to_string(Composition c) {
  switch (c) {
    case Composition::kAdditive:
      return "additive";
    case Composition::kMultiplicative:
      return "multiplicative";
    case Composition::kMlp:
      return "mlp";
  }
  return "?";
}

std::string_view to_string(WeightScheme w) {
  switch (w) {
    case WeightScheme::kPrior:
      return "prior";
    case WeightScheme::kGcn:
      return "gcn";
    case WeightScheme::kAttention:
      return "attention";
  }
  return "?";
}

Composition parse_composition(std::string_view s) {
  if (s == "additive") return Composition::kAdditive;
  if (s == "multiplicative") return Composition::kMultiplicative;
  if (s == "mlp") return Composition::kMlp;
  throw ConfigError("unknown composition '" + std::string(s) + "' (additive|multiplicative|mlp)");
}

WeightScheme parse_weight_scheme(std::string_view s) {
  if (s == "prior") return WeightScheme::kPrior;
  if (s == "gcn") return WeightScheme::kGcn;
  if (s == "attention") return WeightScheme::kAttention;
  throw ConfigError("unknown weight scheme '" + std::string(s) + "' (prior|gcn|attention)");
}

void EncoderConfig::validate(bool allow_any_depth) const {
  if (dim == 0) throw ConfigError("embedding dimension must be positive");
  auto check = [&](int layers, const char* what) {
    if (layers < 0 || (!allow_any_depth && (layers < 1 || layers > 3))) {
      throw ConfigError(std::string(what) + " must be in {1, 2, 3}, got " + std::to_string(layers));
    }
  };
  check(kg_layers, "kg_layers");
  check(proximity_layers, "proximity_layers");
}

RelationalAdjacency RelationalAdjacency::from_triples(std::size_t num_entities, std::span<const Triple> triples) {
  RelationalAdjacency adj;
  adj.num_entities = num_entities;
  adj.in_degree.assign(num_entities, 0);
  adj.out_degree.assign(num_entities, 0);
  std::vector<std::size_t> order(triples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return triples[a].tail < triples[b].tail; });
  adj.source.reserve(triples.size());
  adj.relation.reserve(triples.size());
  adj.destination.reserve(triples.size());
  for (std::size_t k : order) {
    const Triple& t = triples[k];
    if (t.head >= num_entities || t.tail >= num_entities) throw ContractViolation("edge endpoint outside vocabulary");
    adj.source.push_back(t.head);
    adj.relation.push_back(t.relation);
    adj.destination.push_back(t.tail);
    ++adj.out_degree[t.head];
    ++adj.in_degree[t.tail];
  }
  return adj;
}

RelationalAdjacency RelationalAdjacency::build(const KnowledgeGraph& kg) {
  return from_triples(kg.num_entities(), kg.train());
}

RelationalAdjacency RelationalAdjacency::build(const KnowledgeGraph& kg, std::span<const std::uint32_t> active) {
  std::vector<Triple> edges;
  edges.reserve(active.size());
  for (std::uint32_t i : active) edges.push_back(kg.train().at(i));
  return from_triples(kg.num_entities(), edges);
}

namespace {
ProximityAggregation aggregate(const ProximityGraph& graph, const std::function<bool(EntityId, EntityId)>& keep) {
  ProximityAggregation agg;
  agg.num_entities = graph.num_entities();
  std::vector<Real> weights;
  std::vector<ProximityNeighbor> nbrs;
  for (std::size_t i = 0; i < graph.num_entities(); ++i) {
    nbrs.clear();
    for (const auto& n : graph.neighbors(static_cast<EntityId>(i))) {
      if (!keep || keep(static_cast<EntityId>(i), n.entity)) nbrs.push_back(n);
    }
    if (nbrs.empty()) continue;
    double max_w = nbrs[0].weight;
    for (const auto& n : nbrs) max_w = std::max(max_w, n.weight);
    double denom = 0.0;
    for (const auto& n : nbrs) denom += std::exp(n.weight - max_w);
    for (const auto& n : nbrs) {
      agg.source.push_back(n.entity);
      agg.destination.push_back(static_cast<std::uint32_t>(i));
      weights.push_back(static_cast<Real>(std::exp(n.weight - max_w) / denom));
    }
  }
  const std::size_t count = weights.size();
  agg.weights = Tensor({count}, std::move(weights));
  return agg;
}
}  // namespace

ProximityAggregation ProximityAggregation::build(const ProximityGraph& graph) { return aggregate(graph, {}); }

ProximityAggregation ProximityAggregation::build(const ProximityGraph& graph, std::uint64_t seed, double drop_rate) {
  return aggregate(graph, [&](EntityId i, EntityId j) { return uniform_at({seed, 0x70726f78ULL, pair_key(i, j)}) >= drop_rate; });
}

Var compose(Var entities, Var relations, Composition mode, const CompositionWeights* mlp) {
  switch (mode) {
    case Composition::kAdditive:
      return entities + relations;
    case Composition::kMultiplicative:
      return entities * relations;
    case Composition::kMlp: {
      if (!mlp) throw ContractViolation("mlp composition needs its weights");
      return ops::tanh(ops::matmul_nt(ops::concat_cols(entities, relations), mlp->weight) + mlp->bias);
    }
  }
  throw ContractViolation("unknown composition");
}

Var relational_weights(Tape& tape, const RelationalAdjacency& adj, Var entities, Var phi, WeightScheme scheme) {
  const std::size_t e = adj.edge_count();
  switch (scheme) {
    case WeightScheme::kPrior: {
      Tensor w({e});
      for (std::size_t k = 0; k < e; ++k) w[k] = Real(1) / static_cast<Real>(adj.out_degree[adj.source[k]]);
      return tape.constant(std::move(w));
    }
    case WeightScheme::kGcn: {
      Tensor w({e});
      for (std::size_t k = 0; k < e; ++k) {
        const double di = adj.in_degree[adj.destination[k]];
        const double dj = adj.out_degree[adj.source[k]];
        w[k] = static_cast<Real>(1.0 / std::sqrt(di * dj));
      }
      return tape.constant(std::move(w));
    }
    case WeightScheme::kAttention: {
      Var dst = ops::gather_rows(entities, adj.destination);
      return ops::segment_softmax(ops::rowwise_dot(dst, phi), adj.destination, adj.num_entities);
    }
  }
  throw ContractViolation("unknown weight scheme");
}

Var gr_layer(Var entities, Var relations, const RelationalAdjacency& adj, const EncoderConfig& config, Var w_kg,
             const CompositionWeights* mlp) {
  if (entities.shape().at(0) != adj.num_entities) {
    throw ContractViolation("relational adjacency and entity table disagree on entity count");
  }
  Tape& tape = entities.tape();
  Var phi = compose(ops::gather_rows(entities, adj.source), ops::gather_rows(relations, adj.relation),
                    config.composition, mlp);
  Var alpha = relational_weights(tape, adj, entities, phi, config.weight_scheme);
  Var agg = ops::segment_weighted_sum(phi, alpha, adj.destination, adj.num_entities);
  return ops::tanh(ops::matmul_nt(agg, w_kg)) + entities;
}

Var gp_layer(Var entities, const ProximityAggregation& prox, Var w_prox) {
  if (entities.shape().at(0) != prox.num_entities) {
    throw DataError("proximity graph covers " + std::to_string(prox.num_entities) + " entities, embeddings have " +
                    std::to_string(entities.shape().at(0)));
  }
  Tape& tape = entities.tape();
  Var agg = ops::segment_weighted_sum(ops::gather_rows(entities, prox.source), tape.constant(prox.weights),
                                      prox.destination, prox.num_entities);
  return ops::tanh(ops::matmul_nt(agg, w_prox)) + entities;
}

Tensor uniform_tensor(Shape shape, Real bound, std::uint64_t seed) {
  Tensor t(std::move(shape));
  CounterRng rng(seed);
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<Real>(rng.uniform(-bound, bound));
  return t;
}

Encoder::Encoder(const EncoderConfig& config, std::size_t num_entities, std::size_t num_relations,
                 std::uint64_t seed)
    : config_(config) {
  const std::size_t d = config.dim;
  const Real bound = Real(1) / std::sqrt(static_cast<Real>(d));
  std::uint64_t stream = 0;
  auto init = [&](std::string name, Shape shape) {
    return Parameter(std::move(name), uniform_tensor(std::move(shape), bound, hash_key({seed, 0x656e63ULL, stream++})));
  };
  entity_ = init("encoder.entity", {num_entities, d});
  relation_ = init("encoder.relation", {num_relations, d});
  for (int l = 0; l < config.kg_layers; ++l) {
    w_kg_.push_back(init("encoder.kg." + std::to_string(l) + ".weight", {d, d}));
    if (config.composition == Composition::kMlp) {
      comp_w_.push_back(init("encoder.kg." + std::to_string(l) + ".compose.weight", {d, 2 * d}));
      comp_b_.emplace_back("encoder.kg." + std::to_string(l) + ".compose.bias", Tensor({d}));
    }
  }
  for (int l = 0; !config.kg_only && l < config.proximity_layers; ++l) {
    w_prox_.push_back(init("encoder.proximity." + std::to_string(l) + ".weight", {d, d}));
  }
  mlp_w1_ = init("encoder.relation_mlp.hidden.weight", {d, d});
  mlp_b1_ = Parameter("encoder.relation_mlp.hidden.bias", Tensor({d}));
  mlp_w2_ = init("encoder.relation_mlp.out.weight", {d, d});
  mlp_b2_ = Parameter("encoder.relation_mlp.out.bias", Tensor({d}));
}

EncoderOutput Encoder::encode(Tape& tape, const RelationalAdjacency& adj, const ProximityAggregation* prox) {
  Var entities = tape.parameter(entity_);
  const Var relations = tape.parameter(relation_);
  for (std::size_t l = 0; l < w_kg_.size(); ++l) {
    std::optional<CompositionWeights> mlp;
    if (config_.composition == Composition::kMlp) {
      mlp = CompositionWeights{tape.parameter(comp_w_[l]), tape.parameter(comp_b_[l])};
    }
    entities = gr_layer(entities, relations, adj, config_, tape.parameter(w_kg_[l]), mlp ? &*mlp : nullptr);
  }
  if (!w_prox_.empty()) {
    if (!prox) throw ContractViolation("CP-GNN needs a proximity graph (or kg_only)");
    for (auto& w : w_prox_) entities = gp_layer(entities, *prox, tape.parameter(w));
  }
  Var hidden = ops::tanh(ops::matmul_nt(relations, tape.parameter(mlp_w1_)) + tape.parameter(mlp_b1_));
  Var rel_out = ops::matmul_nt(hidden, tape.parameter(mlp_w2_)) + tape.parameter(mlp_b2_);
  return {entities, rel_out};
}

std::vector<Parameter*> Encoder::parameters() {
  std::vector<Parameter*> out{&entity_, &relation_};
  for (std::size_t l = 0; l < w_kg_.size(); ++l) {
    out.push_back(&w_kg_[l]);
    if (l < comp_w_.size()) {
      out.push_back(&comp_w_[l]);
      out.push_back(&comp_b_[l]);
    }
  }
  for (auto& w : w_prox_) out.push_back(&w);
  for (auto* p : {&mlp_w1_, &mlp_b1_, &mlp_w2_, &mlp_b2_}) out.push_back(p);
  return out;
}

}  // namespace cpgnn
