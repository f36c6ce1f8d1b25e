#include "cpgnn/model.hpp"

#include <algorithm>

#include "cpgnn/error.hpp"
#include "cpgnn/random.hpp"

namespace cpgnn {

Model::Model(const ModelConfig& config, std::size_t num_entities, std::size_t num_relations, std::uint64_t seed)
    : config_(config),
      encoder_(config.encoder, num_entities, num_relations, hash_key({seed, 1})),
      decoder_(config.decoder, config.encoder.dim, num_entities, hash_key({seed, 2})) {
  config_.decoder = decoder_.config();
}

namespace {
void split_queries(std::span<const Query> queries, std::vector<std::uint32_t>& anchors,
                   std::vector<std::uint32_t>& relations, std::size_t num_entities, std::size_t num_relations) {
  anchors.clear();
  relations.clear();
  for (const auto& q : queries) {
    if (q.anchor >= num_entities || q.relation >= num_relations) throw ContractViolation("query id out of range");
    anchors.push_back(q.anchor);
    relations.push_back(q.relation);
  }
}
}  // namespace

Var Model::forward(Tape& tape, const RelationalAdjacency& adj, const ProximityAggregation* prox,
                   std::span<const Query> queries, bool training, std::uint64_t dropout_seed, std::uint64_t step) {
  const EncoderOutput enc = encoder_.encode(tape, adj, prox);
  std::vector<std::uint32_t> anchors, relations;
  split_queries(queries, anchors, relations, num_entities(), num_relations());
  return decoder_.score(ops::gather_rows(enc.entities, anchors), ops::gather_rows(enc.relations, relations),
                        enc.entities, training, dropout_seed, step);
}

void Model::score_queries(const RelationalAdjacency& adj, const ProximityAggregation* prox,
                          std::span<const Query> queries, std::size_t chunk,
                          const std::function<void(std::size_t, std::span<const Real>)>& sink) {
  if (chunk == 0) throw ContractViolation("chunk size must be positive");
  Tensor entities, relations;
  {
    Tape tape(false);
    const EncoderOutput enc = encoder_.encode(tape, adj, prox);
    entities = enc.entities.value();
    relations = enc.relations.value();
  }
  std::vector<std::uint32_t> anchors, rels;
  for (std::size_t start = 0; start < queries.size(); start += chunk) {
    const auto part = queries.subspan(start, std::min(chunk, queries.size() - start));
    split_queries(part, anchors, rels, num_entities(), num_relations());
    Tape tape(false);
    Var ent = tape.view(entities);
    Var rel = tape.view(relations);
    Var probs =
        decoder_.score(ops::gather_rows(ent, anchors), ops::gather_rows(rel, rels), ent, false, 0, 0);
    const Tensor& p = probs.value();
    for (std::size_t i = 0; i < part.size(); ++i) sink(start + i, p.row(i));
  }
}

std::vector<Parameter*> Model::parameters() {
  auto out = encoder_.parameters();
  for (auto* p : decoder_.parameters()) out.push_back(p);
  return out;
}

}  // namespace cpgnn
