#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "cpgnn/model.hpp"

namespace cpgnn {

struct RankResult {
  std::size_t query = 0;
  EntityId target = 0;
  double rank = 0.0;  // half-integers arise from ties
  bool filtered = false;
};

// Tie-averaged filtered rank of `target`. Entities in `known_true` (distinct,
// never the target) are removed from the competition. Scores are compared with
// exact equality; a NaN target ranks below every remaining entity.
RankResult filtered_rank(std::span<const Real> scores, EntityId target, std::span<const EntityId> known_true,
                         std::size_t query = 0);

struct Metrics {
  std::size_t n_queries = 0;
  double mrr = 0.0;
  double mr = 0.0;
  double hits1 = 0.0;
  double hits3 = 0.0;
  double hits10 = 0.0;

  nlohmann::json to_json(std::string_view split) const;
};

Metrics compute_metrics(std::span<const double> ranks);

// Every known answer of (anchor, relation) over train, valid and test, in both
// directions, keyed by augmented relation id.
class FilterIndex {
 public:
  static FilterIndex build(const KnowledgeGraph& kg);
  // Sorted, unique; empty when the query is unknown.
  std::span<const EntityId> answers(EntityId anchor, RelationId relation) const;

 private:
  std::unordered_map<std::uint64_t, std::vector<EntityId>> answers_;
};

// One scored direction of an evaluation triple.
struct EvalCase {
  QueryDirection direction = QueryDirection::kTail;
  Query query;  // (h, r) or (t, r^-1)
  EntityId target = 0;
  std::size_t train_answers = 0;  // N
  double rank = 0.0;
};

// Both directions of every (raw) triple in `split`, tail query first. N comes from
// the raw train split. Relation ids in `query` are augmented ids, so the graph
// must be augmented unless only N is needed.
std::vector<EvalCase> evaluation_cases(const KnowledgeGraph& kg, Split split);

struct EvalResult {
  Metrics metrics;
  std::vector<EvalCase> cases;
};

EvalResult evaluate(Model& model, const KnowledgeGraph& kg, Split split, const RelationalAdjacency& adj,
                    const ProximityAggregation* prox, std::size_t batch_size = 256);

inline constexpr std::array<std::string_view, 6> kNTypeLabels = {"N=0",         "N=1",          "1<N<=10",
                                                                 "10<N<=100",   "100<N<=500",   "N>500"};

std::size_t ntype_bin(std::size_t train_answers);

struct NTypeRange {
  std::string label;
  std::size_t count = 0;
  double rate = 0.0;
};

// Six ranges over both directions of each triple in `split`.
std::vector<NTypeRange> ntype_report(const KnowledgeGraph& kg, Split split);
std::vector<NTypeRange> ntype_table(std::span<const EvalCase> cases);
// Header `range count rate`, rates to two decimals.
std::string ntype_tsv(std::span<const NTypeRange> table);
nlohmann::json ntype_json(std::span<const NTypeRange> table);

struct NTypeMrr {
  std::string label;
  std::size_t count = 0;
  double mrr = 0.0;
};

// Per-range MRR over scored cases; ranges without cases are omitted.
std::vector<NTypeMrr> ntype_mrr_breakdown(std::span<const EvalCase> cases);

}  // namespace cpgnn
