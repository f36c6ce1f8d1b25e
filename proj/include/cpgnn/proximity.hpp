#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "cpgnn/kg.hpp"

namespace cpgnn {

enum class QueryDirection : std::uint8_t {
  kTail,  // (anchor, r, ?)
  kHead,  // (?, r, anchor)
};

struct QAPair {
  QueryDirection direction = QueryDirection::kTail;
  EntityId anchor = 0;
  RelationId relation = 0;
  std::vector<EntityId> answers;  // sorted, unique
};

struct QueryKey {
  QueryDirection direction;
  EntityId anchor;
  RelationId relation;
  friend bool operator==(const QueryKey&, const QueryKey&) = default;
};

struct QueryKeyHash {
  std::size_t operator()(const QueryKey& k) const noexcept;
};

class QAPairIndex {
 public:
  QAPairIndex() = default;
  explicit QAPairIndex(std::vector<QAPair> pairs);

  const std::vector<QAPair>& pairs() const { return pairs_; }
  const QAPair* find(QueryDirection dir, EntityId anchor, RelationId relation) const;
  std::size_t total_answers() const;

 private:
  std::vector<QAPair> pairs_;
  std::unordered_map<QueryKey, std::size_t, QueryKeyHash> lookup_;
};

// One QA pair per distinct (direction, anchor, relation) over the raw
// (un-augmented) train triples. Pairs are ordered by (direction, relation, anchor).
QAPairIndex extract_qa_pairs(const KnowledgeGraph& kg);
QAPairIndex extract_qa_pairs(std::span<const Triple> triples);

// Proximity contributed by one QA pair to each of its answer pairs:
// max(M - size, 0) / (M - 2). Requires M > 2 and size >= 2.
double pm(int max_answer_set, std::size_t answer_set_size);

inline std::uint64_t pair_key(EntityId a, EntityId b) {
  const EntityId lo = a < b ? a : b;
  const EntityId hi = a < b ? b : a;
  return (static_cast<std::uint64_t>(lo) << 32) | hi;
}
inline EntityId pair_first(std::uint64_t key) { return static_cast<EntityId>(key >> 32); }
inline EntityId pair_second(std::uint64_t key) { return static_cast<EntityId>(key & 0xffffffffu); }

// Sparse symmetric SPM accumulator keyed by the unordered pair (min, max).
class SPMMatrix {
 public:
  explicit SPMMatrix(int max_answer_set) : max_answer_set_(max_answer_set) {}

  int max_answer_set() const { return max_answer_set_; }
  double at(EntityId i, EntityId j) const;
  std::size_t size() const { return entries_.size(); }
  const std::unordered_map<std::uint64_t, double>& entries() const { return entries_; }
  void add(EntityId i, EntityId j, double value);

  // Entries as ((i, j), value) with i < j, sorted.
  std::vector<std::pair<std::pair<EntityId, EntityId>, double>> sorted_entries() const;

 private:
  int max_answer_set_;
  std::unordered_map<std::uint64_t, double> entries_;
};

// Sums pm over every QA pair with 2 <= |answers| < M. Larger answer sets are
// skipped before their pairs are enumerated.
SPMMatrix accumulate_spm(const QAPairIndex& index, int max_answer_set);

struct ProximityNeighbor {
  EntityId entity;
  double weight;
};

class ProximityGraph {
 public:
  ProximityGraph() = default;
  ProximityGraph(std::size_t num_entities, double threshold, int max_answer_set);

  std::size_t num_entities() const { return adjacency_.size(); }
  double threshold() const { return threshold_; }
  int max_answer_set() const { return max_answer_set_; }
  std::size_t edge_count() const { return edge_count_; }
  std::span<const ProximityNeighbor> neighbors(EntityId e) const { return adjacency_.at(e); }

  // Inserts both directions; callers insert each unordered pair once.
  void add_edge(EntityId i, EntityId j, double weight);
  void finalize();  // sorts neighbor lists

  // Edges (i, j, w) with i < j, sorted by (i, j).
  struct Edge {
    EntityId i;
    EntityId j;
    double weight;
  };
  std::vector<Edge> edges() const;

  friend bool operator==(const ProximityGraph&, const ProximityGraph&);

 private:
  std::vector<std::vector<ProximityNeighbor>> adjacency_;
  double threshold_ = 0.0;
  int max_answer_set_ = 0;
  std::size_t edge_count_ = 0;
};

inline bool operator==(const ProximityNeighbor& a, const ProximityNeighbor& b) {
  return a.entity == b.entity && a.weight == b.weight;
}

// Connects i and j iff p_ij > threshold (strict).
ProximityGraph build_proximity_graph(const SPMMatrix& spm, std::size_t num_entities, double threshold);

struct ProximityStats {
  std::size_t num_entities = 0;
  std::size_t edge_count = 0;
  std::size_t isolated = 0;
  std::size_t degree_sum = 0;
  std::map<std::size_t, std::size_t> degree_histogram;  // degree -> entity count
  std::vector<double> weight_quantiles;                 // at 0, .25, .5, .75, 1; empty if no edges
  double max_weight = 0.0;

  nlohmann::json to_json() const;
};

ProximityStats proximity_stats(const ProximityGraph& graph);

// Header: magic, version, n_e, I, M, edge count; then (i, j, weight) records
// sorted by (i, j).
void write_proximity_graph(const ProximityGraph& graph, const std::filesystem::path& path);
ProximityGraph read_proximity_graph(const std::filesystem::path& path);
void write_proximity_tsv(const ProximityGraph& graph, const std::filesystem::path& path);

}  // namespace cpgnn
