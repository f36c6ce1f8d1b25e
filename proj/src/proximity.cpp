#include "cpgnn/proximity.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <tuple>

#include "cpgnn/binary_io.hpp"
#include "cpgnn/error.hpp"
#include "cpgnn/random.hpp"

namespace cpgnn {

std::size_t QueryKeyHash::operator()(const QueryKey& k) const noexcept {
  return static_cast<std::size_t>(hash_key({static_cast<std::uint64_t>(k.direction), k.anchor, k.relation}));
}

QAPairIndex::QAPairIndex(std::vector<QAPair> pairs) : pairs_(std::move(pairs)) {
  lookup_.reserve(pairs_.size());
  for (std::size_t i = 0; i < pairs_.size(); ++i) {
    const auto& p = pairs_[i];
    lookup_.emplace(QueryKey{p.direction, p.anchor, p.relation}, i);
  }
}

const QAPair* QAPairIndex::find(QueryDirection dir, EntityId anchor, RelationId relation) const {
  auto it = lookup_.find(QueryKey{dir, anchor, relation});
  return it == lookup_.end() ? nullptr : &pairs_[it->second];
}

std::size_t QAPairIndex::total_answers() const {
  std::size_t n = 0;
  for (const auto& p : pairs_) n += p.answers.size();
  return n;
}

QAPairIndex extract_qa_pairs(const KnowledgeGraph& kg) { return extract_qa_pairs(kg.raw_train()); }

QAPairIndex extract_qa_pairs(std::span<const Triple> triples) {
  // (direction, relation, anchor, answer) tuples sorted then grouped.
  struct Row {
    std::uint8_t dir;
    RelationId rel;
    EntityId anchor;
    EntityId answer;
  };
  std::vector<Row> rows;
  rows.reserve(2 * triples.size());
  for (const auto& t : triples) {
    rows.push_back({static_cast<std::uint8_t>(QueryDirection::kTail), t.relation, t.head, t.tail});
    rows.push_back({static_cast<std::uint8_t>(QueryDirection::kHead), t.relation, t.tail, t.head});
  }
  auto as_tuple = [](const Row& r) { return std::tie(r.dir, r.rel, r.anchor, r.answer); };
  std::sort(rows.begin(), rows.end(), [&](const Row& a, const Row& b) { return as_tuple(a) < as_tuple(b); });

  std::vector<QAPair> pairs;
  for (std::size_t i = 0; i < rows.size();) {
    QAPair p;
    p.direction = static_cast<QueryDirection>(rows[i].dir);
    p.relation = rows[i].rel;
    p.anchor = rows[i].anchor;
    std::size_t j = i;
    while (j < rows.size() && rows[j].dir == rows[i].dir && rows[j].rel == rows[i].rel &&
           rows[j].anchor == rows[i].anchor) {
      if (p.answers.empty() || p.answers.back() != rows[j].answer) p.answers.push_back(rows[j].answer);
      ++j;
    }
    pairs.push_back(std::move(p));
    i = j;
  }
  return QAPairIndex(std::move(pairs));
}

double pm(int max_answer_set, std::size_t answer_set_size) {
  if (max_answer_set <= 2) throw ConfigError("answer-set threshold M must be greater than 2");
  if (answer_set_size < 2) throw ContractViolation("proximity needs an answer set of at least two entities");
  const double m = max_answer_set;
  const double size = static_cast<double>(answer_set_size);
  return std::max(m - size, 0.0) / (m - 2.0);
}

double SPMMatrix::at(EntityId i, EntityId j) const {
  if (i == j) return 0.0;
  auto it = entries_.find(pair_key(i, j));
  return it == entries_.end() ? 0.0 : it->second;
}

void SPMMatrix::add(EntityId i, EntityId j, double value) {
  if (i == j) throw ContractViolation("SPM has no diagonal entries");
  if (value <= 0.0) return;
  entries_[pair_key(i, j)] += value;
}

std::vector<std::pair<std::pair<EntityId, EntityId>, double>> SPMMatrix::sorted_entries() const {
  std::vector<std::pair<std::pair<EntityId, EntityId>, double>> out;
  out.reserve(entries_.size());
  for (const auto& [key, value] : entries_) out.push_back({{pair_first(key), pair_second(key)}, value});
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  return out;
}

SPMMatrix accumulate_spm(const QAPairIndex& index, int max_answer_set) {
  if (max_answer_set <= 2) throw ConfigError("answer-set threshold M must be greater than 2");
  SPMMatrix spm(max_answer_set);
  for (const auto& pair : index.pairs()) {
    const std::size_t n = pair.answers.size();
    if (n < 2 || n >= static_cast<std::size_t>(max_answer_set)) continue;
    const double value = pm(max_answer_set, n);
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = a + 1; b < n; ++b) spm.add(pair.answers[a], pair.answers[b], value);
    }
  }
  return spm;
}

ProximityGraph::ProximityGraph(std::size_t num_entities, double threshold, int max_answer_set)
    : adjacency_(num_entities), threshold_(threshold), max_answer_set_(max_answer_set) {}

void ProximityGraph::add_edge(EntityId i, EntityId j, double weight) {
  if (i == j) throw ContractViolation("proximity graph has no self loops");
  adjacency_.at(i).push_back({j, weight});
  adjacency_.at(j).push_back({i, weight});
  ++edge_count_;
}

void ProximityGraph::finalize() {
  for (auto& list : adjacency_) {
    std::sort(list.begin(), list.end(), [](const auto& a, const auto& b) { return a.entity < b.entity; });
  }
}

std::vector<ProximityGraph::Edge> ProximityGraph::edges() const {
  std::vector<Edge> out;
  out.reserve(edge_count_);
  for (std::size_t i = 0; i < adjacency_.size(); ++i) {
    for (const auto& n : adjacency_[i]) {
      if (n.entity > i) out.push_back({static_cast<EntityId>(i), n.entity, n.weight});
    }
  }
  return out;
}

bool operator==(const ProximityGraph& a, const ProximityGraph& b) {
  return a.threshold_ == b.threshold_ && a.max_answer_set_ == b.max_answer_set_ && a.edge_count_ == b.edge_count_ &&
         a.adjacency_ == b.adjacency_;
}

ProximityGraph build_proximity_graph(const SPMMatrix& spm, std::size_t num_entities, double threshold) {
  if (!(threshold >= 0.0)) throw ConfigError("proximity threshold I must be non-negative");
  ProximityGraph graph(num_entities, threshold, spm.max_answer_set());
  for (const auto& [ij, value] : spm.sorted_entries()) {
    if (ij.second >= num_entities) throw ContractViolation("SPM entity id outside the vocabulary");
    if (value > threshold) graph.add_edge(ij.first, ij.second, value);
  }
  graph.finalize();
  return graph;
}

nlohmann::json ProximityStats::to_json() const {
  nlohmann::json hist = nlohmann::json::object();
  for (const auto& [deg, count] : degree_histogram) hist[std::to_string(deg)] = count;
  return {{"num_entities", num_entities},   {"edge_count", edge_count},
          {"isolated_entities", isolated},  {"degree_histogram", hist},
          {"weight_quantiles", weight_quantiles}, {"max_weight", max_weight}};
}

ProximityStats proximity_stats(const ProximityGraph& graph) {
  ProximityStats s;
  s.num_entities = graph.num_entities();
  s.edge_count = graph.edge_count();
  std::vector<double> weights;
  weights.reserve(graph.edge_count());
  for (std::size_t e = 0; e < graph.num_entities(); ++e) {
    const auto nbrs = graph.neighbors(static_cast<EntityId>(e));
    s.degree_histogram[nbrs.size()]++;
    s.degree_sum += nbrs.size();
    if (nbrs.empty()) ++s.isolated;
    for (const auto& n : nbrs) {
      if (n.entity > e) weights.push_back(n.weight);
    }
  }
  if (!weights.empty()) {
    std::sort(weights.begin(), weights.end());
    for (double q : {0.0, 0.25, 0.5, 0.75, 1.0}) {
      const auto idx = static_cast<std::size_t>(std::llround(q * static_cast<double>(weights.size() - 1)));
      s.weight_quantiles.push_back(weights[idx]);
    }
    s.max_weight = weights.back();
  }
  return s;
}

namespace {
constexpr std::string_view kPgMagic("CPGNNPG\0", 8);
constexpr std::uint32_t kPgVersion = 1;

#pragma pack(push, 1)
struct EdgeRecord {
  std::uint32_t i;
  std::uint32_t j;
  double weight;
};
#pragma pack(pop)
}  // namespace

void write_proximity_graph(const ProximityGraph& graph, const std::filesystem::path& path) {
  BinaryWriter w(path);
  w.put_bytes(kPgMagic);
  w.put(kPgVersion);
  w.put<std::uint64_t>(graph.num_entities());
  w.put<double>(graph.threshold());
  w.put<std::int32_t>(graph.max_answer_set());
  const auto edges = graph.edges();
  w.put<std::uint64_t>(edges.size());
  for (const auto& e : edges) w.put(EdgeRecord{e.i, e.j, e.weight});
  w.finish();
}

ProximityGraph read_proximity_graph(const std::filesystem::path& path) {
  BinaryReader r(path);
  r.expect_magic(kPgMagic);
  if (const auto version = r.get<std::uint32_t>(); version != kPgVersion) {
    throw DataError("unsupported proximity graph version " + std::to_string(version) + " in " + path.string());
  }
  const auto n = r.get<std::uint64_t>();
  const auto threshold = r.get<double>();
  const auto m = r.get<std::int32_t>();
  const auto count = r.get<std::uint64_t>();
  ProximityGraph graph(static_cast<std::size_t>(n), threshold, m);
  std::pair<EntityId, EntityId> prev{0, 0};
  for (std::uint64_t k = 0; k < count; ++k) {
    const auto rec = r.get<EdgeRecord>();
    if (rec.i >= rec.j || rec.j >= n) throw DataError("invalid edge record in " + path.string());
    if (k > 0 && !(prev < std::pair{rec.i, rec.j})) throw DataError("unsorted edge records in " + path.string());
    prev = {rec.i, rec.j};
    graph.add_edge(rec.i, rec.j, rec.weight);
  }
  graph.finalize();
  return graph;
}

void write_proximity_tsv(const ProximityGraph& graph, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out.precision(17);
  for (const auto& e : graph.edges()) out << e.i << '\t' << e.j << '\t' << e.weight << '\n';
}

}  // namespace cpgnn
