#include "cpgnn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "cpgnn/error.hpp"

namespace cpgnn {

RankResult filtered_rank(std::span<const Real> scores, EntityId target, std::span<const EntityId> known_true,
                         std::size_t query) {
  if (target >= scores.size()) throw ContractViolation("rank target outside the score vector");
  const Real st = scores[target];
  std::size_t greater = 0, equal = 0, others = 0;
  for (std::size_t e = 0; e < scores.size(); ++e) {
    if (e == target) continue;
    ++others;
    if (scores[e] > st) {
      ++greater;
    } else if (scores[e] == st) {
      ++equal;
    }
  }
  for (EntityId k : known_true) {
    if (k == target) throw ContractViolation("filter set contains the rank target");
    if (k >= scores.size()) throw ContractViolation("filter entity outside the score vector");
    --others;
    if (scores[k] > st) {
      --greater;
    } else if (scores[k] == st) {
      --equal;
    }
  }
  if (std::isnan(st)) {
    greater = others;
    equal = 0;
  }
  const double upper = 1.0 + static_cast<double>(greater);
  const double lower = upper + static_cast<double>(equal);
  return {query, target, (upper + lower) / 2.0, !known_true.empty()};
}

nlohmann::json Metrics::to_json(std::string_view split) const {
  return {{"split", split}, {"mrr", mrr},       {"mr", mr},         {"hits1", hits1},
          {"hits3", hits3}, {"hits10", hits10}, {"n_queries", n_queries}};
}

Metrics compute_metrics(std::span<const double> ranks) {
  Metrics m;
  m.n_queries = ranks.size();
  if (ranks.empty()) return m;
  for (double r : ranks) {
    m.mrr += 1.0 / r;
    m.mr += r;
    m.hits1 += r <= 1.0;
    m.hits3 += r <= 3.0;
    m.hits10 += r <= 10.0;
  }
  const double n = static_cast<double>(ranks.size());
  m.mrr /= n;
  m.mr /= n;
  m.hits1 /= n;
  m.hits3 /= n;
  m.hits10 /= n;
  return m;
}

namespace {
std::uint64_t query_key(EntityId anchor, RelationId relation) {
  return (static_cast<std::uint64_t>(anchor) << 32) | relation;
}
}  // namespace

FilterIndex FilterIndex::build(const KnowledgeGraph& kg) {
  if (!kg.augmented()) throw ContractViolation("filtering needs the inverse-augmented graph");
  FilterIndex index;
  auto add_all = [&](std::span<const Triple> triples) {
    for (const Triple& t : triples) {
      index.answers_[query_key(t.head, t.relation)].push_back(t.tail);
      index.answers_[query_key(t.tail, kg.inverse_of(t.relation))].push_back(t.head);
    }
  };
  add_all(kg.raw_train());
  add_all(kg.valid());
  add_all(kg.test());
  for (auto& [key, list] : index.answers_) {
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
  }
  return index;
}

std::span<const EntityId> FilterIndex::answers(EntityId anchor, RelationId relation) const {
  const auto it = answers_.find(query_key(anchor, relation));
  if (it == answers_.end()) return {};
  return it->second;
}

std::vector<EvalCase> evaluation_cases(const KnowledgeGraph& kg, Split split) {
  const QAPairIndex train_pairs = extract_qa_pairs(kg.raw_train());
  auto count = [&](QueryDirection dir, EntityId anchor, RelationId rel) -> std::size_t {
    const QAPair* p = train_pairs.find(dir, anchor, rel);
    return p ? p->answers.size() : 0;
  };
  std::vector<EvalCase> cases;
  const std::span<const Triple> triples = split == Split::kTrain ? kg.raw_train() : std::span(kg.split(split));
  cases.reserve(2 * triples.size());
  for (const Triple& t : triples) {
    const RelationId inv = kg.augmented() ? kg.inverse_of(t.relation) : t.relation;
    cases.push_back({QueryDirection::kTail, {t.head, t.relation}, t.tail,
                     count(QueryDirection::kTail, t.head, t.relation), 0.0});
    cases.push_back({QueryDirection::kHead, {t.tail, inv}, t.head, count(QueryDirection::kHead, t.tail, t.relation),
                     0.0});
  }
  return cases;
}

EvalResult evaluate(Model& model, const KnowledgeGraph& kg, Split split, const RelationalAdjacency& adj,
                    const ProximityAggregation* prox, std::size_t batch_size) {
  if (!kg.augmented()) throw ContractViolation("evaluation needs the inverse-augmented graph");
  EvalResult result;
  result.cases = evaluation_cases(kg, split);
  const FilterIndex filter = FilterIndex::build(kg);
  std::vector<Query> queries;
  queries.reserve(result.cases.size());
  for (const auto& c : result.cases) queries.push_back(c.query);
  std::vector<EntityId> known;
  model.score_queries(adj, prox, queries, batch_size, [&](std::size_t i, std::span<const Real> scores) {
    EvalCase& c = result.cases[i];
    known.clear();
    for (EntityId e : filter.answers(c.query.anchor, c.query.relation)) {
      if (e != c.target) known.push_back(e);
    }
    c.rank = filtered_rank(scores, c.target, known, i).rank;
  });
  std::vector<double> ranks;
  ranks.reserve(result.cases.size());
  for (const auto& c : result.cases) ranks.push_back(c.rank);
  result.metrics = compute_metrics(ranks);
  return result;
}

std::size_t ntype_bin(std::size_t n) {
  if (n == 0) return 0;
  if (n == 1) return 1;
  if (n <= 10) return 2;
  if (n <= 100) return 3;
  if (n <= 500) return 4;
  return 5;
}

std::vector<NTypeRange> ntype_table(std::span<const EvalCase> cases) {
  std::vector<NTypeRange> table;
  for (auto label : kNTypeLabels) table.push_back({std::string(label), 0, 0.0});
  for (const auto& c : cases) ++table[ntype_bin(c.train_answers)].count;
  for (auto& r : table) {
    r.rate = cases.empty() ? 0.0 : static_cast<double>(r.count) / static_cast<double>(cases.size());
  }
  return table;
}

std::vector<NTypeRange> ntype_report(const KnowledgeGraph& kg, Split split) {
  return ntype_table(evaluation_cases(kg, split));
}

std::string ntype_tsv(std::span<const NTypeRange> table) {
  std::string out = "range\tcount\trate\n";
  std::size_t total = 0;
  char buf[32];
  for (const auto& r : table) {
    std::snprintf(buf, sizeof buf, "%.2f", r.rate);
    out += r.label + "\t" + std::to_string(r.count) + "\t" + buf + "\n";
    total += r.count;
  }
  out += "total\t" + std::to_string(total) + "\t" + (total ? "1.00" : "0.00") + "\n";
  return out;
}

nlohmann::json ntype_json(std::span<const NTypeRange> table) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : table) rows.push_back({{"range", r.label}, {"count", r.count}, {"rate", r.rate}});
  return rows;
}

std::vector<NTypeMrr> ntype_mrr_breakdown(std::span<const EvalCase> cases) {
  std::array<double, kNTypeLabels.size()> sum{};
  std::array<std::size_t, kNTypeLabels.size()> count{};
  for (const auto& c : cases) {
    const std::size_t b = ntype_bin(c.train_answers);
    sum[b] += 1.0 / c.rank;
    ++count[b];
  }
  std::vector<NTypeMrr> out;
  for (std::size_t b = 0; b < kNTypeLabels.size(); ++b) {
    if (count[b] == 0) continue;
    out.push_back({std::string(kNTypeLabels[b]), count[b], sum[b] / static_cast<double>(count[b])});
  }
  return out;
}

}  // namespace cpgnn
