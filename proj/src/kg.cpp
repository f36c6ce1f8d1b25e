#include "cpgnn/kg.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "cpgnn/binary_io.hpp"
#include "cpgnn/error.hpp"
#include "cpgnn/random.hpp"

namespace cpgnn {

std::size_t TripleHash::operator()(const Triple& t) const noexcept {
  return static_cast<std::size_t>(hash_key({t.head, t.relation, t.tail}));
}

std::uint32_t Vocabulary::intern(std::string_view surface) {
  auto it = ids_.find(std::string(surface));
  if (it != ids_.end()) return it->second;
  const auto id = static_cast<std::uint32_t>(names_.size());
  names_.emplace_back(surface);
  ids_.emplace(names_.back(), id);
  return id;
}

std::optional<std::uint32_t> Vocabulary::find(std::string_view surface) const {
  auto it = ids_.find(std::string(surface));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

std::string_view split_name(Split s) {
  switch (s) {
    case Split::kTrain:
      return "train";
    case Split::kValid:
      return "valid";
    case Split::kTest:
      return "test";
  }
  return "?";
}

KnowledgeGraph::KnowledgeGraph(Vocabulary entities, Vocabulary relations, std::vector<Triple> train,
                               std::vector<Triple> valid, std::vector<Triple> test)
    : entities_(std::move(entities)),
      relations_(std::move(relations)),
      train_(std::move(train)),
      valid_(std::move(valid)),
      test_(std::move(test)) {}

const std::vector<Triple>& KnowledgeGraph::split(Split s) const {
  switch (s) {
    case Split::kTrain:
      return train_;
    case Split::kValid:
      return valid_;
    case Split::kTest:
      return test_;
  }
  throw ContractViolation("unknown split");
}

std::span<const Triple> KnowledgeGraph::raw_train() const {
  const std::size_t n = augmented_ ? train_.size() / 2 : train_.size();
  return {train_.data(), n};
}

RelationId KnowledgeGraph::inverse_of(RelationId r) const {
  if (!augmented_) throw ContractViolation("inverse relations exist only after augmentation");
  const auto raw = static_cast<RelationId>(raw_relation_count());
  if (r >= 2 * raw) throw ContractViolation("relation id out of range");
  return r < raw ? r + raw : r - raw;
}

std::uint64_t KnowledgeGraph::digest() const {
  Fnv1a h;
  for (const auto& n : entities_.names()) {
    h.update(n);
    h.update("\n");
  }
  h.update("\x1f");
  for (const auto& n : relations_.names()) {
    h.update(n);
    h.update("\n");
  }
  for (const auto* split : {&train_, &valid_, &test_}) {
    h.update_value(split->size());
    h.update(split->data(), split->size() * sizeof(Triple));
  }
  h.update_value(augmented_);
  return h.digest();
}

nlohmann::json IngestionReport::to_json() const {
  return {
      {"num_entities", num_entities},
      {"num_relations", num_relations},
      {"train", train},
      {"valid", valid},
      {"test", test},
      {"unseen_entities_valid", unseen_entities_valid},
      {"unseen_entities_test", unseen_entities_test},
      {"unseen_relations", unseen_relations},
  };
}

namespace {

struct RawTriple {
  std::string_view head, relation, tail;
};

// Splits on LF, strips a trailing CR, skips blank lines.
template <typename Fn>
void for_each_line(std::string_view text, const std::string& source, Fn&& fn) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;

    RawTriple raw;
    std::string_view fields[3];
    std::size_t count = 0;
    std::size_t start = 0;
    while (true) {
      const std::size_t tab = line.find('\t', start);
      const std::string_view field = line.substr(start, tab == std::string_view::npos ? line.size() - start : tab - start);
      if (count < 3) fields[count] = field;
      ++count;
      if (tab == std::string_view::npos) break;
      start = tab + 1;
    }
    if (count != 3) {
      throw ParseError(source, line_no, "expected 3 tab-separated fields, found " + std::to_string(count));
    }
    for (const auto& f : fields) {
      if (f.empty()) throw ParseError(source, line_no, "empty field");
    }
    raw.head = fields[0];
    raw.relation = fields[1];
    raw.tail = fields[2];
    fn(raw);
  }
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

IngestResult ingest_impl(const std::string_view (&texts)[3], const std::string (&sources)[3]) {
  Vocabulary entities;
  Vocabulary relations;
  std::vector<Triple> splits[3];
  std::unordered_set<Triple, TripleHash> seen[3];

  for (int s = 0; s < 3; ++s) {
    for_each_line(texts[s], sources[s], [&](const RawTriple& raw) {
      Triple t{entities.intern(raw.head), relations.intern(raw.relation), entities.intern(raw.tail)};
      if (!seen[s].insert(t).second) {
        throw DataError(sources[s] + ": duplicate triple " + std::string(raw.head) + "\t" + std::string(raw.relation) +
                        "\t" + std::string(raw.tail));
      }
      splits[s].push_back(t);
    });
  }

  for (int a = 0; a < 3; ++a) {
    for (int b = a + 1; b < 3; ++b) {
      const auto& small = seen[a].size() < seen[b].size() ? seen[a] : seen[b];
      const auto& large = seen[a].size() < seen[b].size() ? seen[b] : seen[a];
      for (const auto& t : small) {
        if (large.contains(t)) {
          throw DataError("triple " + entities.surface(t.head) + "\t" + relations.surface(t.relation) + "\t" +
                          entities.surface(t.tail) + " occurs in both " + sources[a] + " and " + sources[b]);
        }
      }
    }
  }

  for (const auto& name : relations.names()) {
    if (relations.find(name + std::string(kInverseSuffix))) {
      throw DataError("relation name collides with reserved inverse name: " + name + std::string(kInverseSuffix));
    }
  }

  IngestionReport report;
  report.num_entities = entities.size();
  report.num_relations = relations.size();
  report.train = splits[0].size();
  report.valid = splits[1].size();
  report.test = splits[2].size();

  std::vector<bool> entity_in_train(entities.size(), false);
  std::vector<bool> relation_in_train(relations.size(), false);
  for (const auto& t : splits[0]) {
    entity_in_train[t.head] = entity_in_train[t.tail] = true;
    relation_in_train[t.relation] = true;
  }
  auto collect_unseen = [&](const std::vector<Triple>& split, std::vector<std::string>& out) {
    std::vector<bool> listed(entities.size(), false);
    for (const auto& t : split) {
      for (EntityId e : {t.head, t.tail}) {
        if (!entity_in_train[e] && !listed[e]) {
          listed[e] = true;
          out.push_back(entities.surface(e));
        }
      }
    }
  };
  collect_unseen(splits[1], report.unseen_entities_valid);
  collect_unseen(splits[2], report.unseen_entities_test);
  for (std::size_t r = 0; r < relations.size(); ++r) {
    if (!relation_in_train[r]) report.unseen_relations.push_back(relations.surface(static_cast<RelationId>(r)));
  }

  return {KnowledgeGraph(std::move(entities), std::move(relations), std::move(splits[0]), std::move(splits[1]),
                         std::move(splits[2])),
          std::move(report)};
}

}  // namespace

IngestResult ingest_dataset(const std::filesystem::path& train_path, const std::filesystem::path& valid_path,
                            const std::filesystem::path& test_path) {
  // Valid and test may be omitted (empty path); train is always read.
  auto optional = [](const std::filesystem::path& p) { return p.empty() ? std::string() : slurp(p); };
  const std::string contents[3] = {slurp(train_path), optional(valid_path), optional(test_path)};
  const std::string_view texts[3] = {contents[0], contents[1], contents[2]};
  const std::string sources[3] = {train_path.string(), valid_path.string(), test_path.string()};
  return ingest_impl(texts, sources);
}

IngestResult ingest_text(std::string_view train, std::string_view valid, std::string_view test) {
  const std::string_view texts[3] = {train, valid, test};
  const std::string sources[3] = {"<train>", "<valid>", "<test>"};
  return ingest_impl(texts, sources);
}

KnowledgeGraph augment_inverse(const KnowledgeGraph& kg) {
  if (kg.augmented_) throw ContractViolation("knowledge graph is already augmented");
  KnowledgeGraph out = kg;
  const auto raw = static_cast<RelationId>(kg.relations_.size());
  for (RelationId r = 0; r < raw; ++r) {
    out.relations_.intern(kg.relations_.surface(r) + std::string(kInverseSuffix));
  }
  if (out.relations_.size() != 2 * static_cast<std::size_t>(raw)) {
    throw DataError("inverse relation names collide with existing relations");
  }
  out.train_.reserve(2 * kg.train_.size());
  for (const auto& t : kg.train_) out.train_.push_back({t.tail, t.relation + raw, t.head});
  out.augmented_ = true;
  return out;
}

std::vector<std::uint32_t> sample_edge_dropout(const KnowledgeGraph& kg, std::uint64_t seed, double drop_rate) {
  if (!(drop_rate >= 0.0 && drop_rate <= 1.0)) throw ContractViolation("drop_rate must lie in [0, 1]");
  if (!kg.augmented()) throw ContractViolation("edge dropout expects an augmented graph");
  std::vector<std::uint32_t> kept;
  const std::size_t n = kg.train().size();
  kept.reserve(static_cast<std::size_t>(static_cast<double>(n) * (1.0 - drop_rate)) + 1);
  for (std::size_t i = 0; i < n; ++i) {
    if (uniform_at({seed, 0x65646765ULL, i}) >= drop_rate) kept.push_back(static_cast<std::uint32_t>(i));
  }
  return kept;
}

namespace {
constexpr std::string_view kKgMagic("CPGNNKG\0", 8);
constexpr std::uint32_t kKgVersion = 1;

void write_vocab(BinaryWriter& w, const Vocabulary& v) {
  w.put<std::uint64_t>(v.size());
  for (const auto& n : v.names()) w.put_string(n);
}

Vocabulary read_vocab(BinaryReader& r) {
  Vocabulary v;
  const auto n = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < n; ++i) v.intern(r.get_string());
  if (v.size() != n) throw DataError("duplicate vocabulary entry in " + r.path().string());
  return v;
}
}  // namespace

void write_knowledge_graph(const KnowledgeGraph& kg, const std::filesystem::path& path) {
  BinaryWriter w(path);
  w.put_bytes(std::string_view(kKgMagic.data(), 8));
  w.put(kKgVersion);
  w.put<std::uint8_t>(kg.augmented() ? 1 : 0);
  write_vocab(w, kg.entities());
  write_vocab(w, kg.relations());
  for (Split s : {Split::kTrain, Split::kValid, Split::kTest}) {
    const auto& split = kg.split(s);
    w.put<std::uint64_t>(split.size());
    w.put_array(split.data(), split.size());
  }
  w.finish();
}

KnowledgeGraph read_knowledge_graph(const std::filesystem::path& path) {
  BinaryReader r(path);
  r.expect_magic(std::string_view(kKgMagic.data(), 8));
  if (const auto version = r.get<std::uint32_t>(); version != kKgVersion) {
    throw DataError("unsupported knowledge graph version " + std::to_string(version) + " in " + path.string());
  }
  KnowledgeGraph kg;
  kg.augmented_ = r.get<std::uint8_t>() != 0;
  kg.entities_ = read_vocab(r);
  kg.relations_ = read_vocab(r);
  for (auto* split : {&kg.train_, &kg.valid_, &kg.test_}) {
    const auto n = r.get<std::uint64_t>();
    split->resize(static_cast<std::size_t>(n));
    r.get_array(split->data(), split->size());
    for (const auto& t : *split) {
      if (t.head >= kg.entities_.size() || t.tail >= kg.entities_.size() || t.relation >= kg.relations_.size()) {
        throw DataError("triple id out of range in " + path.string());
      }
    }
  }
  return kg;
}

}  // namespace cpgnn
