#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace cpgnn {

using EntityId = std::uint32_t;
using RelationId = std::uint32_t;

struct Triple {
  EntityId head = 0;
  RelationId relation = 0;
  EntityId tail = 0;

  friend bool operator==(const Triple&, const Triple&) = default;
};

struct TripleHash {
  std::size_t operator()(const Triple& t) const noexcept;
};

// Bidirectional string <-> dense id map. Ids are assigned in first-seen order.
class Vocabulary {
 public:
  std::uint32_t intern(std::string_view surface);
  std::optional<std::uint32_t> find(std::string_view surface) const;
  const std::string& surface(std::uint32_t id) const { return names_.at(id); }
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::uint32_t> ids_;
};

enum class Split { kTrain, kValid, kTest };

std::string_view split_name(Split s);

inline constexpr std::string_view kInverseSuffix = "_reverse";

// Immutable after construction. Relation ids [0, raw_relation_count) are the
// dataset relations; when augmented, id r + raw_relation_count is r's inverse.
class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;
  KnowledgeGraph(Vocabulary entities, Vocabulary relations, std::vector<Triple> train, std::vector<Triple> valid,
                 std::vector<Triple> test);

  const Vocabulary& entities() const { return entities_; }
  const Vocabulary& relations() const { return relations_; }
  std::size_t num_entities() const { return entities_.size(); }
  std::size_t num_relations() const { return relations_.size(); }
  std::size_t raw_relation_count() const { return augmented_ ? relations_.size() / 2 : relations_.size(); }

  const std::vector<Triple>& split(Split s) const;
  const std::vector<Triple>& train() const { return train_; }
  const std::vector<Triple>& valid() const { return valid_; }
  const std::vector<Triple>& test() const { return test_; }

  bool augmented() const { return augmented_; }

  // Train triples as ingested, without the appended inverse edges.
  std::span<const Triple> raw_train() const;

  RelationId inverse_of(RelationId r) const;

  // Stable 64-bit content digest (vocabularies, splits, augmentation flag).
  std::uint64_t digest() const;

  friend KnowledgeGraph augment_inverse(const KnowledgeGraph& kg);
  friend KnowledgeGraph read_knowledge_graph(const std::filesystem::path& path);

 private:
  Vocabulary entities_;
  Vocabulary relations_;
  std::vector<Triple> train_;
  std::vector<Triple> valid_;
  std::vector<Triple> test_;
  bool augmented_ = false;
};

struct IngestionReport {
  std::size_t num_entities = 0;
  std::size_t num_relations = 0;
  std::size_t train = 0;
  std::size_t valid = 0;
  std::size_t test = 0;
  // Surface strings that never occur in the train split.
  std::vector<std::string> unseen_entities_valid;
  std::vector<std::string> unseen_entities_test;
  std::vector<std::string> unseen_relations;

  nlohmann::json to_json() const;
};

struct IngestResult {
  KnowledgeGraph graph;
  IngestionReport report;
};

// Reads `head<TAB>relation<TAB>tail` files. Interning order is first
// occurrence in train, then valid, then test. Throws ParseError on malformed
// lines and DataError on duplicate triples or name collisions.
// An empty valid or test path means that split is empty.
IngestResult ingest_dataset(const std::filesystem::path& train_path, const std::filesystem::path& valid_path,
                            const std::filesystem::path& test_path);

// Same, from in-memory text (one string per split).
IngestResult ingest_text(std::string_view train, std::string_view valid, std::string_view test);

// Appends (t, r^-1, h) for every train triple. Throws ContractViolation if the
// graph is already augmented.
KnowledgeGraph augment_inverse(const KnowledgeGraph& kg);

// Indices into kg.train() of edges kept for one batch. Each edge survives
// independently with probability 1 - drop_rate; a pure function of the seed.
std::vector<std::uint32_t> sample_edge_dropout(const KnowledgeGraph& kg, std::uint64_t seed, double drop_rate);

// Binary serialization used by the CLI between stages.
void write_knowledge_graph(const KnowledgeGraph& kg, const std::filesystem::path& path);
KnowledgeGraph read_knowledge_graph(const std::filesystem::path& path);

}  // namespace cpgnn
