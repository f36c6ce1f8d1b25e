#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace cpgnn {

// TSV text for the three splits, ready for ingest_text().
struct SyntheticDataset {
  std::string train;
  std::string valid;
  std::string test;
};

// 8 entities, 3 relations, 20 train triples; valid and test are empty.
SyntheticDataset toy_dataset();

// Entities grouped into clusters. Attribute entities point at random subsets
// of one cluster through the context relations, so co-members share many
// small answer sets. Anchor entities point at every member of their cluster
// through a separate relation; part of those facts is held out for valid and
// test.
struct ClusteredOptions {
  std::size_t clusters = 10;
  std::size_t members = 25;
  std::size_t attributes = 5;  // per cluster
  std::size_t context_relations = 4;
  std::size_t min_answers = 6;
  std::size_t max_answers = 12;
  double noise = 0.05;  // chance a context answer comes from another cluster
  std::size_t anchors = 1;  // per cluster
  // Of each anchor's members, held out exactly (rounded).
  double valid_fraction = 0.12;
  double test_fraction = 0.2;
  std::uint64_t seed = 1;
};

struct ClusteredDataset {
  SyntheticDataset text;
  std::string held_out_relation;
  // Cluster index of every member entity, keyed by surface name.
  std::vector<std::pair<std::string, std::size_t>> membership;
};

ClusteredDataset clustered_dataset(const ClusteredOptions& options);

}  // namespace cpgnn
