#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cpgnn/config.hpp"

namespace cpgnn {

// Value sets per config key; trials are the cartesian product with the last
// axis varying fastest.
struct GridSpec {
  std::vector<std::pair<std::string, std::vector<std::string>>> axes;

  // The published tuning grid.
  static GridSpec published();
  // Lines of `key=v1,v2,...`; '#' starts a comment.
  static GridSpec parse(std::string_view text);

  std::size_t size() const;
  std::vector<std::pair<std::string, std::string>> assignment(std::size_t trial) const;
  RunConfig trial_config(const RunConfig& base, std::size_t trial) const;
};

struct GridBudget {
  std::size_t max_trials = 0;  // 0 = unlimited
  double max_seconds = 0.0;    // 0 = unlimited; checked before each trial starts
  unsigned jobs = 1;
};

struct TrialResult {
  std::size_t trial = 0;
  std::vector<std::pair<std::string, std::string>> assignment;
  std::uint64_t seed = 0;
  std::uint64_t config_digest = 0;
  double valid_mrr = 0.0;
  std::int64_t best_epoch = -1;
  double seconds = 0.0;
  std::string error;  // non-empty when the trial failed
};

struct GridResult {
  std::vector<TrialResult> trials;  // best validation MRR first
  std::size_t planned = 0;
  bool incomplete = false;
};

// Trains every trial on `raw_kg` (un-augmented) and ranks by validation MRR.
GridResult grid_search(const KnowledgeGraph& raw_kg, const RunConfig& base, const GridSpec& spec,
                       const GridBudget& budget);

std::string trial_table_tsv(const GridResult& result, const GridSpec& spec);

}  // namespace cpgnn
