#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "cpgnn/model.hpp"
#include "cpgnn/optimizer.hpp"

namespace cpgnn {

struct ProximityConfig {
  int max_answer_set = 50;  // M
  double threshold = 1.0;   // I, edges need SPM strictly above it
};

struct TrainConfig {
  std::size_t batch_size = 256;
  Real learning_rate = Real(3e-4);
  OptimizerKind optimizer = OptimizerKind::kAdam;
  int epochs = 100;
  double edge_drop_rate = 0.3;
  // Also drop proximity edges at the same rate each batch.
  bool drop_proximity_edges = false;
  // Validation MRR every this many epochs; 0 disables (last epoch is kept).
  int eval_every = 1;
  std::uint64_t seed = 42;
};

// Everything that determines a run. Serialized as flat `key=value` lines.
struct RunConfig {
  std::string train_path;
  std::string valid_path;
  std::string test_path;
  std::string kg_path;
  std::string proximity_path;
  std::string output_dir = "runs";

  ProximityConfig proximity;
  EncoderConfig encoder;
  DecoderConfig decoder;
  TrainConfig train;
  std::size_t eval_batch_size = 256;
  // Permit values outside the published tuning grid.
  bool off_grid = false;

  RunConfig();

  ModelConfig model_config() const { return {encoder, decoder}; }

  // Canonical text: every key once, in table order.
  std::string to_text() const;
  // Applies the lines of `text` on top of the defaults. Unknown or repeated
  // keys and badly typed values raise ConfigError.
  static RunConfig from_text(std::string_view text);
  static RunConfig load(const std::string& path);
  void set(std::string_view key, std::string_view value);
  std::string get(std::string_view key) const;

  // Digest of the output-determining keys (file locations excluded).
  std::uint64_t digest() const;
  void validate() const;
};

struct ConfigField {
  std::string_view key;
  std::string_view help;
  bool is_path;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
};

const std::vector<ConfigField>& config_fields();

// Shortest text that parses back to the same value.
std::string format_real(double v);

}  // namespace cpgnn
