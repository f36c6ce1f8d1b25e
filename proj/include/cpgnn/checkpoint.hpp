#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cpgnn/model.hpp"
#include "cpgnn/optimizer.hpp"

namespace cpgnn {

// Position of a run. Together with the seed in the config it fixes every
// future shuffle, edge sample and dropout mask.
struct TrainerState {
  std::uint64_t epoch = 0;        // completed epochs
  std::uint64_t cursor = 0;       // next batch within the current epoch
  std::uint64_t global_step = 0;  // optimizer steps taken
  double epoch_loss_sum = 0.0;    // over the batches of the current epoch so far
  double best_valid_mrr = -1.0;
  std::int64_t best_epoch = -1;
  friend bool operator==(const TrainerState&, const TrainerState&) = default;
};

struct NamedTensor {
  std::string name;
  Tensor value;
  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

struct Checkpoint {
  std::string config_text;
  std::uint64_t config_digest = 0;
  std::uint64_t kg_digest = 0;
  std::vector<NamedTensor> parameters;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  OptimizerState optimizer_state;
  TrainerState trainer;
  // Best-validation parameters of an unfinished run; may be empty.
  std::vector<NamedTensor> best_parameters;
  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

std::vector<NamedTensor> snapshot_parameters(Model& model);
// Names and shapes must match the model exactly.
void load_parameters(Model& model, const std::vector<NamedTensor>& params);

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace cpgnn
