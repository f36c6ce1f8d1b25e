#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "cpgnn/checkpoint.hpp"
#include "cpgnn/config.hpp"
#include "cpgnn/eval.hpp"
#include "cpgnn/model.hpp"
#include "cpgnn/optimizer.hpp"

namespace cpgnn {

// Distinct (anchor, relation) queries of the augmented train split with their
// answer lists, in order of first occurrence.
class QueryIndex {
 public:
  static QueryIndex build(const KnowledgeGraph& kg);
  std::size_t size() const { return queries_.size(); }
  const Query& query(std::size_t i) const { return queries_[i]; }
  std::span<const EntityId> answers(std::size_t i) const { return answers_[i]; }

 private:
  std::vector<Query> queries_;
  std::vector<std::vector<EntityId>> answers_;
};

struct QueryBatch {
  std::vector<Query> queries;
  Tensor targets;  // [B, n_e], (1 - eps) * multi-hot + eps / n_e
};

// Fisher-Yates permutation of [0, n) drawn from (seed, epoch).
std::vector<std::uint32_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch);

QueryBatch make_batch(const QueryIndex& index, std::span<const std::uint32_t> ids, std::size_t num_entities,
                      Real label_smoothing);

// All batches of one epoch; the last one may be short.
std::vector<QueryBatch> build_batches(const KnowledgeGraph& kg, const QueryIndex& index, std::size_t batch_size,
                                      Real label_smoothing, std::uint64_t seed, std::uint64_t epoch);

struct EpochRecord {
  std::uint64_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  std::optional<double> valid_mrr;
  double wall_time = 0.0;  // seconds since training started

  nlohmann::json to_json() const;
};

// Runs the optimization loop for an augmented graph. The proximity graph may
// be null only for kg_only models.
class Trainer {
 public:
  Trainer(const KnowledgeGraph& kg, const ProximityGraph* pgraph, const RunConfig& config);

  Model& model() { return model_; }
  const RunConfig& config() const { return config_; }
  const TrainerState& state() const { return state_; }
  std::size_t batches_per_epoch() const;

  // One optimizer step on the next batch; returns its loss. Throws
  // NumericDivergence when the loss is not finite.
  double step();
  // Finishes the current epoch, validates if due and updates the best copy.
  EpochRecord run_epoch();
  // Remaining epochs up to config.train.epochs.
  std::vector<EpochRecord> train(const std::function<void(const EpochRecord&)>& on_epoch = {});

  Metrics validate();

  Checkpoint checkpoint();
  // Parameters with the best validation MRR so far (current ones when
  // validation never ran).
  Checkpoint best_checkpoint();
  void restore(const Checkpoint& ckpt);

  const RelationalAdjacency& full_adjacency() const { return full_adj_; }
  const ProximityAggregation* proximity() const { return prox_ ? &*prox_ : nullptr; }

 private:
  const KnowledgeGraph& kg_;
  const ProximityGraph* pgraph_;
  RunConfig config_;
  Model model_;
  Optimizer optimizer_;
  QueryIndex queries_;
  RelationalAdjacency full_adj_;
  std::optional<ProximityAggregation> prox_;
  TrainerState state_;
  std::vector<std::uint32_t> order_;
  std::uint64_t order_epoch_ = ~std::uint64_t{0};
  std::vector<NamedTensor> best_;
  double elapsed_ = 0.0;
};

}  // namespace cpgnn
