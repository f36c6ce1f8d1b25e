#include "cpgnn/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <unordered_map>

#include "cpgnn/binary_io.hpp"
#include "cpgnn/error.hpp"
#include "cpgnn/random.hpp"

namespace cpgnn {

QueryIndex QueryIndex::build(const KnowledgeGraph& kg) {
  if (!kg.augmented()) throw ContractViolation("training queries need the inverse-augmented graph");
  QueryIndex index;
  std::unordered_map<std::uint64_t, std::size_t> slot;
  for (const Triple& t : kg.train()) {
    const std::uint64_t key = (static_cast<std::uint64_t>(t.head) << 32) | t.relation;
    auto [it, fresh] = slot.try_emplace(key, index.queries_.size());
    if (fresh) {
      index.queries_.push_back({t.head, t.relation});
      index.answers_.emplace_back();
    }
    index.answers_[it->second].push_back(t.tail);
  }
  for (auto& a : index.answers_) {
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
  }
  return index;
}

std::vector<std::uint32_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::uint32_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<std::uint32_t>(i);
  CounterRng rng(hash_key({seed, 0x73687566ULL, epoch}));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

QueryBatch make_batch(const QueryIndex& index, std::span<const std::uint32_t> ids, std::size_t num_entities,
                      Real label_smoothing) {
  QueryBatch b;
  const Real base = label_smoothing / static_cast<Real>(num_entities);
  b.targets = Tensor({ids.size(), num_entities}, base);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    b.queries.push_back(index.query(ids[i]));
    for (EntityId e : index.answers(ids[i])) b.targets.at(i, e) = (Real(1) - label_smoothing) + base;
  }
  return b;
}

std::vector<QueryBatch> build_batches(const KnowledgeGraph& kg, const QueryIndex& index, std::size_t batch_size,
                                      Real label_smoothing, std::uint64_t seed, std::uint64_t epoch) {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  const auto order = epoch_order(index.size(), seed, epoch);
  std::vector<QueryBatch> out;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::span<const std::uint32_t> ids(order.data() + start, std::min(batch_size, order.size() - start));
    out.push_back(make_batch(index, ids, kg.num_entities(), label_smoothing));
  }
  return out;
}

nlohmann::json EpochRecord::to_json() const {
  nlohmann::json j{{"epoch", epoch}, {"train_loss", train_loss}, {"wall_time", wall_time}};
  j["valid_mrr"] = valid_mrr ? nlohmann::json(*valid_mrr) : nlohmann::json(nullptr);
  return j;
}

Trainer::Trainer(const KnowledgeGraph& kg, const ProximityGraph* pgraph, const RunConfig& config)
    : kg_(kg),
      pgraph_(pgraph),
      config_(config),
      model_(config.model_config(), kg.num_entities(), kg.num_relations(), config.train.seed),
      optimizer_(config.train.optimizer, config.train.learning_rate),
      queries_(QueryIndex::build(kg)),
      full_adj_(RelationalAdjacency::build(kg)) {
  config_.validate();
  if (!config_.encoder.kg_only) {
    if (!pgraph) throw ConfigError("a proximity graph is required unless kg_only=true");
    if (pgraph->num_entities() != kg.num_entities()) {
      throw DataError("proximity graph covers " + std::to_string(pgraph->num_entities()) +
                      " entities, knowledge graph has " + std::to_string(kg.num_entities()));
    }
    prox_ = ProximityAggregation::build(*pgraph);
  }
}

std::size_t Trainer::batches_per_epoch() const {
  const std::size_t b = config_.train.batch_size;
  return (queries_.size() + b - 1) / b;
}

double Trainer::step() {
  const auto started = std::chrono::steady_clock::now();
  const TrainConfig& tc = config_.train;
  if (order_epoch_ != state_.epoch) {
    order_ = epoch_order(queries_.size(), tc.seed, state_.epoch);
    order_epoch_ = state_.epoch;
  }
  const std::size_t start = state_.cursor * tc.batch_size;
  const std::span<const std::uint32_t> ids(order_.data() + start, std::min(tc.batch_size, order_.size() - start));
  const QueryBatch batch = make_batch(queries_, ids, kg_.num_entities(), config_.decoder.label_smoothing);

  const std::uint64_t step_seed = hash_key({tc.seed, 0x65646765ULL, state_.global_step});
  RelationalAdjacency adj =
      tc.edge_drop_rate > 0 ? RelationalAdjacency::build(kg_, sample_edge_dropout(kg_, step_seed, tc.edge_drop_rate))
                            : full_adj_;
  std::optional<ProximityAggregation> masked;
  if (prox_ && tc.drop_proximity_edges && tc.edge_drop_rate > 0) {
    masked = ProximityAggregation::build(*pgraph_, step_seed, tc.edge_drop_rate);
  }

  auto params = model_.parameters();
  for (Parameter* p : params) p->zero_grad();
  Tape tape;
  Var probs = model_.forward(tape, adj, masked ? &*masked : proximity(), batch.queries, true,
                             hash_key({tc.seed, 0x636f6e76ULL}), state_.global_step);
  Var loss = ops::bce_loss(probs, tape.constant(batch.targets));
  const double value = static_cast<double>(loss.value()[0]);
  if (!std::isfinite(value)) {
    throw NumericDivergence("training loss became " + std::to_string(value) + " at step " +
                            std::to_string(state_.global_step));
  }
  tape.backward(loss);
  optimizer_.step(params);

  ++state_.global_step;
  state_.epoch_loss_sum += value;
  if (++state_.cursor == batches_per_epoch()) {
    state_.cursor = 0;
    ++state_.epoch;
  }
  elapsed_ += std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return value;
}

Metrics Trainer::validate() {
  return evaluate(model_, kg_, Split::kValid, full_adj_, proximity(), config_.eval_batch_size).metrics;
}

EpochRecord Trainer::run_epoch() {
  const std::uint64_t epoch = state_.epoch;
  const std::size_t batches = batches_per_epoch();
  while (state_.epoch == epoch && batches > 0) step();
  if (batches == 0) ++state_.epoch;
  EpochRecord rec;
  rec.epoch = state_.epoch;
  rec.train_loss = batches ? state_.epoch_loss_sum / static_cast<double>(batches) : 0.0;
  state_.epoch_loss_sum = 0.0;
  const int every = config_.train.eval_every;
  if (every > 0 && rec.epoch % static_cast<std::uint64_t>(every) == 0 && !kg_.valid().empty()) {
    const auto started = std::chrono::steady_clock::now();
    rec.valid_mrr = validate().mrr;
    elapsed_ += std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (*rec.valid_mrr > state_.best_valid_mrr) {
      state_.best_valid_mrr = *rec.valid_mrr;
      state_.best_epoch = static_cast<std::int64_t>(rec.epoch);
      best_ = snapshot_parameters(model_);
    }
  }
  rec.wall_time = elapsed_;
  return rec;
}

std::vector<EpochRecord> Trainer::train(const std::function<void(const EpochRecord&)>& on_epoch) {
  std::vector<EpochRecord> log;
  while (state_.epoch < static_cast<std::uint64_t>(config_.train.epochs)) {
    log.push_back(run_epoch());
    if (on_epoch) on_epoch(log.back());
  }
  return log;
}

Checkpoint Trainer::checkpoint() {
  Checkpoint c;
  c.config_text = config_.to_text();
  c.config_digest = config_.digest();
  c.kg_digest = kg_.digest();
  c.parameters = snapshot_parameters(model_);
  c.optimizer = optimizer_.kind();
  c.optimizer_state = optimizer_.state();
  c.trainer = state_;
  c.best_parameters = best_;
  return c;
}

Checkpoint Trainer::best_checkpoint() {
  Checkpoint c = checkpoint();
  if (!best_.empty()) c.parameters = best_;
  c.best_parameters.clear();
  return c;
}

void Trainer::restore(const Checkpoint& ckpt) {
  if (ckpt.config_digest != config_.digest()) {
    throw ConfigError("checkpoint was written under config digest " + hex_digest(ckpt.config_digest) +
                      ", this run has " + hex_digest(config_.digest()));
  }
  if (ckpt.kg_digest != kg_.digest()) throw DataError("checkpoint was trained on a different knowledge graph");
  load_parameters(model_, ckpt.parameters);
  optimizer_.set_state(ckpt.optimizer_state);
  state_ = ckpt.trainer;
  best_ = ckpt.best_parameters;
}

}  // namespace cpgnn
