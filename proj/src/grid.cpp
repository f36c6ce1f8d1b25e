#include "cpgnn/grid.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <map>
#include <mutex>
#include <thread>

#include "cpgnn/binary_io.hpp"
#include "cpgnn/error.hpp"
#include "cpgnn/trainer.hpp"

namespace cpgnn {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace

GridSpec GridSpec::published() {
  GridSpec g;
  g.axes = {{"batch_size", {"256", "512", "1024"}},
            {"learning_rate", {"0.0001", "0.0003", "0.005"}},
            {"dim", {"500", "1000"}},
            {"kg_layers", {"1", "2", "3"}},
            {"proximity_layers", {"1", "2", "3"}},
            {"edge_drop_rate", {"0.1", "0.3", "0.5", "0.7", "1"}},
            {"max_answer_set", {"25", "50", "100", "500"}},
            {"threshold", {"0.5", "1", "3", "5"}}};
  return g;
}

GridSpec GridSpec::parse(std::string_view text) {
  GridSpec g;
  RunConfig probe;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto h = line.find('#'); h != std::string_view::npos) line = line.substr(0, h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError("grid line " + std::to_string(line_no) + ": expected key=v1,v2");
    const std::string key(trim(line.substr(0, eq)));
    for (const auto& [k, v] : g.axes) {
      if (k == key) throw ConfigError("grid key '" + key + "' repeated");
    }
    std::vector<std::string> values;
    std::string_view rest = line.substr(eq + 1);
    while (true) {
      const auto comma = rest.find(',');
      const auto item = trim(rest.substr(0, comma));
      if (item.empty()) throw ConfigError("grid key '" + key + "' has an empty value");
      probe.set(key, item);  // type check
      values.emplace_back(item);
      if (comma == std::string_view::npos) break;
      rest = rest.substr(comma + 1);
    }
    g.axes.emplace_back(key, std::move(values));
  }
  return g;
}

std::size_t GridSpec::size() const {
  std::size_t n = 1;
  for (const auto& [k, v] : axes) n *= v.size();
  return n;
}

std::vector<std::pair<std::string, std::string>> GridSpec::assignment(std::size_t trial) const {
  std::vector<std::pair<std::string, std::string>> out(axes.size());
  for (std::size_t a = axes.size(); a-- > 0;) {
    const auto& values = axes[a].second;
    out[a] = {axes[a].first, values[trial % values.size()]};
    trial /= values.size();
  }
  return out;
}

RunConfig GridSpec::trial_config(const RunConfig& base, std::size_t trial) const {
  RunConfig c = base;
  for (const auto& [k, v] : assignment(trial)) c.set(k, v);
  return c;
}

GridResult grid_search(const KnowledgeGraph& raw_kg, const RunConfig& base, const GridSpec& spec,
                       const GridBudget& budget) {
  if (raw_kg.augmented()) throw ContractViolation("grid search expects the raw graph");
  GridResult result;
  result.planned = spec.size();
  std::size_t runnable = result.planned;
  if (budget.max_trials > 0 && budget.max_trials < runnable) runnable = budget.max_trials;

  std::vector<RunConfig> configs;
  for (std::size_t t = 0; t < runnable; ++t) {
    configs.push_back(spec.trial_config(base, t));
    configs.back().validate();
  }

  const KnowledgeGraph kg = augment_inverse(raw_kg);
  const QAPairIndex pairs = extract_qa_pairs(raw_kg);
  std::map<std::pair<int, double>, ProximityGraph> graphs;
  std::map<int, SPMMatrix> spms;
  for (const auto& c : configs) {
    if (c.encoder.kg_only) continue;
    const int m = c.proximity.max_answer_set;
    const auto key = std::make_pair(m, c.proximity.threshold);
    if (graphs.count(key)) continue;
    auto it = spms.find(m);
    if (it == spms.end()) it = spms.emplace(m, accumulate_spm(pairs, m)).first;
    graphs.emplace(key, build_proximity_graph(it->second, kg.num_entities(), key.second));
  }

  const auto started = std::chrono::steady_clock::now();
  std::vector<std::optional<TrialResult>> slots(runnable);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> out_of_time{false};
  auto worker = [&]() {
    while (true) {
      const std::size_t t = next.fetch_add(1);
      if (t >= runnable) return;
      const double spent = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      if (budget.max_seconds > 0 && spent >= budget.max_seconds) {
        out_of_time = true;
        return;
      }
      const RunConfig& c = configs[t];
      TrialResult r;
      r.trial = t;
      r.assignment = spec.assignment(t);
      r.seed = c.train.seed;
      r.config_digest = c.digest();
      const auto t0 = std::chrono::steady_clock::now();
      try {
        const ProximityGraph* g =
            c.encoder.kg_only ? nullptr : &graphs.at({c.proximity.max_answer_set, c.proximity.threshold});
        Trainer trainer(kg, g, c);
        trainer.train();
        if (trainer.state().best_epoch >= 0) {
          r.valid_mrr = trainer.state().best_valid_mrr;
          r.best_epoch = trainer.state().best_epoch;
        } else {
          r.valid_mrr = trainer.validate().mrr;
          r.best_epoch = static_cast<std::int64_t>(trainer.state().epoch);
        }
      } catch (const NumericDivergence& e) {
        r.error = e.what();
      }
      r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      slots[t] = std::move(r);
    }
  };
  const unsigned jobs = std::max(1u, budget.jobs);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& s : slots) {
    if (s) result.trials.push_back(std::move(*s));
  }
  result.incomplete = result.trials.size() < result.planned || out_of_time;
  std::stable_sort(result.trials.begin(), result.trials.end(), [](const TrialResult& a, const TrialResult& b) {
    if (a.error.empty() != b.error.empty()) return a.error.empty();
    return a.valid_mrr > b.valid_mrr;
  });
  return result;
}

std::string trial_table_tsv(const GridResult& result, const GridSpec& spec) {
  std::string out;
  if (result.incomplete) {
    out += "# incomplete: " + std::to_string(result.trials.size()) + " of " + std::to_string(result.planned) +
           " trials ran before the budget was exhausted\n";
  }
  out += "rank\ttrial";
  for (const auto& [k, v] : spec.axes) out += "\t" + k;
  out += "\tseed\tconfig_digest\tvalid_mrr\tbest_epoch\tseconds\tstatus\n";
  std::size_t rank = 0;
  for (const auto& t : result.trials) {
    out += std::to_string(++rank) + "\t" + std::to_string(t.trial);
    for (const auto& [k, v] : t.assignment) out += "\t" + v;
    out += "\t" + std::to_string(t.seed) + "\t" + hex_digest(t.config_digest) + "\t" + format_real(t.valid_mrr) +
           "\t" + std::to_string(t.best_epoch) + "\t" + format_real(t.seconds) + "\t" +
           (t.error.empty() ? "ok" : "diverged") + "\n";
  }
  return out;
}

}  // namespace cpgnn
