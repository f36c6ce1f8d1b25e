#include <doctest.h>

#include <set>

#include "cpgnn/config.hpp"
#include "cpgnn/error.hpp"
#include "cpgnn/grid.hpp"
#include "cpgnn/proximity.hpp"
#include "test_support.hpp"

using namespace cpgnn;

namespace {

RunConfig tiny_base() {
  RunConfig c;
  c.off_grid = true;
  c.encoder.dim = 8;
  c.decoder.filters = 2;
  c.proximity.max_answer_set = 4;
  c.proximity.threshold = 0.5;
  c.train.batch_size = 16;
  c.train.learning_rate = 0.01;
  c.train.epochs = 2;
  return c;
}

}  // namespace

TEST_CASE("defaults sit on the published grid") {
  const RunConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.encoder.dim == 500);
  CHECK(c.train.batch_size == 256);
  CHECK(c.proximity.max_answer_set == 50);
  CHECK(c.proximity.threshold == 1.0);
}

TEST_CASE("config text round trips") {
  RunConfig c;
  c.set("learning_rate", "0.005");
  c.set("dim", "1000");
  c.set("weight_scheme", "gcn");
  c.set("train_path", "/data/train.txt");
  c.set("kg_only", "true");
  const RunConfig back = RunConfig::from_text(c.to_text());
  CHECK(back.to_text() == c.to_text());
  CHECK(back.digest() == c.digest());
  CHECK(back.get("learning_rate") == "0.005");
  CHECK(back.encoder.weight_scheme == WeightScheme::kGcn);
  CHECK(back.encoder.kg_only);
  for (const auto& f : config_fields()) CHECK(back.get(f.key) == c.get(f.key));
}

TEST_CASE("config parsing is strict") {
  CHECK_THROWS_AS(RunConfig::from_text("dimension=5\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_text("dim=5\ndim=6\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_text("dim\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_text("dim=abc\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_text("kg_only=maybe\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_text("learning_rate=0.1x\n"), ConfigError);
  const RunConfig c = RunConfig::from_text("# comment\n  dim = 1000  # trailing\n\n");
  CHECK(c.encoder.dim == 1000);
  CHECK_THROWS_AS(RunConfig::load("/nonexistent/config.txt"), ConfigError);
}

TEST_CASE("digest ignores file locations only") {
  RunConfig a, b;
  b.set("train_path", "elsewhere.txt");
  b.set("output_dir", "out2");
  CHECK(a.digest() == b.digest());
  b.set("seed", "7");
  CHECK(a.digest() != b.digest());
  RunConfig d;
  d.set("threshold", "3");
  CHECK(a.digest() != d.digest());
}

TEST_CASE("validation rejects invalid and off-grid values") {
  auto invalid = [](const char* key, const char* value, bool off_grid) {
    RunConfig c;
    c.off_grid = off_grid;
    c.set(key, value);
    CHECK_THROWS_AS(c.validate(), ConfigError);
  };
  invalid("max_answer_set", "2", true);
  invalid("max_answer_set", "2", false);
  invalid("edge_drop_rate", "1.5", true);
  invalid("batch_size", "0", true);
  invalid("kg_layers", "0", false);
  invalid("kg_layers", "4", false);
  invalid("dim", "64", false);
  invalid("learning_rate", "0.01", false);
  invalid("threshold", "2", false);

  RunConfig off;
  off.off_grid = true;
  off.set("dim", "64");
  off.set("kg_layers", "5");
  off.set("max_answer_set", "3");
  CHECK_NOTHROW(off.validate());
  RunConfig edge;
  edge.set("edge_drop_rate", "1");
  CHECK_NOTHROW(edge.validate());
}

TEST_CASE("published grid") {
  const GridSpec g = GridSpec::published();
  CHECK(g.size() == 3 * 3 * 2 * 3 * 3 * 5 * 4 * 4);
  std::set<std::uint64_t> digests;
  for (std::size_t t = 0; t < g.size(); t += 97) {
    const RunConfig c = g.trial_config(RunConfig{}, t);
    CHECK_NOTHROW(c.validate());
    digests.insert(c.digest());
  }
  CHECK(digests.size() == (g.size() + 96) / 97);
  const auto last = g.assignment(g.size() - 1);
  CHECK(last.back().second == g.axes.back().second.back());
  CHECK(g.assignment(1).back().second == g.axes.back().second[1]);
}

TEST_CASE("grid parsing") {
  const GridSpec g = GridSpec::parse("# tiny\nseed=1,2\nthreshold = 0.5, 1\n");
  CHECK(g.size() == 4);
  CHECK(g.assignment(1) == std::vector<std::pair<std::string, std::string>>{{"seed", "1"}, {"threshold", "1"}});
  CHECK_THROWS_AS(GridSpec::parse("seed=1\nseed=2\n"), ConfigError);
  CHECK_THROWS_AS(GridSpec::parse("seed=1,,2\n"), ConfigError);
  CHECK_THROWS_AS(GridSpec::parse("nope=1\n"), ConfigError);
  CHECK_THROWS_AS(GridSpec::parse("dim=big\n"), ConfigError);
  CHECK(GridSpec::parse("").size() == 1);
}

TEST_CASE("single point grid equals one training run") {
  const KnowledgeGraph raw = testing_support::random_graph(4, 20, 2, 80);
  const GridResult r = grid_search(raw, tiny_base(), GridSpec::parse(""), {});
  REQUIRE(r.trials.size() == 1);
  CHECK(r.planned == 1);
  CHECK(!r.incomplete);
  CHECK(r.trials[0].error.empty());
  CHECK(r.trials[0].config_digest == tiny_base().digest());
}

TEST_CASE("seed-only grid trains independent runs and ranks them") {
  const KnowledgeGraph raw = testing_support::random_graph(5, 20, 2, 80);
  const GridSpec spec = GridSpec::parse("seed=1,2,3\n");
  GridBudget budget;
  budget.jobs = 2;
  const GridResult r = grid_search(raw, tiny_base(), spec, budget);
  REQUIRE(r.trials.size() == 3);
  std::set<std::uint64_t> seeds, digests;
  for (std::size_t i = 0; i < r.trials.size(); ++i) {
    seeds.insert(r.trials[i].seed);
    digests.insert(r.trials[i].config_digest);
    if (i > 0) CHECK(r.trials[i - 1].valid_mrr >= r.trials[i].valid_mrr);
  }
  CHECK(seeds == std::set<std::uint64_t>{1, 2, 3});
  CHECK(digests.size() == 3);
  const std::string table = trial_table_tsv(r, spec);
  CHECK(table.find("seed") != std::string::npos);
  CHECK(table.find("# incomplete") == std::string::npos);

  GridBudget capped;
  capped.max_trials = 2;
  const GridResult partial = grid_search(raw, tiny_base(), spec, capped);
  CHECK(partial.trials.size() == 2);
  CHECK(partial.incomplete);
  CHECK(trial_table_tsv(partial, spec).find("# incomplete") != std::string::npos);
}

TEST_CASE("answer set cap changes the proximity matrix") {
  const KnowledgeGraph raw = testing_support::random_graph(6, 20, 2, 120);
  const auto qa = extract_qa_pairs(raw);
  const SPMMatrix m3 = accumulate_spm(qa, 3), m4 = accumulate_spm(qa, 4);
  CHECK(m3.entries() != m4.entries());
  const GridResult r = grid_search(raw, tiny_base(), GridSpec::parse("max_answer_set=3,4\n"), {});
  REQUIRE(r.trials.size() == 2);
  for (const auto& t : r.trials) CHECK(t.error.empty());
}
