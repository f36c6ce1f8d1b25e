#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cpgnn/cli.hpp"
#include "cpgnn/synthetic.hpp"
#include "test_support.hpp"

using namespace cpgnn;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "cpgnn");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

// Toy splits on disk plus a fresh output directory.
struct Workspace {
  fs::path dir;
  explicit Workspace(const std::string& name) {
    dir = fs::temp_directory_path() / ("cpgnn_test_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    const auto ds = toy_dataset();
    write(dir / "train.txt", ds.train);
    write(dir / "valid.txt", "e0\tlikes\te3\n");
    write(dir / "test.txt", "e1\tknows\te2\n");
  }
  std::vector<std::string> data() const {
    return {"--train_path", (dir / "train.txt").string(), "--valid_path", (dir / "valid.txt").string(),
            "--test_path",  (dir / "test.txt").string(),  "--output_dir", (dir / "out").string()};
  }
  std::vector<std::string> with(std::vector<std::string> head, const std::vector<std::string>& extra = {}) const {
    for (const auto& a : data()) head.push_back(a);
    for (const auto& a : extra) head.push_back(a);
    return head;
  }
};

const std::vector<std::string> kSmall = {"--off_grid", "true", "--dim", "8", "--filters", "2", "--max_answer_set", "4",
                                         "--threshold", "0.5", "--batch_size", "8", "--learning_rate", "0.01",
                                         "--epochs", "2"};

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST_CASE("usage errors map to the config exit code") {
  CHECK(run({}).code == kExitConfig);
  CHECK(run({"frobnicate"}).code == kExitConfig);
  CHECK(run({"train", "--no-such-flag"}).code == kExitConfig);
  const Result help = run({"--help"});
  CHECK(help.code == kExitOk);
  CHECK(help.out.find("build-proximity") != std::string::npos);
  const Result sub_help = run({"train", "--help"});
  CHECK(sub_help.code == kExitOk);
  CHECK(sub_help.out.find("--edge_drop_rate") != std::string::npos);
  CHECK(run({"train", "--dim", "64"}).code == kExitConfig);
  CHECK(run({"ingest"}).code == kExitConfig);
}

TEST_CASE("missing data maps to the data exit code") {
  const Workspace ws("missing");
  CHECK(run({"ingest", "--train_path", (ws.dir / "nope.txt").string()}).code == kExitData);
  write(ws.dir / "bad.txt", "a\tb\n");
  const Result bad = run({"ingest", "--train_path", (ws.dir / "bad.txt").string(), "--output_dir", ws.dir.string()});
  CHECK(bad.code == kExitData);
  CHECK(bad.err.find("bad.txt:1:") != std::string::npos);
  CHECK(run({"train", "--output_dir", (ws.dir / "empty").string(), "--kg_only", "true"}).code == kExitData);
}

TEST_CASE("ingest writes the graph and a report") {
  const Workspace ws("ingest");
  const Result r = run(ws.with({"ingest"}));
  REQUIRE(r.code == kExitOk);
  CHECK(fs::exists(ws.dir / "out" / "kg.bin"));
  const auto report = nlohmann::json::parse(testing_support::read_file(ws.dir / "out" / "kg.bin.report.json"));
  CHECK(report.at("num_entities") == 8);
  CHECK(report.at("train") == 20);
  CHECK(report.at("provenance").at("tool") == "cpgnn");
  CHECK(report.at("provenance").at("precision_bits") == 64);
}

TEST_CASE("build-proximity warns on an empty graph") {
  const Workspace ws("prox");
  const Result r = run(ws.with({"build-proximity"}, {"--off_grid", "true", "--max_answer_set", "4", "--threshold", "5"}));
  CHECK(r.code == kExitOk);
  CHECK(r.err.find("warning: proximity graph is empty") != std::string::npos);
  const Result ok = run(ws.with({"build-proximity", "--tsv"}, {"--off_grid", "true", "--max_answer_set", "4", "--threshold", "0.5"}));
  CHECK(ok.code == kExitOk);
  CHECK(ok.err.empty());
  std::size_t bins = 0, stats = 0, tsvs = 0;
  for (const auto& e : fs::directory_iterator(ws.dir / "out")) {
    const std::string name = e.path().filename().string();
    bins += name.ends_with(".bin");
    stats += name.ends_with(".stats.json");
    tsvs += name.ends_with(".tsv");
  }
  CHECK(bins == 2);
  CHECK(stats == 2);
  CHECK(tsvs == 1);
}

TEST_CASE("train, evaluate and ntype on the toy graph") {
  const Workspace ws("train");
  REQUIRE(run(ws.with({"ingest"})).code == kExitOk);
  // CP-GNN needs the proximity artifact for the same (M, I).
  CHECK(run(ws.with({"train"}, kSmall)).code == kExitData);
  REQUIRE(run(ws.with({"build-proximity"}, kSmall)).code == kExitOk);
  const Result train = run(ws.with({"train"}, kSmall));
  REQUIRE(train.code == kExitOk);
  std::istringstream lines(train.out);
  std::string line, last;
  std::size_t epochs = 0;
  while (std::getline(lines, line)) {
    if (line.find("\"epoch\"") != std::string::npos) ++epochs;
    last = line;
  }
  CHECK(epochs == 2);
  const auto summary = nlohmann::json::parse(last);
  const fs::path run_dir = summary.at("run_dir").get<std::string>();
  for (const char* f : {"config.txt", "run.json", "metrics.jsonl", "checkpoint.bin", "best.bin"}) {
    CHECK(fs::exists(run_dir / f));
  }
  CHECK(testing_support::read_file(run_dir / "config.txt").starts_with("# cpgnn "));

  const std::string best = (run_dir / "best.bin").string();
  const Result eval = run(ws.with({"evaluate", "--checkpoint", best, "--ranks", (ws.dir / "ranks.tsv").string()}));
  REQUIRE(eval.code == kExitOk);
  const auto report = nlohmann::json::parse(eval.out);
  CHECK(report.at("n_queries") == 2);
  CHECK(report.at("mrr").get<double>() > 0);
  CHECK(testing_support::read_file(ws.dir / "ranks.tsv").find("e1\tknows\te2\ttail") != std::string::npos);

  const Result nt = run(ws.with({"ntype", "--checkpoint", best, "--json"}));
  REQUIRE(nt.code == kExitOk);
  CHECK(nlohmann::json::parse(nt.out).at("ranges").size() == 6);
  const Result plain = run(ws.with({"ntype", "--split", "valid"}));
  CHECK(plain.code == kExitOk);
  CHECK(plain.out.find("total\t2\t1.00") != std::string::npos);
  CHECK(run(ws.with({"ntype", "--split", "dev"})).code == kExitConfig);

  // Resuming continues the same run to a larger epoch budget only through the
  // same digest; a changed config is refused.
  auto longer = kSmall;
  longer.back() = "3";
  CHECK(run(ws.with({"train", "--resume", (run_dir / "checkpoint.bin").string()}, longer)).code == kExitConfig);
  CHECK(run(ws.with({"train", "--resume", (run_dir / "checkpoint.bin").string()}, kSmall)).code == kExitOk);
}

TEST_CASE("kg only training runs without a proximity artifact") {
  const Workspace ws("kgonly");
  const Result r = run(ws.with({"train"}, concat(kSmall, {"--kg_only", "true"})));
  CHECK(r.code == kExitOk);
}

TEST_CASE("mismatched proximity artifact is a data error") {
  const Workspace ws("mismatch");
  REQUIRE(run(ws.with({"build-proximity"}, kSmall)).code == kExitOk);
  fs::path artifact;
  for (const auto& e : fs::directory_iterator(ws.dir / "out")) {
    if (e.path().extension() == ".bin" && e.path().filename().string().starts_with("proximity-")) artifact = e.path();
  }
  REQUIRE(!artifact.empty());
  auto other = kSmall;
  other[9] = "0";  // threshold
  const Result r = run(ws.with({"train"}, concat(other, {"--proximity_path", artifact.string()})));
  CHECK(r.code == kExitData);
  CHECK(r.err.find("was built with") != std::string::npos);
}

TEST_CASE("grid writes a ranked trial table") {
  const Workspace ws("grid");
  write(ws.dir / "grid.txt", "seed=1,2\n");
  const Result r = run(ws.with({"grid", "--grid", (ws.dir / "grid.txt").string(), "--out", (ws.dir / "t.tsv").string()},
                               concat(kSmall, {"--kg_only", "true"})));
  REQUIRE(r.code == kExitOk);
  CHECK(testing_support::read_file(ws.dir / "t.tsv").find("seed") != std::string::npos);
  CHECK(run(ws.with({"grid", "--grid", (ws.dir / "none.txt").string()})).code == kExitConfig);
}

#ifdef CPGNN_CLI_PATH
TEST_CASE("installed binary reports exit codes") {
  const std::string bin = CPGNN_CLI_PATH;
  auto status = [](const std::string& cmd) {
    const int s = std::system((cmd + " >/dev/null 2>&1").c_str());
    return WEXITSTATUS(s);
  };
  CHECK(status(bin + " --help") == kExitOk);
  CHECK(status(bin + " --version") == kExitOk);
  CHECK(status(bin + " bogus") == kExitConfig);
  CHECK(status(bin + " ingest --train_path /nonexistent/train.txt") == kExitData);
}
#endif
