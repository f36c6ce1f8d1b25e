#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "cpgnn/checkpoint.hpp"
#include "cpgnn/error.hpp"
#include "cpgnn/synthetic.hpp"
#include "cpgnn/trainer.hpp"
#include "test_support.hpp"

using namespace cpgnn;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "cpgnn_test_checkpoint";
  fs::create_directories(dir);
  return dir / name;
}

struct Toy {
  KnowledgeGraph kg;
  ProximityGraph pgraph;
  Toy() {
    const auto ds = toy_dataset();
    const KnowledgeGraph raw = ingest_text(ds.train, ds.valid, ds.test).graph;
    kg = augment_inverse(raw);
    pgraph = build_proximity_graph(accumulate_spm(extract_qa_pairs(raw), 4), raw.num_entities(), 0.0);
  }
};

RunConfig small_config() {
  RunConfig c;
  c.off_grid = true;
  c.encoder.dim = 8;
  c.decoder.filters = 4;
  c.proximity.max_answer_set = 4;
  c.proximity.threshold = 0.0;
  c.train.batch_size = 5;
  c.train.learning_rate = 0.01;
  c.train.epochs = 4;
  c.train.eval_every = 0;
  return c;
}

std::vector<Tensor> values(Model& m) {
  std::vector<Tensor> out;
  for (auto* p : m.parameters()) out.push_back(p->value);
  return out;
}

}  // namespace

TEST_CASE("sgd subtracts the scaled gradient exactly") {
  Parameter p("w", Tensor({3}, std::vector<Real>{1, -2, 0.5}));
  p.grad = Tensor({3}, std::vector<Real>{0.5, 0.25, -4});
  Optimizer opt(OptimizerKind::kSgd, Real(0.1));
  Parameter* params[] = {&p};
  opt.step(params);
  CHECK(p.value[0] == Real(1) - Real(0.1) * Real(0.5));
  CHECK(p.value[1] == Real(-2) - Real(0.1) * Real(0.25));
  CHECK(p.value[2] == Real(0.5) + Real(0.1) * Real(4));
}

TEST_CASE("adam follows the bias corrected moment recurrence") {
  const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  Parameter p("w", testing_support::random_tensor({4}, 3));
  Optimizer opt(OptimizerKind::kAdam, static_cast<Real>(lr));
  std::vector<double> theta(p.value.data().begin(), p.value.data().end()), m(4, 0), v(4, 0);
  Parameter* params[] = {&p};
  for (int t = 1; t <= 25; ++t) {
    p.grad = testing_support::random_tensor({4}, 100 + t);
    for (std::size_t i = 0; i < 4; ++i) {
      const double g = p.grad[i];
      m[i] = b1 * m[i] + (1 - b1) * g;
      v[i] = b2 * v[i] + (1 - b2) * g * g;
      const double mhat = m[i] / (1 - std::pow(b1, t)), vhat = v[i] / (1 - std::pow(b2, t));
      theta[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
    opt.step(params);
  }
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(p.value[i] - theta[i]) <= 1e-12);
  CHECK(opt.state().steps == 25);
  CHECK_THROWS_AS(parse_optimizer("rmsprop"), ConfigError);
  CHECK(parse_optimizer(to_string(OptimizerKind::kSgd)) == OptimizerKind::kSgd);
}

TEST_CASE("checkpoint round trips through disk") {
  const Toy toy;
  RunConfig c = small_config();
  Trainer t(toy.kg, &toy.pgraph, c);
  for (int i = 0; i < 3; ++i) t.step();
  const Checkpoint ckpt = t.checkpoint();
  const fs::path path = temp_path("roundtrip.bin");
  write_checkpoint(ckpt, path);
  const Checkpoint back = read_checkpoint(path);
  CHECK(back == ckpt);
  CHECK(back.trainer.global_step == 3);
  CHECK(back.config_digest == c.digest());
  CHECK(back.kg_digest == toy.kg.digest());
}

TEST_CASE("resumed training continues bitwise identically") {
  const Toy toy;
  for (double drop : {0.0, 0.3}) {
    for (OptimizerKind kind : {OptimizerKind::kAdam, OptimizerKind::kSgd}) {
      RunConfig c = small_config();
      c.train.edge_drop_rate = drop;
      c.train.optimizer = kind;
      Trainer straight(toy.kg, &toy.pgraph, c);
      for (int i = 0; i < 3; ++i) straight.step();
      const fs::path path = temp_path("resume.bin");
      write_checkpoint(straight.checkpoint(), path);
      straight.train();

      Trainer resumed(toy.kg, &toy.pgraph, c);
      resumed.restore(read_checkpoint(path));
      CHECK(resumed.state().global_step == 3);
      resumed.train();
      CHECK(values(resumed.model()) == values(straight.model()));
      CHECK(resumed.state() == straight.state());
    }
  }
}

TEST_CASE("restore refuses a different config or graph") {
  const Toy toy;
  RunConfig c = small_config();
  Trainer t(toy.kg, &toy.pgraph, c);
  Checkpoint ckpt = t.checkpoint();

  RunConfig other = c;
  other.train.learning_rate = 0.02;
  Trainer t2(toy.kg, &toy.pgraph, other);
  CHECK_THROWS_AS(t2.restore(ckpt), ConfigError);

  ckpt.kg_digest ^= 1;
  CHECK_THROWS_AS(t.restore(ckpt), DataError);
}

TEST_CASE("parameter loading checks names and shapes") {
  const Toy toy;
  Trainer t(toy.kg, &toy.pgraph, small_config());
  auto params = snapshot_parameters(t.model());
  CHECK_NOTHROW(load_parameters(t.model(), params));
  auto renamed = params;
  renamed[0].name = "encoder.other";
  CHECK_THROWS_AS(load_parameters(t.model(), renamed), DataError);
  auto reshaped = params;
  reshaped[0].value = Tensor({1, 1});
  CHECK_THROWS_AS(load_parameters(t.model(), reshaped), DataError);
  auto shorter = params;
  shorter.pop_back();
  CHECK_THROWS_AS(load_parameters(t.model(), shorter), DataError);
}

TEST_CASE("corrupt checkpoint files are rejected") {
  const Toy toy;
  Trainer t(toy.kg, &toy.pgraph, small_config());
  const fs::path path = temp_path("corrupt.bin");
  write_checkpoint(t.checkpoint(), path);
  std::string bytes = testing_support::read_file(path);

  auto write_bytes = [&](const std::string& b) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << b;
  };
  write_bytes(bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(read_checkpoint(path), DataError);
  write_bytes(bytes + "x");
  CHECK_THROWS_AS(read_checkpoint(path), DataError);
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  write_bytes(bad_magic);
  CHECK_THROWS_AS(read_checkpoint(path), DataError);
  CHECK_THROWS_AS(read_checkpoint(temp_path("missing.bin")), DataError);
}
