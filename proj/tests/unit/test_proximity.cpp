#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <tuple>

#include "cpgnn/error.hpp"
#include "cpgnn/proximity.hpp"
#include "cpgnn/random.hpp"
#include "test_support.hpp"

using namespace cpgnn;

TEST_CASE("qa pairs of a small graph") {
  const auto kg = ingest_text("a\tr\tb\na\tr\tc\n", "", "").graph;
  const EntityId a = *kg.entities().find("a"), b = *kg.entities().find("b"), c = *kg.entities().find("c");
  const auto index = extract_qa_pairs(kg);
  CHECK(index.pairs().size() == 3);
  const QAPair* tail = index.find(QueryDirection::kTail, a, 0);
  REQUIRE(tail != nullptr);
  CHECK(tail->answers == std::vector<EntityId>{b, c});
  REQUIRE(index.find(QueryDirection::kHead, b, 0) != nullptr);
  CHECK(index.find(QueryDirection::kHead, b, 0)->answers == std::vector<EntityId>{a});
  CHECK(index.find(QueryDirection::kHead, c, 0)->answers == std::vector<EntityId>{a});
  CHECK(index.find(QueryDirection::kTail, b, 0) == nullptr);
  CHECK(index.total_answers() == 2 * kg.train().size());

  const auto single = extract_qa_pairs(ingest_text("a\tr\tb\n", "", "").graph);
  CHECK(single.pairs().size() == 2);
  for (const auto& p : single.pairs()) CHECK(p.answers.size() == 1);
}

TEST_CASE("qa pairs ignore the inverse edges of an augmented graph") {
  const auto raw = ingest_text("a\tr\tb\na\tr\tc\nd\ts\tb\n", "", "").graph;
  const auto aug = augment_inverse(raw);
  CHECK(extract_qa_pairs(aug).total_answers() == 2 * raw.train().size());
  CHECK(extract_qa_pairs(aug).pairs().size() == extract_qa_pairs(raw).pairs().size());
}

TEST_CASE("pm formula and bounds") {
  CHECK(pm(3, 2) == 1.0);
  CHECK(pm(50, 2) == 1.0);
  CHECK(pm(50, 50) == 0.0);
  CHECK(pm(50, 80) == 0.0);
  CHECK(pm(50, 26) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK_THROWS_AS(pm(2, 2), ConfigError);
  CHECK_THROWS_AS(pm(1, 5), ConfigError);
  for (int m : {3, 4, 10, 25, 500}) {
    double prev = 2.0;
    for (std::size_t s = 2; s < 600; ++s) {
      const double v = pm(m, s);
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      CHECK(v <= prev);
      prev = v;
    }
  }
}

TEST_CASE("spm of the worked example") {
  // q1 -> {a, b}, q2 -> {a, b, c}
  const auto kg = ingest_text("x\tr\ta\nx\tr\tb\ny\tr\ta\ny\tr\tb\ny\tr\tc\n", "", "").graph;
  const EntityId a = *kg.entities().find("a"), b = *kg.entities().find("b"), c = *kg.entities().find("c");
  const EntityId x = *kg.entities().find("x"), y = *kg.entities().find("y");
  const auto spm = accumulate_spm(extract_qa_pairs(kg), 4);
  CHECK(spm.at(a, b) == 1.5);
  CHECK(spm.at(a, c) == 0.5);
  CHECK(spm.at(b, c) == 0.5);
  CHECK(spm.at(b, a) == spm.at(a, b));
  // head queries (?, r, a) and (?, r, b) both answer {x, y}
  CHECK(spm.at(x, y) == 2.0);
  CHECK(spm.size() == 4);

  const auto graph = build_proximity_graph(spm, kg.num_entities(), 1.0);
  CHECK(graph.edge_count() == 2);
  const auto stats = proximity_stats(graph);
  CHECK(stats.degree_sum == 2 * stats.edge_count);
  CHECK(stats.isolated == 1);  // c
}

TEST_CASE("singleton answers give an empty matrix") {
  const auto spm = accumulate_spm(extract_qa_pairs(ingest_text("a\tr\tb\n", "", "").graph), 10);
  CHECK(spm.size() == 0);
  CHECK_THROWS_AS(accumulate_spm(QAPairIndex{}, 2), ConfigError);
}

TEST_CASE("thresholding is strict") {
  SPMMatrix spm(4);
  spm.add(0, 1, 1.5);
  spm.add(0, 2, 0.5);
  const auto g1 = build_proximity_graph(spm, 3, 1.0);
  REQUIRE(g1.edge_count() == 1);
  CHECK(g1.edges()[0].i == 0);
  CHECK(g1.edges()[0].j == 1);
  CHECK(g1.edges()[0].weight == 1.5);
  const auto stats = proximity_stats(g1);
  CHECK(stats.degree_histogram.at(1) == 2);
  CHECK(stats.degree_histogram.at(0) == 1);

  SPMMatrix half(4);
  half.add(0, 1, 0.5);
  CHECK(build_proximity_graph(half, 2, 0.5).edge_count() == 0);
  CHECK(build_proximity_graph(SPMMatrix(4), 5, 0.0).edge_count() == 0);
  const auto empty_stats = proximity_stats(build_proximity_graph(SPMMatrix(4), 5, 0.0));
  CHECK(empty_stats.isolated == 5);
  CHECK(empty_stats.weight_quantiles.empty());
}

TEST_CASE("random graphs: spm equals the brute-force oracle, graph is symmetric and monotone") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto kg = testing_support::random_graph(seed, 30, 4, 150);
    for (int m : {3, 4, 10}) {
      const auto spm = accumulate_spm(extract_qa_pairs(kg), m);
      const auto oracle = testing_support::brute_force_spm(kg.raw_train(), m);
      REQUIRE(spm.size() == oracle.size());
      for (const auto& [key, value] : oracle) {
        CHECK(spm.at(key.first, key.second) == doctest::Approx(value).epsilon(1e-12));
      }
      ProximityGraph prev;
      for (double threshold : {0.0, 0.5, 1.0, 3.0}) {
        const auto g = build_proximity_graph(spm, kg.num_entities(), threshold);
        for (EntityId e = 0; e < kg.num_entities(); ++e) {
          const auto nbrs = g.neighbors(e);
          for (std::size_t k = 0; k < nbrs.size(); ++k) {
            if (k > 0) CHECK(nbrs[k - 1].entity < nbrs[k].entity);
            CHECK(nbrs[k].weight > threshold);
            bool mirrored = false;
            for (const auto& back : g.neighbors(nbrs[k].entity)) {
              mirrored |= back.entity == e && back.weight == nbrs[k].weight;
            }
            CHECK(mirrored);
          }
        }
        if (threshold > 0.0) {
          for (const auto& edge : g.edges()) {
            bool found = false;
            for (const auto& n : prev.neighbors(edge.i)) found |= n.entity == edge.j;
            CHECK(found);
          }
        }
        prev = g;
      }
    }
  }
}

TEST_CASE("serialization is deterministic and round-trips") {
  const auto dir = std::filesystem::temp_directory_path() / "cpgnn_test_prox";
  std::filesystem::create_directories(dir);
  const auto kg = testing_support::random_graph(7, 40, 3, 200);
  const auto build = [&] { return build_proximity_graph(accumulate_spm(extract_qa_pairs(kg), 10), kg.num_entities(), 0.5); };
  const auto g = build();
  write_proximity_graph(g, dir / "a.bin");
  write_proximity_graph(build(), dir / "b.bin");
  CHECK(testing_support::read_file(dir / "a.bin") == testing_support::read_file(dir / "b.bin"));
  const auto back = read_proximity_graph(dir / "a.bin");
  CHECK(back == g);
  CHECK(back.threshold() == 0.5);
  CHECK(back.max_answer_set() == 10);

  write_proximity_tsv(g, dir / "a.tsv");
  std::ifstream tsv(dir / "a.tsv");
  std::string line;
  std::size_t rows = 0;
  while (std::getline(tsv, line)) {
    if (!line.empty() && line[0] != '#' && line.rfind("i\t", 0) != 0) ++rows;
  }
  CHECK(rows == g.edge_count());

  std::ofstream(dir / "junk.bin") << "CPGNNPG";
  CHECK_THROWS_AS(read_proximity_graph(dir / "junk.bin"), DataError);
}
