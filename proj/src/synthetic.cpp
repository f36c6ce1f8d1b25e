#include "cpgnn/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cpgnn/error.hpp"
#include "cpgnn/random.hpp"

namespace cpgnn {

SyntheticDataset toy_dataset() {
  static const char* kTriples[] = {
      "e0\tlikes\te1", "e0\tlikes\te2", "e1\tlikes\te3", "e2\tlikes\te3", "e3\tlikes\te4",
      "e4\tlikes\te5", "e5\tlikes\te6", "e6\tlikes\te7", "e7\tlikes\te0", "e1\tknows\te4",
      "e2\tknows\te5", "e3\tknows\te6", "e4\tknows\te7", "e5\tknows\te0", "e6\tknows\te1",
      "e0\tnear\te3",  "e1\tnear\te5",  "e2\tnear\te7",  "e4\tnear\te6",  "e7\tnear\te2",
  };
  SyntheticDataset d;
  for (const char* t : kTriples) {
    d.train += t;
    d.train += '\n';
  }
  return d;
}

ClusteredDataset clustered_dataset(const ClusteredOptions& o) {
  if (o.clusters < 2 || o.members < 2 || o.min_answers < 2 || o.max_answers < o.min_answers ||
      o.max_answers > o.members || o.anchors == 0 || o.context_relations == 0 ||
      !(o.test_fraction >= 0 && o.valid_fraction >= 0 && o.test_fraction + o.valid_fraction < 1)) {
    throw ConfigError("clustered dataset options are inconsistent");
  }
  CounterRng rng(hash_key({o.seed, 0x73796e74ULL}));
  ClusteredDataset out;
  auto member = [](std::size_t c, std::size_t i) { return "c" + std::to_string(c) + "_m" + std::to_string(i); };
  auto line = [](std::string& dst, const std::string& h, const std::string& r, const std::string& t) {
    dst += h + "\t" + r + "\t" + t + "\n";
  };
  for (std::size_t c = 0; c < o.clusters; ++c) {
    for (std::size_t i = 0; i < o.members; ++i) out.membership.emplace_back(member(c, i), c);
  }

  std::vector<std::size_t> pool(o.members);
  for (std::size_t c = 0; c < o.clusters; ++c) {
    for (std::size_t a = 0; a < o.attributes; ++a) {
      const std::string attr = "c" + std::to_string(c) + "_a" + std::to_string(a);
      for (std::size_t r = 0; r < o.context_relations; ++r) {
        const std::string rel = "context" + std::to_string(r);
        const std::size_t size = o.min_answers + rng.below(o.max_answers - o.min_answers + 1);
        std::iota(pool.begin(), pool.end(), std::size_t{0});
        for (std::size_t k = pool.size(); k > 1; --k) std::swap(pool[k - 1], pool[rng.below(k)]);
        std::vector<std::string> answers;
        for (std::size_t k = 0; k < size; ++k) {
          std::size_t cluster = c;
          if (rng.uniform() < o.noise) cluster = (c + 1 + rng.below(o.clusters - 1)) % o.clusters;
          answers.push_back(member(cluster, pool[k]));
        }
        std::sort(answers.begin(), answers.end());
        answers.erase(std::unique(answers.begin(), answers.end()), answers.end());
        for (const auto& m : answers) line(out.text.train, attr, rel, m);
      }
    }
  }

  out.held_out_relation = "member_of_group";
  // Each anchor holds out exactly the same number of members, so every
  // held-out tail query has the same train answer count.
  const auto n_test = static_cast<std::size_t>(std::lround(o.test_fraction * static_cast<double>(o.members)));
  const auto n_valid = static_cast<std::size_t>(std::lround(o.valid_fraction * static_cast<double>(o.members)));
  for (std::size_t c = 0; c < o.clusters; ++c) {
    for (std::size_t a = 0; a < o.anchors; ++a) {
      const std::string anchor = "c" + std::to_string(c) + "_g" + std::to_string(a);
      std::iota(pool.begin(), pool.end(), std::size_t{0});
      for (std::size_t k = pool.size(); k > 1; --k) std::swap(pool[k - 1], pool[rng.below(k)]);
      for (std::size_t k = 0; k < o.members; ++k) {
        std::string& dst = k < n_test ? out.text.test : k < n_test + n_valid ? out.text.valid : out.text.train;
        line(dst, anchor, out.held_out_relation, member(c, pool[k]));
      }
    }
  }
  return out;
}

}  // namespace cpgnn
