#include <doctest.h>

#include <cmath>

#include "cpgnn/decoder.hpp"
#include "cpgnn/error.hpp"
#include "test_support.hpp"

using namespace cpgnn;
using testing_support::random_tensor;

namespace {

// Direct loops over reshape, convolution, projection and the entity dot.
std::vector<double> reference_logits(ConvEDecoder& dec, const Tensor& h, const Tensor& r, const Tensor& ent) {
  const DecoderConfig& c = dec.config();
  const std::size_t d = dec.dim(), rows = c.stacked_height(), cols = c.reshape_width, k = c.kernel;
  const std::size_t oh = rows - k + 1, ow = cols - k + 1;
  const std::size_t batch = h.dim(0), n = ent.dim(0);
  std::vector<double> out(batch * n);
  for (std::size_t b = 0; b < batch; ++b) {
    auto pixel = [&](std::size_t y, std::size_t x) {
      const std::size_t flat = y * cols + x;
      return flat < d ? h.at(b, flat) : r.at(b, flat - d);
    };
    std::vector<double> feats;
    for (std::size_t f = 0; f < c.filters; ++f) {
      for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x = 0; x < ow; ++x) {
          double acc = dec.conv_bias().value[f];
          for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) acc += dec.conv_weight().value[(f * k + ky) * k + kx] * pixel(y + ky, x + kx);
          }
          feats.push_back(std::max(acc, 0.0));
        }
      }
    }
    std::vector<double> hidden(d);
    for (std::size_t i = 0; i < d; ++i) {
      double acc = dec.fc_bias().value[i];
      for (std::size_t j = 0; j < feats.size(); ++j) acc += dec.fc_weight().value.at(i, j) * feats[j];
      hidden[i] = std::max(acc, 0.0);
    }
    for (std::size_t e = 0; e < n; ++e) {
      double acc = dec.entity_bias().value[e];
      for (std::size_t i = 0; i < d; ++i) acc += hidden[i] * ent.at(e, i);
      out[b * n + e] = acc;
    }
  }
  return out;
}

}  // namespace

TEST_CASE("default reshape and feature count") {
  DecoderConfig c;
  c.resolve(200);
  CHECK(c.reshape_height == 10);
  CHECK(c.reshape_width == 20);
  CHECK(c.feature_count() == 10368);
  DecoderConfig c500;
  c500.resolve(500);
  CHECK(c500.reshape_height * c500.reshape_width == 500);
  CHECK(c500.reshape_height == 20);
  CHECK(default_reshape_height(7) == 1);
  DecoderConfig wide;
  wide.reshape_width = 8;
  wide.resolve(32);
  CHECK(wide.reshape_height == 4);
}

TEST_CASE("decoder config rejects inconsistent shapes and rates") {
  DecoderConfig bad;
  bad.reshape_height = 3;
  bad.reshape_width = 3;
  CHECK_THROWS_AS(bad.resolve(10), ConfigError);
  DecoderConfig big_kernel;
  big_kernel.kernel = 9;
  CHECK_THROWS_AS(big_kernel.resolve(16), ConfigError);
  DecoderConfig rate;
  rate.hidden_dropout = 1;
  CHECK_THROWS_AS(rate.resolve(16), ConfigError);
  DecoderConfig smooth;
  smooth.label_smoothing = Real(1.5);
  CHECK_THROWS_AS(smooth.resolve(16), ConfigError);
}

TEST_CASE("zero weights score every entity at one half") {
  DecoderConfig c;
  c.filters = 4;
  ConvEDecoder dec(c, 8, 5, 1);
  for (Parameter* p : dec.parameters()) p->value.fill(0);
  Tape tape(false);
  const Tensor s = dec.score(tape.constant(random_tensor({3, 8}, 1)), tape.constant(random_tensor({3, 8}, 2)),
                             tape.constant(random_tensor({5, 8}, 3)), false, 0, 0)
                       .value();
  REQUIRE(s.shape() == Shape{3, 5});
  for (Real v : s.data()) CHECK(v == Real(0.5));
}

TEST_CASE("decoder matches a loop reference") {
  for (std::size_t dim : {std::size_t{6}, std::size_t{12}, std::size_t{16}}) {
    CAPTURE(dim);
    DecoderConfig c;
    c.filters = 3;
    ConvEDecoder dec(c, dim, 7, dim);
    dec.conv_bias().value = random_tensor({3}, 4);
    dec.fc_bias().value = random_tensor({dim}, 5);
    dec.entity_bias().value = random_tensor({7}, 6);
    const Tensor h = random_tensor({4, dim}, 7), r = random_tensor({4, dim}, 8), e = random_tensor({7, dim}, 9);
    Tape tape(false);
    const Tensor got = dec.logits(tape.constant(h), tape.constant(r), tape.constant(e), false, 0, 0).value();
    const auto want = reference_logits(dec, h, r, e);
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(std::abs(got[i] - want[i]) <= 1e-10);
  }
}

TEST_CASE("training dropout is keyed by seed and step") {
  DecoderConfig c;
  c.filters = 4;
  ConvEDecoder dec(c, 8, 5, 1);
  const Tensor h = random_tensor({2, 8}, 1), r = random_tensor({2, 8}, 2), e = random_tensor({5, 8}, 3);
  auto run = [&](bool training, std::uint64_t seed, std::uint64_t step) {
    Tape tape(false);
    return dec.logits(tape.constant(h), tape.constant(r), tape.constant(e), training, seed, step).value();
  };
  CHECK(run(true, 1, 2) == run(true, 1, 2));
  CHECK(run(true, 1, 2) != run(true, 1, 3));
  CHECK(run(true, 1, 2) != run(false, 1, 2));
  CHECK(run(false, 1, 2) == run(false, 9, 9));
}

TEST_CASE("decoder rejects mismatched operands") {
  ConvEDecoder dec(DecoderConfig{}, 8, 5, 1);
  Tape tape(false);
  CHECK_THROWS_AS(dec.logits(tape.constant(Tensor({2, 8})), tape.constant(Tensor({3, 8})), tape.constant(Tensor({5, 8})),
                             false, 0, 0),
                  ContractViolation);
  CHECK_THROWS_AS(dec.logits(tape.constant(Tensor({2, 8})), tape.constant(Tensor({2, 8})), tape.constant(Tensor({5, 6})),
                             false, 0, 0),
                  ContractViolation);
}
