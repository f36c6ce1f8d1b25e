#include <doctest.h>

#include <cmath>

#include "cpgnn/autodiff.hpp"
#include "cpgnn/error.hpp"
#include "test_support.hpp"

using namespace cpgnn;
using testing_support::random_tensor;

TEST_CASE("tensor basics") {
  Tensor t({2, 3}, Real(1.5));
  CHECK(t.numel() == 6);
  CHECK(t.at(1, 2) == Real(1.5));
  t.at(1, 2) = 4;
  CHECK(t.row(1)[2] == 4);
  t.reshape({3, 2});
  CHECK(t.shape() == Shape{3, 2});
  CHECK_THROWS_AS(t.reshape({4, 2}), ContractViolation);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<Real>{1, 2, 3}), ContractViolation);
  CHECK(shape_numel({}) == 1);
  CHECK(shape_str({2, 3}) == "[2,3]");
}

TEST_CASE("matmul identities") {
  Tape tape(false);
  Tensor eye({2, 2});
  eye.at(0, 0) = eye.at(1, 1) = 1;
  const Tensor b = random_tensor({2, 3}, 1);
  CHECK(ops::matmul(tape.constant(eye), tape.constant(b)).value() == b);
  const Tensor zero = ops::matmul(tape.constant(Tensor({4, 2})), tape.constant(b)).value();
  for (Real x : zero.data()) CHECK(x == 0);
  CHECK_THROWS_AS(ops::matmul(tape.constant(b), tape.constant(b)), ContractViolation);
}

TEST_CASE("matmul matches a triple loop") {
  const Tensor a = random_tensor({4, 5}, 2), b = random_tensor({5, 3}, 3);
  Tape tape(false);
  const Tensor c = ops::matmul(tape.constant(a), tape.constant(b)).value();
  const Tensor bt = random_tensor({3, 5}, 13);
  const Tensor ct = ops::matmul_nt(tape.constant(a), tape.constant(bt)).value();
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      double acc = 0;
      for (std::size_t k = 0; k < 5; ++k) acc += a.at(i, k) * b.at(k, j);
      CHECK(c.at(i, j) == doctest::Approx(acc).epsilon(1e-12));
      double acc_t = 0;
      for (std::size_t k = 0; k < 5; ++k) acc_t += a.at(i, k) * bt.at(j, k);
      CHECK(ct.at(i, j) == doctest::Approx(acc_t).epsilon(1e-12));
    }
  }
}

TEST_CASE("composition identities") {
  Tape tape(false);
  const Tensor e = random_tensor({3, 4}, 4);
  CHECK((tape.constant(e) + tape.constant(Tensor({4}))).value() == e);
  CHECK((tape.constant(e) * tape.constant(Tensor({3, 4}, Real(1)))).value() == e);
  CHECK_THROWS_AS(tape.constant(e) + tape.constant(Tensor({3})), ContractViolation);
}

TEST_CASE("gather accumulates duplicate rows on backward") {
  Tape tape;
  Var table = tape.variable(random_tensor({3, 2}, 5));
  const std::vector<std::uint32_t> ids{0, 0};
  tape.backward(ops::sum(ops::gather_rows(table, ids)));
  const Tensor g = tape.grad(table);
  CHECK(g.at(0, 0) == 2);
  CHECK(g.at(0, 1) == 2);
  CHECK(g.at(1, 0) == 0);
  Tape other(false);
  const std::vector<std::uint32_t> bad{3};
  CHECK_THROWS_AS(ops::gather_rows(other.constant(Tensor({3, 2})), bad), ContractViolation);
}

TEST_CASE("tape walks once and sums gradients of reused values") {
  Tape tape;
  Var x = tape.variable(Tensor({1}, Real(3)));
  Var y = x * x + x;  // dy/dx = 2x + 1
  tape.backward(ops::sum(y));
  CHECK(tape.grad(x)[0] == 7);
  CHECK_THROWS_AS(tape.backward(ops::sum(y)), ContractViolation);
  tape.reset();
  CHECK(tape.size() == 0);

  Tape t2;
  Var v = t2.variable(Tensor({2}));
  CHECK_THROWS_AS(t2.backward(v), ContractViolation);
  Tape t3;
  CHECK_THROWS_AS(ops::add(t2.variable(Tensor({1})), t3.variable(Tensor({1}))), ContractViolation);
}

TEST_CASE("parameters accumulate into their grad buffers") {
  Parameter p("w", Tensor({2}, Real(1)));
  p.zero_grad();
  for (int rep = 0; rep < 2; ++rep) {
    Tape tape;
    tape.backward(ops::sum(ops::scale(tape.parameter(p), Real(3))));
  }
  CHECK(p.grad[0] == 6);
  p.zero_grad();
  CHECK(p.grad[1] == 0);
}

TEST_CASE("grad-disabled tape records nothing for backward") {
  Parameter p("w", Tensor({2}, Real(1)));
  p.zero_grad();
  Tape tape(false);
  Var loss = ops::sum(tape.parameter(p));
  CHECK(loss.value()[0] == 2);
  tape.backward(loss);
  CHECK(p.grad[0] == 0);
}

TEST_CASE("segment softmax is normalized and overflow safe") {
  Tape tape(false);
  Tensor scores({5}, std::vector<Real>{1000, 1001, 999, -5, 3});
  const std::vector<std::uint32_t> segs{0, 0, 0, 2, 2};
  const Tensor p = ops::segment_softmax(tape.constant(scores), segs, 3).value();
  for (Real x : p.data()) CHECK(std::isfinite(x));
  CHECK(p[0] + p[1] + p[2] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p[3] + p[4] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p[4] > p[3]);
}

TEST_CASE("segment weighted sum matches a loop and leaves empty segments zero") {
  const Tensor values = random_tensor({4, 3}, 6), weights = random_tensor({4}, 7);
  const std::vector<std::uint32_t> segs{1, 1, 3, 1};
  Tape tape(false);
  const Tensor out = ops::segment_weighted_sum(tape.constant(values), tape.constant(weights), segs, 4).value();
  for (std::size_t c = 0; c < 3; ++c) {
    CHECK(out.at(0, c) == 0);
    CHECK(out.at(2, c) == 0);
    CHECK(out.at(1, c) == doctest::Approx(weights[0] * values.at(0, c) + weights[1] * values.at(1, c) +
                                          weights[3] * values.at(3, c))
                             .epsilon(1e-12));
    CHECK(out.at(3, c) == doctest::Approx(weights[2] * values.at(2, c)).epsilon(1e-12));
  }
}

TEST_CASE("conv2d matches a naive loop") {
  const Tensor in = random_tensor({2, 2, 5, 6}, 8), w = random_tensor({3, 2, 3, 2}, 9), b = random_tensor({3}, 10);
  Tape tape(false);
  const Tensor out = ops::conv2d(tape.constant(in), tape.constant(w), tape.constant(b)).value();
  REQUIRE(out.shape() == Shape{2, 3, 3, 5});
  for (std::size_t n = 0; n < 2; ++n) {
    for (std::size_t co = 0; co < 3; ++co) {
      for (std::size_t y = 0; y < 3; ++y) {
        for (std::size_t x = 0; x < 5; ++x) {
          double acc = b[co];
          for (std::size_t ci = 0; ci < 2; ++ci) {
            for (std::size_t ky = 0; ky < 3; ++ky) {
              for (std::size_t kx = 0; kx < 2; ++kx) {
                acc += in[((n * 2 + ci) * 5 + y + ky) * 6 + x + kx] * w[((co * 2 + ci) * 3 + ky) * 2 + kx];
              }
            }
          }
          CHECK(out[((n * 3 + co) * 3 + y) * 5 + x] == doctest::Approx(acc).epsilon(1e-12));
        }
      }
    }
  }
}

TEST_CASE("dropout masks are keyed and inverted") {
  Tape tape(false);
  const Tensor x({1000}, Real(1));
  const Tensor a = ops::dropout(tape.constant(x), Real(0.25), {1, 2, 3}, true).value();
  const Tensor b = ops::dropout(tape.constant(x), Real(0.25), {1, 2, 3}, true).value();
  const Tensor c = ops::dropout(tape.constant(x), Real(0.25), {1, 2, 4}, true).value();
  CHECK(a == b);
  CHECK(a != c);
  std::size_t kept = 0;
  for (Real v : a.data()) {
    CHECK((v == 0 || v == doctest::Approx(1 / 0.75)));
    kept += v != 0;
  }
  CHECK(kept > 650);
  CHECK(kept < 850);
  CHECK(ops::dropout(tape.constant(x), Real(0.25), {1, 2, 3}, false).value() == x);
  CHECK_THROWS_AS(ops::dropout(tape.constant(x), Real(1), {}, true), ContractViolation);
}

TEST_CASE("bce loss values") {
  Tape tape(false);
  Tensor t({2, 3}, std::vector<Real>{1, 0, 1, 0, 0, 1});
  CHECK(ops::bce_loss(tape.constant(t), tape.constant(t)).value()[0] <= 1e-6);
  CHECK(ops::bce_loss(tape.constant(Tensor({2, 3}, Real(0.5))), tape.constant(t)).value()[0] ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));

  const Tensor o = random_tensor({3, 5}, 11, 0.01, 0.99), target = random_tensor({3, 5}, 12, 0, 1);
  double naive = 0;
  for (std::size_t i = 0; i < o.numel(); ++i) naive -= target[i] * std::log(o[i]) + (1 - target[i]) * std::log(1 - o[i]);
  naive /= static_cast<double>(o.numel());
  CHECK(ops::bce_loss(tape.constant(o), tape.constant(target)).value()[0] == doctest::Approx(naive).epsilon(1e-10));

  // Worst case is bounded by the clip.
  Tensor inverted({2, 3});
  for (std::size_t i = 0; i < 6; ++i) inverted[i] = 1 - t[i];
  const double worst = ops::bce_loss(tape.constant(inverted), tape.constant(t)).value()[0];
  CHECK(worst == doctest::Approx(-std::log(1e-7)).epsilon(1e-9));
  CHECK(worst <= 16.12);
}
