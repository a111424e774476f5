// Copyright 2026 The advtts Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <vector>

#include "advtts/errors.hpp"
#include "advtts/ops.hpp"
#include "advtts/tape.hpp"
#include "advtts/tensor.hpp"
#include "doctest.h"
#include "support/test_utils.hpp"

using advtts::ConfigError;
using advtts::ContractError;
using advtts::DimensionError;
using advtts::DomainError;
using advtts::GradStore;
using advtts::Tape;
using advtts::Tensor;
namespace ops = advtts::ops;
using testutil::DataGen;

namespace {

// Differentiates loss = sum(w . op(x)) w.r.t. x both analytically and by
// central differences; returns the worst per-element relative error.
double grad_check(const std::function<Tensor(const Tensor&)>& op,
                  const Tensor& x, const std::vector<double>& w) {
  Tape tape;
  Tensor xt = tape.watch(x);
  Tensor y = op(xt);
  REQUIRE(y.size() == w.size());
  Tensor loss = ops::reduce_sum(ops::mul(y, Tensor(y.shape(), w)));
  GradStore grads = tape.backward(loss);
  std::vector<double> analytic = testutil::to_vec(grads.at(xt));

  auto f = [&](std::span<const double> vals) {
    Tensor xf(x.shape(), {vals.begin(), vals.end()});
    Tensor yf = op(xf);
    double acc = 0.0;
    std::span<const double> py = yf.data();
    for (std::size_t i = 0; i < py.size(); ++i) acc += py[i] * w[i];
    return acc;
  };
  std::vector<double> fd = testutil::central_diff(f, testutil::to_vec(x));
  return testutil::max_rel_err(analytic, fd);
}

}  // namespace

TEST_CASE("matmul forward examples") {
  Tensor eye = Tensor::matrix(2, 2, {1, 0, 0, 1});
  Tensor a = Tensor::matrix(2, 2, {1, 2, 3, 4});
  Tensor prod = ops::matmul(eye, a);
  CHECK(testutil::to_vec(prod) == std::vector<double>{1, 2, 3, 4});

  Tensor r = Tensor::matrix(1, 2, {1, 2});
  Tensor c = Tensor::matrix(2, 1, {3, 4});
  CHECK(ops::matmul(r, c).value() == doctest::Approx(11.0).epsilon(1e-12));

  CHECK_THROWS_AS(ops::matmul(a, Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 6})),
                  DimensionError);
}

TEST_CASE("matmul backward equals ones * B^T and finite differences") {
  DataGen gen(11);
  Tensor a = gen.tensor({3, 4});
  Tensor b = gen.tensor({4, 2});

  Tape tape;
  Tensor at = tape.watch(a);
  Tensor loss = ops::reduce_sum(ops::matmul(at, b));
  GradStore grads = tape.backward(loss);
  Tensor da = grads.at(at);

  // d sum(A*B) / dA[i,t] = sum_j B[t,j]
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t t = 0; t < 4; ++t) {
      double expected = 0.0;
      for (std::size_t j = 0; j < 2; ++j) expected += b.at(t, j);
      CHECK(da.at(i, t) == doctest::Approx(expected).epsilon(1e-12));
    }

  double err = grad_check(
      [&](const Tensor& x) { return ops::matmul(x, b); }, a,
      std::vector<double>(6, 1.0));
  CHECK(err < 1e-6);
}

TEST_CASE("conv1d forward examples") {
  Tensor x = Tensor::matrix(3, 1, {1, 2, 3});
  Tensor ident = Tensor({3, 1, 1}, {0, 1, 0});
  Tensor box = Tensor({3, 1, 1}, {1, 1, 1});

  CHECK(testutil::to_vec(ops::conv1d(x, ident, ops::ConvMode::kSame)) ==
        std::vector<double>{1, 2, 3});
  CHECK(testutil::to_vec(ops::conv1d(x, box, ops::ConvMode::kSame)) ==
        std::vector<double>{3, 6, 5});
  CHECK(testutil::to_vec(ops::conv1d(x, box, ops::ConvMode::kCausal)) ==
        std::vector<double>{1, 3, 6});

  Tensor even = Tensor({2, 1, 1}, {1, 1});
  CHECK_THROWS_AS(ops::conv1d(x, even, ops::ConvMode::kSame), ConfigError);
  CHECK_NOTHROW(ops::conv1d(x, even, ops::ConvMode::kCausal));
}

TEST_CASE("causal conv1d ignores future steps exactly") {
  DataGen gen(7);
  Tensor x = gen.tensor({6, 3});
  Tensor k = gen.tensor({3, 3, 2});
  Tensor y = ops::conv1d(x, k, ops::ConvMode::kCausal);

  // Perturb everything after step t; outputs up to t must be bit-identical.
  const std::size_t t = 2;
  std::vector<double> mutated = testutil::to_vec(x);
  for (std::size_t s = t + 1; s < 6; ++s)
    for (std::size_t c = 0; c < 3; ++c) mutated[s * 3 + c] += gen.uniform(1, 2);
  Tensor y2 = ops::conv1d(Tensor({6, 3}, mutated), k, ops::ConvMode::kCausal);
  for (std::size_t s = 0; s <= t; ++s)
    for (std::size_t c = 0; c < 2; ++c) CHECK(y.at(s, c) == y2.at(s, c));
}

TEST_CASE("elementwise examples") {
  Tensor a = Tensor::row({1, 2});
  Tensor b = Tensor::row({3, 4});
  CHECK(testutil::to_vec(ops::add(a, b)) == std::vector<double>{4, 6});

  Tensor s = ops::softsign(Tensor::row({0, 1}));
  CHECK(s.at(0, 0) == 0.0);
  CHECK(s.at(0, 1) == doctest::Approx(0.5).epsilon(1e-15));

  CHECK(testutil::to_vec(ops::relu(Tensor::row({-1, 2}))) ==
        std::vector<double>{0, 2});

  CHECK_THROWS_AS(ops::log(Tensor::row({1.0, 0.0})), DomainError);
  CHECK_THROWS_AS(ops::log(Tensor::row({-1.0})), DomainError);
}

TEST_CASE("row broadcast accepted, richer broadcast rejected") {
  Tensor m = Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 6});
  Tensor row = Tensor::row({10, 20});
  Tensor out = ops::add(m, row);
  CHECK(out.at(0, 0) == 11);
  CHECK(out.at(2, 1) == 26);
  Tensor out2 = ops::sub(row, m);
  CHECK(out2.at(0, 0) == 9);
  CHECK(out2.at(2, 1) == 14);

  // Column vectors and mismatched widths are not broadcastable.
  CHECK_THROWS_AS(ops::add(m, Tensor::matrix(3, 1, {1, 2, 3})),
                  DimensionError);
  CHECK_THROWS_AS(ops::add(m, Tensor::row({1, 2, 3})), DimensionError);
  CHECK_THROWS_AS(ops::mul(m, Tensor::matrix(2, 2, {1, 2, 3, 4})),
                  DimensionError);
}

TEST_CASE("softmax_rows examples and invariants") {
  Tensor sym = ops::softmax_rows(Tensor::row({0, 0}));
  CHECK(sym.at(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(sym.at(0, 1) == doctest::Approx(0.5).epsilon(1e-15));

  Tensor ln = ops::softmax_rows(Tensor::row({std::log(2.0), 0.0}));
  CHECK(ln.at(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(ln.at(0, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  Tensor big = ops::softmax_rows(Tensor::row({1000.0, 0.0}));
  CHECK(big.at(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(big.at(0, 1) < 1e-300);
  for (double v : big.data()) CHECK(std::isfinite(v));

  DataGen gen(3);
  for (int rep = 0; rep < 20; ++rep) {
    Tensor x = gen.tensor({4, 5}, -30, 30);
    Tensor y = ops::softmax_rows(x);
    for (std::size_t i = 0; i < 4; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < 5; ++j) sum += y.at(i, j);
      CHECK(std::fabs(sum - 1.0) <= 1e-12);
    }
    // Shift invariance: softmax(x + c) == softmax(x) within 1e-12.
    const double c = gen.uniform(-5, 5);
    std::vector<double> shifted = testutil::to_vec(x);
    for (double& v : shifted) v += c;
    Tensor ys = ops::softmax_rows(Tensor({4, 5}, shifted));
    for (std::size_t i = 0; i < 20; ++i)
      CHECK(std::fabs(y.at(i) - ys.at(i)) <= 1e-12);
  }
}

TEST_CASE("l2_normalize_rows examples and norm invariant") {
  Tensor v = ops::l2_normalize_rows(Tensor::row({3, 4}));
  CHECK(v.at(0, 0) == doctest::Approx(0.6).epsilon(1e-9));
  CHECK(v.at(0, 1) == doctest::Approx(0.8).epsilon(1e-9));

  Tensor z = ops::l2_normalize_rows(Tensor::row({0, 0}));
  CHECK(z.at(0, 0) == 0.0);
  CHECK(z.at(0, 1) == 0.0);

  Tensor unit = ops::l2_normalize_rows(Tensor::row({1, 0}));
  Tensor twice = ops::l2_normalize_rows(unit);
  CHECK(std::fabs(twice.at(0, 0) - unit.at(0, 0)) <= 1e-9);

  DataGen gen(5);
  for (int rep = 0; rep < 50; ++rep) {
    Tensor x = gen.tensor({3, 4}, -2, 2);
    Tensor y = ops::l2_normalize_rows(x);
    for (std::size_t i = 0; i < 3; ++i) {
      double in_norm = 0.0, out_norm = 0.0;
      for (std::size_t j = 0; j < 4; ++j) {
        in_norm += x.at(i, j) * x.at(i, j);
        out_norm += y.at(i, j) * y.at(i, j);
      }
      in_norm = std::sqrt(in_norm);
      out_norm = std::sqrt(out_norm);
      if (in_norm >= 1e-3) {
        CHECK(out_norm <= 1.0);
        CHECK(out_norm >= 1.0 - 1e-6);
      }
    }
  }
}

TEST_CASE("reductions") {
  CHECK(ops::reduce_mean(Tensor::row({1, 2, 3})).value() ==
        doctest::Approx(2.0).epsilon(1e-15));
  CHECK(ops::reduce_mean_abs(Tensor::row({-1, 1, 2})).value() ==
        doctest::Approx(4.0 / 3.0).epsilon(1e-12));

  Tape tape;
  Tensor x = tape.watch(Tensor::row({1, 2, 3}));
  GradStore grads = tape.backward(ops::reduce_sum(x));
  CHECK(testutil::to_vec(grads.at(x)) == std::vector<double>{1, 1, 1});

  CHECK_THROWS_AS(ops::reduce_mean(Tensor()), DomainError);
}

TEST_CASE("backward basics") {
  Tape tape;
  Tensor x = tape.watch(Tensor::row({1, -2}));
  Tensor loss = ops::reduce_sum(ops::mul(x, x));
  GradStore grads = tape.backward(loss);
  // d sum(x*x)/dx = 2x, exact against the finite-difference oracle below.
  CHECK(grads.at(x).at(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(grads.at(x).at(0, 1) == doctest::Approx(-4.0).epsilon(1e-12));

  auto f = [](std::span<const double> v) {
    return v[0] * v[0] + v[1] * v[1];
  };
  std::vector<double> fd = testutil::central_diff(f, {1.0, -2.0});
  CHECK(testutil::rel_err(grads.at(x).at(0, 0), fd[0]) < 1e-8);
  CHECK(testutil::rel_err(grads.at(x).at(0, 1), fd[1]) < 1e-8);
}

TEST_CASE("backward contract and unused nodes") {
  Tape tape;
  Tensor x = tape.watch(Tensor::row({1, 2}));
  Tensor unused = tape.watch(Tensor::row({5, 5}));
  Tensor dangling = ops::scale(unused, 2.0);
  Tensor loss = ops::reduce_sum(x);
  GradStore grads = tape.backward(loss);
  CHECK(grads.contains(x));
  CHECK_FALSE(grads.contains(unused));
  CHECK_FALSE(grads.contains(dangling));

  Tensor nonscalar = ops::scale(x, 1.0);
  CHECK_THROWS_AS(tape.backward(nonscalar), ContractError);

  Tape other;
  Tensor foreign = other.watch(Tensor::scalar(1.0));
  CHECK_THROWS_AS(tape.backward(foreign), ContractError);
}

TEST_CASE("reusing a tensor accumulates gradients") {
  Tape tape;
  Tensor x = tape.watch(Tensor::row({3.0}));
  Tensor loss = ops::reduce_sum(ops::add(ops::mul(x, x), x));
  GradStore grads = tape.backward(loss);
  CHECK(grads.at(x).at(0) == doctest::Approx(7.0).epsilon(1e-12));
}

TEST_CASE("finite differences across every differentiable op") {
  DataGen gen(42);
  int checked = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t T = 2 + gen.index(3);
    const std::size_t C = 2 + gen.index(3);
    Tensor x({T, C}, gen.nonzero_vec(T * C));
    std::vector<double> w = gen.uniform_vec(T * C, -1.0, 1.0);

    switch (rep % 10) {
      case 0: {
        Tensor b = gen.tensor({C, 3});
        std::vector<double> wm = gen.uniform_vec(T * 3, -1, 1);
        CHECK(grad_check(
                  [&](const Tensor& v) { return ops::matmul(v, b); }, x,
                  wm) < 1e-4);
        CHECK(grad_check(
                  [&](const Tensor& v) { return ops::matmul(b, v); },
                  x.rank() == 2 ? gen.tensor({3, T}) : x,
                  gen.uniform_vec(C * T, -1, 1)) < 1e-4);
        break;
      }
      case 1: {
        Tensor b = gen.tensor({4, C});
        CHECK(grad_check(
                  [&](const Tensor& v) { return ops::matmul_nt(v, b); }, x,
                  gen.uniform_vec(T * 4, -1, 1)) < 1e-4);
        break;
      }
      case 2: {
        Tensor k = gen.tensor({3, C, 2});
        CHECK(grad_check(
                  [&](const Tensor& v) {
                    return ops::conv1d(v, k, ops::ConvMode::kSame);
                  },
                  x, gen.uniform_vec(T * 2, -1, 1)) < 1e-4);
        Tensor xc = x;
        CHECK(grad_check(
                  [&](const Tensor& v) {
                    return ops::conv1d(xc, v, ops::ConvMode::kCausal);
                  },
                  k, gen.uniform_vec(T * 2, -1, 1)) < 1e-4);
        break;
      }
      case 3: {
        Tensor b = gen.tensor({T, C});
        CHECK(grad_check(
                  [&](const Tensor& v) { return ops::add(v, b); }, x, w) <
              1e-4);
        CHECK(grad_check(
                  [&](const Tensor& v) { return ops::sub(b, v); }, x, w) <
              1e-4);
        CHECK(grad_check(
                  [&](const Tensor& v) { return ops::mul(v, b); }, x, w) <
              1e-4);
        break;
      }
      case 4: {
        // Row broadcast, gradient w.r.t. both sides.
        Tensor row = gen.tensor({1, C});
        CHECK(grad_check(
                  [&](const Tensor& v) { return ops::add(v, row); }, x, w) <
              1e-4);
        Tensor xc = x;
        CHECK(grad_check(
                  [&](const Tensor& v) { return ops::mul(xc, v); }, row, w) <
              1e-4);
        CHECK(grad_check(
                  [&](const Tensor& v) { return ops::sub(v, xc); }, row, w) <
              1e-4);
        break;
      }
      case 5:
        CHECK(grad_check([](const Tensor& v) { return ops::relu(v); }, x,
                         w) < 1e-4);
        CHECK(grad_check([](const Tensor& v) { return ops::softsign(v); },
                         x, w) < 1e-4);
        break;
      case 6: {
        Tensor pos({T, C}, gen.uniform_vec(T * C, 0.2, 3.0));
        CHECK(grad_check([](const Tensor& v) { return ops::log(v); }, pos,
                         w) < 1e-4);
        CHECK(grad_check([](const Tensor& v) { return ops::exp(v); }, x,
                         w) < 1e-4);
        CHECK(grad_check(
                  [](const Tensor& v) { return ops::scale(v, -1.7); }, x,
                  w) < 1e-4);
        break;
      }
      case 7:
        CHECK(grad_check(
                  [](const Tensor& v) { return ops::softmax_rows(v); }, x,
                  w) < 1e-4);
        CHECK(grad_check(
                  [](const Tensor& v) { return ops::log_softmax_rows(v); },
                  x, w) < 1e-4);
        break;
      case 8: {
        // Rows with norm well away from zero for the normalize kink.
        Tensor xn({T, C}, gen.nonzero_vec(T * C, 0.3, 2.0));
        CHECK(grad_check(
                  [](const Tensor& v) { return ops::l2_normalize_rows(v); },
                  xn, w) < 1e-4);
        break;
      }
      case 9: {
        CHECK(grad_check(
                  [](const Tensor& v) { return ops::reduce_sum(v); }, x,
                  {1.0}) < 1e-4);
        CHECK(grad_check(
                  [](const Tensor& v) { return ops::reduce_mean(v); }, x,
                  {1.0}) < 1e-4);
        CHECK(grad_check(
                  [](const Tensor& v) { return ops::reduce_mean_abs(v); },
                  x, {1.0}) < 1e-4);
        std::vector<int> ids = {0, static_cast<int>(T - 1), 0};
        CHECK(grad_check(
                  [&](const Tensor& v) { return ops::gather_rows(v, ids); },
                  x, gen.uniform_vec(3 * C, -1, 1)) < 1e-4);
        break;
      }
    }
    ++checked;
  }
  CHECK(checked == 100);
}

TEST_CASE("gather_rows validates ids") {
  Tensor table = Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 6});
  std::vector<int> bad = {0, 3};
  CHECK_THROWS_AS(ops::gather_rows(table, bad), ContractError);
  std::vector<int> neg = {-1};
  CHECK_THROWS_AS(ops::gather_rows(table, neg), ContractError);
}
