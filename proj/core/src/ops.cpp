// Copyright 2026 The advtts Authors
// SPDX-License-Identifier: Apache-2.0

#include "advtts/ops.hpp"

#include <cmath>
#include <cstdlib>
#include <string>
#include <utility>

#include "advtts/errors.hpp"

namespace advtts::ops {

namespace {

// Plain value-level matrix products used inside backward rules.
std::vector<double> mm_nn(std::span<const double> a, std::size_t m,
                          std::size_t k, std::span<const double> b,
                          std::size_t n) {
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t t = 0; t < k; ++t) {
      const double av = a[i * k + t];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += av * b[t * n + j];
    }
  return out;
}

// A[m x k] * B[n x k]^T -> [m x n]
std::vector<double> mm_nt(std::span<const double> a, std::size_t m,
                          std::size_t k, std::span<const double> b,
                          std::size_t n) {
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) acc += a[i * k + t] * b[j * k + t];
      out[i * n + j] = acc;
    }
  return out;
}

// A[m x k]^T * B[m x n] -> [k x n]
std::vector<double> mm_tn(std::span<const double> a, std::size_t m,
                          std::size_t k, std::span<const double> b,
                          std::size_t n) {
  std::vector<double> out(k * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t t = 0; t < k; ++t) {
      const double av = a[i * k + t];
      for (std::size_t j = 0; j < n; ++j) out[t * n + j] += av * b[i * n + j];
    }
  return out;
}

// Column sums of a T x C matrix as a 1 x C row.
Tensor col_sum(const Tensor& m) {
  const std::size_t rows = m.shape()[0], cols = m.shape()[1];
  std::vector<double> out(cols, 0.0);
  std::span<const double> v = m.data();
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[j] += v[i * cols + j];
  return Tensor({1, cols}, std::move(out));
}

enum class BinaryLayout { kEqual, kRowA, kRowB };

BinaryLayout binary_layout(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return BinaryLayout::kEqual;
  if (a.rank() == 2 && b.rank() == 2 && a.shape()[1] == b.shape()[1]) {
    if (b.shape()[0] == 1) return BinaryLayout::kRowB;
    if (a.shape()[0] == 1) return BinaryLayout::kRowA;
  }
  throw DimensionError(std::string(op) + ": incompatible shapes " +
                       a.shape_str() + " and " + b.shape_str());
}

template <typename Fn>
Tensor binary_forward(const Tensor& a, const Tensor& b, BinaryLayout layout,
                      Fn&& fn) {
  if (layout == BinaryLayout::kEqual) {
    std::span<const double> pa = a.data(), pb = b.data();
    std::vector<double> out(pa.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fn(pa[i], pb[i]);
    return Tensor(a.shape(), std::move(out));
  }
  const Tensor& big = layout == BinaryLayout::kRowB ? a : b;
  const Tensor& rowt = layout == BinaryLayout::kRowB ? b : a;
  const std::size_t rows = big.shape()[0], cols = big.shape()[1];
  std::span<const double> pb = big.data(), pr = rowt.data();
  std::vector<double> out(rows * cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      const double x = pb[i * cols + j];
      const double y = pr[j];
      out[i * cols + j] =
          layout == BinaryLayout::kRowB ? fn(x, y) : fn(y, x);
    }
  return Tensor(big.shape(), std::move(out));
}

template <typename Fn>
Tensor map_unary(const Tensor& x, Fn&& fn) {
  std::span<const double> px = x.data();
  std::vector<double> out(px.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fn(px[i]);
  return Tensor(x.shape(), std::move(out));
}

Tensor finish(const std::vector<Tensor>& inputs, Tensor value,
              Tape::BackwardFn backward) {
  Tape* tape = nullptr;
  for (const Tensor& t : inputs) {
    if (!t.on_tape()) continue;
    if (tape == nullptr)
      tape = t.tape();
    else if (tape != t.tape())
      throw ContractError("operands live on different tapes");
  }
  if (tape == nullptr) return value;
  std::vector<std::int64_t> ids;
  ids.reserve(inputs.size());
  for (const Tensor& t : inputs) ids.push_back(tape->watch(t).node());
  return tape->record(std::move(value), ids, std::move(backward));
}

}  // namespace

Tensor custom(const std::vector<Tensor>& inputs, Tensor value,
              Tape::BackwardFn backward) {
  return finish(inputs, std::move(value), std::move(backward));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw DimensionError("matmul: operands must be rank 2, got " +
                         a.shape_str() + " and " + b.shape_str());
  if (a.cols() != b.rows())
    throw DimensionError("matmul: inner dimensions differ, " + a.shape_str() +
                         " vs " + b.shape_str());
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor value({m, n}, mm_nn(a.data(), m, k, b.data(), n));
  const Tensor av = a.detached(), bv = b.detached();
  return finish({a, b}, std::move(value),
                [av, bv, m, k, n](const Tensor& up) -> std::vector<Tensor> {
                  Tensor da({m, k}, mm_nt(up.data(), m, n, bv.data(), k));
                  Tensor db({k, n}, mm_tn(av.data(), m, k, up.data(), n));
                  return {std::move(da), std::move(db)};
                });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw DimensionError("matmul_nt: operands must be rank 2, got " +
                         a.shape_str() + " and " + b.shape_str());
  if (a.cols() != b.cols())
    throw DimensionError("matmul_nt: contraction dimensions differ, " +
                         a.shape_str() + " vs " + b.shape_str());
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  Tensor value({m, n}, mm_nt(a.data(), m, k, b.data(), n));
  const Tensor av = a.detached(), bv = b.detached();
  return finish({a, b}, std::move(value),
                [av, bv, m, k, n](const Tensor& up) -> std::vector<Tensor> {
                  Tensor da({m, k}, mm_nn(up.data(), m, n, bv.data(), k));
                  Tensor db({n, k}, mm_tn(up.data(), m, n, av.data(), k));
                  return {std::move(da), std::move(db)};
                });
}

Tensor conv1d(const Tensor& x, const Tensor& kernel, ConvMode mode) {
  if (x.rank() != 2)
    throw DimensionError("conv1d: input must be T x Cin, got " +
                         x.shape_str());
  if (kernel.rank() != 3)
    throw DimensionError("conv1d: kernel must be W x Cin x Cout, got " +
                         kernel.shape_str());
  const std::size_t T = x.shape()[0], cin = x.shape()[1];
  const std::size_t W = kernel.shape()[0], cout = kernel.shape()[2];
  if (kernel.shape()[1] != cin)
    throw DimensionError("conv1d: kernel input channels " +
                         kernel.shape_str() + " do not match input " +
                         x.shape_str());
  if (mode == ConvMode::kSame && W % 2 == 0)
    throw ConfigError("conv1d: same padding requires odd kernel width, got " +
                      std::to_string(W));
  const std::ptrdiff_t offset =
      mode == ConvMode::kSame ? static_cast<std::ptrdiff_t>((W - 1) / 2)
                              : static_cast<std::ptrdiff_t>(W - 1);

  std::span<const double> px = x.data(), pk = kernel.data();
  std::vector<double> out(T * cout, 0.0);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t w = 0; w < W; ++w) {
      const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t + w) - offset;
      if (s < 0 || s >= static_cast<std::ptrdiff_t>(T)) continue;
      for (std::size_t i = 0; i < cin; ++i) {
        const double xv = px[static_cast<std::size_t>(s) * cin + i];
        for (std::size_t o = 0; o < cout; ++o)
          out[t * cout + o] += xv * pk[(w * cin + i) * cout + o];
      }
    }

  Tensor value({T, cout}, std::move(out));
  const Tensor xv = x.detached(), kv = kernel.detached();
  return finish(
      {x, kernel}, std::move(value),
      [xv, kv, T, W, cin, cout, offset](const Tensor& up)
          -> std::vector<Tensor> {
        std::span<const double> pu = up.data();
        std::span<const double> px2 = xv.data(), pk2 = kv.data();
        std::vector<double> dx(T * cin, 0.0), dk(W * cin * cout, 0.0);
        for (std::size_t t = 0; t < T; ++t)
          for (std::size_t w = 0; w < W; ++w) {
            const std::ptrdiff_t s =
                static_cast<std::ptrdiff_t>(t + w) - offset;
            if (s < 0 || s >= static_cast<std::ptrdiff_t>(T)) continue;
            const std::size_t su = static_cast<std::size_t>(s);
            for (std::size_t i = 0; i < cin; ++i) {
              double acc = 0.0;
              for (std::size_t o = 0; o < cout; ++o) {
                const double u = pu[t * cout + o];
                acc += u * pk2[(w * cin + i) * cout + o];
                dk[(w * cin + i) * cout + o] += u * px2[su * cin + i];
              }
              dx[su * cin + i] += acc;
            }
          }
        return {Tensor({T, cin}, std::move(dx)),
                Tensor({W, cin, cout}, std::move(dk))};
      });
}

namespace {

// Shared backward plumbing for add/sub/mul: maps the elementwise partials
// back through the optional row broadcast.
std::vector<Tensor> binary_backward(BinaryLayout layout, const Tensor& da_full,
                                    const Tensor& db_full) {
  switch (layout) {
    case BinaryLayout::kEqual:
      return {da_full, db_full};
    case BinaryLayout::kRowB:
      return {da_full, col_sum(db_full)};
    case BinaryLayout::kRowA:
      return {col_sum(da_full), db_full};
  }
  std::abort();
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  const BinaryLayout layout = binary_layout(a, b, "add");
  Tensor value = binary_forward(a, b, layout,
                                [](double x, double y) { return x + y; });
  return finish({a, b}, std::move(value),
                [layout](const Tensor& up) -> std::vector<Tensor> {
                  return binary_backward(layout, up, up);
                });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  const BinaryLayout layout = binary_layout(a, b, "sub");
  Tensor value = binary_forward(a, b, layout,
                                [](double x, double y) { return x - y; });
  return finish({a, b}, std::move(value),
                [layout](const Tensor& up) -> std::vector<Tensor> {
                  Tensor neg = map_unary(up, [](double u) { return -u; });
                  return binary_backward(layout, up, neg);
                });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const BinaryLayout layout = binary_layout(a, b, "mul");
  Tensor value = binary_forward(a, b, layout,
                                [](double x, double y) { return x * y; });
  const Tensor av = a.detached(), bv = b.detached();
  return finish(
      {a, b}, std::move(value),
      [layout, av, bv](const Tensor& up) -> std::vector<Tensor> {
        auto prod = [](double u, double v) { return u * v; };
        switch (layout) {
          case BinaryLayout::kEqual:
            return {binary_forward(up, bv, BinaryLayout::kEqual, prod),
                    binary_forward(up, av, BinaryLayout::kEqual, prod)};
          case BinaryLayout::kRowB:
            return {binary_forward(up, bv, BinaryLayout::kRowB, prod),
                    col_sum(binary_forward(up, av, BinaryLayout::kEqual,
                                           prod))};
          case BinaryLayout::kRowA:
            return {col_sum(binary_forward(up, bv, BinaryLayout::kEqual,
                                           prod)),
                    binary_forward(up, av, BinaryLayout::kRowB, prod)};
        }
        std::abort();
      });
}

Tensor relu(const Tensor& x) {
  Tensor value = map_unary(x, [](double v) { return v > 0.0 ? v : 0.0; });
  const Tensor xv = x.detached();
  return finish({x}, std::move(value),
                [xv](const Tensor& up) -> std::vector<Tensor> {
                  std::span<const double> pu = up.data(), px = xv.data();
                  std::vector<double> dx(pu.size());
                  for (std::size_t i = 0; i < dx.size(); ++i)
                    dx[i] = px[i] > 0.0 ? pu[i] : 0.0;
                  return {Tensor(xv.shape(), std::move(dx))};
                });
}

Tensor softsign(const Tensor& x) {
  Tensor value =
      map_unary(x, [](double v) { return v / (1.0 + std::fabs(v)); });
  const Tensor xv = x.detached();
  return finish({x}, std::move(value),
                [xv](const Tensor& up) -> std::vector<Tensor> {
                  std::span<const double> pu = up.data(), px = xv.data();
                  std::vector<double> dx(pu.size());
                  for (std::size_t i = 0; i < dx.size(); ++i) {
                    const double d = 1.0 + std::fabs(px[i]);
                    dx[i] = pu[i] / (d * d);
                  }
                  return {Tensor(xv.shape(), std::move(dx))};
                });
}

Tensor log(const Tensor& x) {
  std::span<const double> px = x.data();
  for (std::size_t i = 0; i < px.size(); ++i)
    if (!(px[i] > 0.0))
      throw DomainError("log: non-positive element at flat index " +
                        std::to_string(i));
  Tensor value = map_unary(x, [](double v) { return std::log(v); });
  const Tensor xv = x.detached();
  return finish({x}, std::move(value),
                [xv](const Tensor& up) -> std::vector<Tensor> {
                  std::span<const double> pu = up.data(), px2 = xv.data();
                  std::vector<double> dx(pu.size());
                  for (std::size_t i = 0; i < dx.size(); ++i)
                    dx[i] = pu[i] / px2[i];
                  return {Tensor(xv.shape(), std::move(dx))};
                });
}

Tensor exp(const Tensor& x) {
  Tensor value = map_unary(x, [](double v) { return std::exp(v); });
  const Tensor yv = value.detached();
  return finish({x}, std::move(value),
                [yv](const Tensor& up) -> std::vector<Tensor> {
                  std::span<const double> pu = up.data(), py = yv.data();
                  std::vector<double> dx(pu.size());
                  for (std::size_t i = 0; i < dx.size(); ++i)
                    dx[i] = pu[i] * py[i];
                  return {Tensor(yv.shape(), std::move(dx))};
                });
}

Tensor scale(const Tensor& x, double c) {
  Tensor value = map_unary(x, [c](double v) { return c * v; });
  return finish({x}, std::move(value),
                [c](const Tensor& up) -> std::vector<Tensor> {
                  return {map_unary(up, [c](double u) { return c * u; })};
                });
}

Tensor softmax_rows(const Tensor& x) {
  if (x.rank() != 2)
    throw DimensionError("softmax_rows: input must be rank 2, got " +
                         x.shape_str());
  const std::size_t rows = x.rows(), cols = x.cols();
  std::span<const double> px = x.data();
  std::vector<double> out(rows * cols);
  for (std::size_t i = 0; i < rows; ++i) {
    double m = px[i * cols];
    for (std::size_t j = 1; j < cols; ++j) m = std::max(m, px[i * cols + j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      const double e = std::exp(px[i * cols + j] - m);
      out[i * cols + j] = e;
      sum += e;
    }
    for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] /= sum;
  }
  Tensor value({rows, cols}, std::move(out));
  const Tensor yv = value.detached();
  return finish({x}, std::move(value),
                [yv, rows, cols](const Tensor& up) -> std::vector<Tensor> {
                  std::span<const double> pu = up.data(), py = yv.data();
                  std::vector<double> dx(rows * cols);
                  for (std::size_t i = 0; i < rows; ++i) {
                    double dot = 0.0;
                    for (std::size_t j = 0; j < cols; ++j)
                      dot += pu[i * cols + j] * py[i * cols + j];
                    for (std::size_t j = 0; j < cols; ++j)
                      dx[i * cols + j] =
                          py[i * cols + j] * (pu[i * cols + j] - dot);
                  }
                  return {Tensor({rows, cols}, std::move(dx))};
                });
}

Tensor log_softmax_rows(const Tensor& x) {
  if (x.rank() != 2)
    throw DimensionError("log_softmax_rows: input must be rank 2, got " +
                         x.shape_str());
  const std::size_t rows = x.rows(), cols = x.cols();
  std::span<const double> px = x.data();
  std::vector<double> out(rows * cols);
  for (std::size_t i = 0; i < rows; ++i) {
    double m = px[i * cols];
    for (std::size_t j = 1; j < cols; ++j) m = std::max(m, px[i * cols + j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j)
      sum += std::exp(px[i * cols + j] - m);
    const double lse = m + std::log(sum);
    for (std::size_t j = 0; j < cols; ++j)
      out[i * cols + j] = px[i * cols + j] - lse;
  }
  Tensor value({rows, cols}, std::move(out));
  const Tensor yv = value.detached();
  return finish({x}, std::move(value),
                [yv, rows, cols](const Tensor& up) -> std::vector<Tensor> {
                  std::span<const double> pu = up.data(), py = yv.data();
                  std::vector<double> dx(rows * cols);
                  for (std::size_t i = 0; i < rows; ++i) {
                    double row_sum = 0.0;
                    for (std::size_t j = 0; j < cols; ++j)
                      row_sum += pu[i * cols + j];
                    for (std::size_t j = 0; j < cols; ++j)
                      dx[i * cols + j] = pu[i * cols + j] -
                                         std::exp(py[i * cols + j]) * row_sum;
                  }
                  return {Tensor({rows, cols}, std::move(dx))};
                });
}

Tensor l2_normalize_rows(const Tensor& x, double eps) {
  if (x.rank() != 2)
    throw DimensionError("l2_normalize_rows: input must be rank 2, got " +
                         x.shape_str());
  if (!(eps > 0.0))
    throw ContractError("l2_normalize_rows: eps must be positive");
  const std::size_t rows = x.rows(), cols = x.cols();
  std::span<const double> px = x.data();
  std::vector<double> out(rows * cols);
  std::vector<double> norms(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      const double v = px[i * cols + j];
      sq += v * v;
    }
    norms[i] = std::sqrt(sq);
    const double denom = norms[i] + eps;
    for (std::size_t j = 0; j < cols; ++j)
      out[i * cols + j] = px[i * cols + j] / denom;
  }
  Tensor value({rows, cols}, std::move(out));
  const Tensor xv = x.detached();
  return finish(
      {x}, std::move(value),
      [xv, norms, eps, rows, cols](const Tensor& up) -> std::vector<Tensor> {
        std::span<const double> pu = up.data(), px2 = xv.data();
        std::vector<double> dx(rows * cols);
        for (std::size_t i = 0; i < rows; ++i) {
          const double n = norms[i];
          const double denom = n + eps;
          double dot = 0.0;
          for (std::size_t j = 0; j < cols; ++j)
            dot += pu[i * cols + j] * px2[i * cols + j];
          for (std::size_t j = 0; j < cols; ++j) {
            double g = pu[i * cols + j] / denom;
            if (n > 0.0)
              g -= px2[i * cols + j] * dot / (n * denom * denom);
            dx[i * cols + j] = g;
          }
        }
        return {Tensor({rows, cols}, std::move(dx))};
      });
}

namespace {

void require_nonempty(const Tensor& x, const char* op) {
  if (x.size() == 0)
    throw DomainError(std::string(op) + ": empty tensor");
}

}  // namespace

Tensor reduce_sum(const Tensor& x) {
  require_nonempty(x, "reduce_sum");
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  const auto shape = x.shape();
  return finish({x}, Tensor::scalar(acc),
                [shape](const Tensor& up) -> std::vector<Tensor> {
                  return {Tensor::full(shape, up.value())};
                });
}

Tensor reduce_mean(const Tensor& x) {
  require_nonempty(x, "reduce_mean");
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  const double n = static_cast<double>(x.size());
  const auto shape = x.shape();
  return finish({x}, Tensor::scalar(acc / n),
                [shape, n](const Tensor& up) -> std::vector<Tensor> {
                  return {Tensor::full(shape, up.value() / n)};
                });
}

Tensor reduce_mean_abs(const Tensor& x) {
  require_nonempty(x, "reduce_mean_abs");
  double acc = 0.0;
  for (double v : x.data()) acc += std::fabs(v);
  const double n = static_cast<double>(x.size());
  const Tensor xv = x.detached();
  return finish({x}, Tensor::scalar(acc / n),
                [xv, n](const Tensor& up) -> std::vector<Tensor> {
                  const double u = up.value() / n;
                  std::span<const double> px = xv.data();
                  std::vector<double> dx(px.size());
                  for (std::size_t i = 0; i < dx.size(); ++i) {
                    if (px[i] > 0.0)
                      dx[i] = u;
                    else if (px[i] < 0.0)
                      dx[i] = -u;
                    else
                      dx[i] = 0.0;
                  }
                  return {Tensor(xv.shape(), std::move(dx))};
                });
}

Tensor gather_rows(const Tensor& table, std::span<const int> ids) {
  if (table.rank() != 2)
    throw DimensionError("gather_rows: table must be rank 2, got " +
                         table.shape_str());
  if (ids.empty()) throw ContractError("gather_rows: empty id list");
  const std::size_t R = table.rows(), C = table.cols();
  for (int id : ids)
    if (id < 0 || static_cast<std::size_t>(id) >= R)
      throw ContractError("gather_rows: id " + std::to_string(id) +
                          " out of range [0, " + std::to_string(R) + ")");
  std::span<const double> pt = table.data();
  std::vector<double> out(ids.size() * C);
  for (std::size_t i = 0; i < ids.size(); ++i)
    for (std::size_t j = 0; j < C; ++j)
      out[i * C + j] = pt[static_cast<std::size_t>(ids[i]) * C + j];
  Tensor value({ids.size(), C}, std::move(out));
  std::vector<int> idv(ids.begin(), ids.end());
  return finish({table}, std::move(value),
                [idv, R, C](const Tensor& up) -> std::vector<Tensor> {
                  std::span<const double> pu = up.data();
                  std::vector<double> dt(R * C, 0.0);
                  for (std::size_t i = 0; i < idv.size(); ++i)
                    for (std::size_t j = 0; j < C; ++j)
                      dt[static_cast<std::size_t>(idv[i]) * C + j] +=
                          pu[i * C + j];
                  return {Tensor({R, C}, std::move(dt))};
                });
}

}  // namespace advtts::ops
