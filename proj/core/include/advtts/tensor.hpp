// Copyright 2026 The advtts Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef ADVTTS_TENSOR_HPP
#define ADVTTS_TENSOR_HPP

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

namespace advtts {

class Tape;

// Dense row-major tensor of doubles. Immutable after construction; copies
// share the underlying buffer. A tensor optionally carries a (tape, node)
// handle when it participates in differentiation; plain tensors are constants.
class Tensor {
 public:
  static constexpr std::int64_t kNoNode = -1;

  Tensor() = default;
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor full(std::vector<std::size_t> shape, double value);
  static Tensor scalar(double value);
  // 1 x n row vector.
  static Tensor row(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> data);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const;
  bool empty() const { return size() == 0; }

  // Rank-2 accessors; ContractError when the rank does not match.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const;
  double at(std::size_t i) const;
  double at(std::size_t i, std::size_t j) const;
  // Value of a single-element tensor.
  double value() const;

  bool on_tape() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  std::int64_t node() const { return node_; }

  // Same values, no tape linkage. Shares the underlying buffer.
  Tensor detached() const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  // "[2x3]" style rendering for error messages.
  std::string shape_str() const;

 private:
  friend class Tape;

  std::vector<std::size_t> shape_;
  std::shared_ptr<const std::vector<double>> data_;
  Tape* tape_ = nullptr;
  std::int64_t node_ = kNoNode;
};

}  // namespace advtts

#endif  // ADVTTS_TENSOR_HPP
