// Copyright 2026 The advtts Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef ADVTTS_TAPE_HPP
#define ADVTTS_TAPE_HPP

#include <cstdint>
#include <functional>
#include <unordered_map>
#include <vector>

#include "advtts/tensor.hpp"

namespace advtts {

// Gradients keyed by tape node id. Each gradient has the shape of the tensor
// it differentiates. Nodes that do not contribute to the loss have no entry.
class GradStore {
 public:
  bool contains(const Tensor& t) const;
  // Gradient for a tensor; ContractError when absent or off-tape.
  const Tensor& at(const Tensor& t) const;
  // Gradient for a tensor, or zeros of its shape when absent.
  Tensor at_or_zeros(const Tensor& t) const;
  std::size_t size() const { return grads_.size(); }

  void accumulate(std::int64_t node, const Tensor& grad);
  const Tensor* find(std::int64_t node) const;

 private:
  std::unordered_map<std::int64_t, Tensor> grads_;
};

// Reverse-mode differentiation over a define-by-run Wengert list. A tape is
// rebuilt per forward pass and confined to one thread; node ids are appended
// in topological order (every input id is smaller than its output id).
class Tape {
 public:
  using BackwardFn = std::function<std::vector<Tensor>(const Tensor& upstream)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers a constant as a differentiable leaf of this tape. Watching a
  // tensor already bound to this tape returns it unchanged; a tensor bound to
  // another tape is a contract violation.
  Tensor watch(const Tensor& t);

  // Records an operation node. `inputs` must already live on this tape;
  // `backward` maps the upstream gradient to one gradient per input, in
  // order. This is also the hook for custom rules (gradient reversal).
  Tensor record(Tensor value, const std::vector<std::int64_t>& inputs,
                BackwardFn backward);

  // Reverse traversal from a scalar loss on this tape. Multiple calls on the
  // same tape are independent; each returns a fresh store.
  GradStore backward(const Tensor& loss) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct NodeRecord {
    std::vector<std::int64_t> inputs;
    BackwardFn backward;  // empty for leaves
    std::vector<std::size_t> shape;
  };

  std::vector<NodeRecord> nodes_;
};

}  // namespace advtts

#endif  // ADVTTS_TAPE_HPP
