// Copyright 2026 The advtts Authors
// SPDX-License-Identifier: Apache-2.0

#include "advtts/tape.hpp"

#include <string>
#include <utility>

#include "advtts/errors.hpp"

namespace advtts {

bool GradStore::contains(const Tensor& t) const {
  return t.on_tape() && grads_.count(t.node()) > 0;
}

const Tensor& GradStore::at(const Tensor& t) const {
  if (!t.on_tape()) throw ContractError("gradient lookup for off-tape tensor");
  auto it = grads_.find(t.node());
  if (it == grads_.end())
    throw ContractError("no gradient recorded for node " +
                        std::to_string(t.node()));
  return it->second;
}

Tensor GradStore::at_or_zeros(const Tensor& t) const {
  if (t.on_tape()) {
    auto it = grads_.find(t.node());
    if (it != grads_.end()) return it->second;
  }
  return Tensor::zeros(t.shape());
}

const Tensor* GradStore::find(std::int64_t node) const {
  auto it = grads_.find(node);
  return it == grads_.end() ? nullptr : &it->second;
}

void GradStore::accumulate(std::int64_t node, const Tensor& grad) {
  auto it = grads_.find(node);
  if (it == grads_.end()) {
    grads_.emplace(node, grad);
    return;
  }
  if (!it->second.same_shape(grad))
    throw DimensionError("gradient shape " + grad.shape_str() +
                         " does not match accumulated " +
                         it->second.shape_str());
  std::vector<double> sum(it->second.data().begin(), it->second.data().end());
  std::span<const double> add = grad.data();
  for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += add[i];
  it->second = Tensor(grad.shape(), std::move(sum));
}

Tensor Tape::watch(const Tensor& t) {
  if (t.on_tape()) {
    if (t.tape() != this)
      throw ContractError("tensor is bound to a different tape");
    return t;
  }
  Tensor bound = t;
  bound.tape_ = this;
  bound.node_ = static_cast<std::int64_t>(nodes_.size());
  nodes_.push_back(NodeRecord{{}, nullptr, t.shape()});
  return bound;
}

Tensor Tape::record(Tensor value, const std::vector<std::int64_t>& inputs,
                    BackwardFn backward) {
  const auto next = static_cast<std::int64_t>(nodes_.size());
  for (std::int64_t id : inputs) {
    if (id < 0 || id >= next)
      throw ContractError("tape inputs must precede their output node");
  }
  value.tape_ = this;
  value.node_ = next;
  nodes_.push_back(NodeRecord{inputs, std::move(backward), value.shape()});
  return value;
}

GradStore Tape::backward(const Tensor& loss) const {
  if (!loss.on_tape() || loss.tape() != this)
    throw ContractError("backward: loss is not on this tape");
  if (loss.size() != 1)
    throw ContractError("backward: loss " + loss.shape_str() +
                        " is not scalar");

  GradStore store;
  store.accumulate(loss.node(), Tensor(loss.shape(), {1.0}));

  for (std::int64_t id = loss.node(); id >= 0; --id) {
    const NodeRecord& node = nodes_[static_cast<std::size_t>(id)];
    if (!node.backward) continue;  // leaf
    const Tensor* upstream = store.find(id);
    if (upstream == nullptr) continue;  // does not feed the loss
    std::vector<Tensor> input_grads = node.backward(*upstream);
    if (input_grads.size() != node.inputs.size())
      throw ContractError("backward rule returned " +
                          std::to_string(input_grads.size()) +
                          " gradients for " +
                          std::to_string(node.inputs.size()) + " inputs");
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      const auto in_id = node.inputs[k];
      const auto& in_shape = nodes_[static_cast<std::size_t>(in_id)].shape;
      if (input_grads[k].shape() != in_shape)
        throw DimensionError("backward rule produced gradient " +
                             input_grads[k].shape_str() +
                             " for an input of different shape");
      store.accumulate(in_id, input_grads[k]);
    }
  }
  return store;
}

}  // namespace advtts
