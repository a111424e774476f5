// Copyright 2026 The advtts Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef ADVTTS_OPS_HPP
#define ADVTTS_OPS_HPP

#include <span>
#include <vector>

#include "advtts/tape.hpp"
#include "advtts/tensor.hpp"

// Differentiable tensor operations. Every op computes its value eagerly and,
// when any input lives on a tape, records a backward rule there. Ops on plain
// tensors record nothing, so the same code paths serve training and
// inference.
//
// Binary elementwise ops accept equal shapes at any rank, or a 1xC row
// broadcast against a TxC matrix (either operand); richer broadcasting is
// rejected.
namespace advtts::ops {

enum class ConvMode { kSame, kCausal };

// a[m x k] * b[k x n].
Tensor matmul(const Tensor& a, const Tensor& b);
// a[m x k] * b[n x k]^T -> [m x n].
Tensor matmul_nt(const Tensor& a, const Tensor& b);

// x[T x Cin] convolved with kernel[W x Cin x Cout] -> [T x Cout].
// kSame zero-pads (W-1)/2 on both sides and requires odd W; kCausal pads
// W-1 on the left only, so output step t depends on inputs <= t.
Tensor conv1d(const Tensor& x, const Tensor& kernel, ConvMode mode);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor relu(const Tensor& x);
// x / (1 + |x|)
Tensor softsign(const Tensor& x);
// DomainError on any non-positive element.
Tensor log(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor scale(const Tensor& x, double c);

// Row-wise stable softmax of a rank-2 tensor; each output row sums to 1.
Tensor softmax_rows(const Tensor& x);
// Row-wise log(softmax), computed as x - max - log(sum exp(x - max)).
Tensor log_softmax_rows(const Tensor& x);
// Each row divided by (||row||_2 + eps).
Tensor l2_normalize_rows(const Tensor& x, double eps = 1e-12);

// Scalar reductions over all elements; DomainError on an empty tensor.
Tensor reduce_sum(const Tensor& x);
Tensor reduce_mean(const Tensor& x);
Tensor reduce_mean_abs(const Tensor& x);

// Row lookup: out[i] = table[ids[i]]. Backward scatter-adds into the table.
Tensor gather_rows(const Tensor& table, std::span<const int> ids);

// Escape hatch for custom backward rules: emits `value` as the output of a
// node whose inputs are `inputs` and whose vjp is `backward` (one gradient
// per input, in order). With no input on a tape, `value` is returned as a
// plain constant.
Tensor custom(const std::vector<Tensor>& inputs, Tensor value,
              Tape::BackwardFn backward);

}  // namespace advtts::ops

#endif  // ADVTTS_OPS_HPP
