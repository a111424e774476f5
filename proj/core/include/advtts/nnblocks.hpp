// Copyright 2026 The advtts Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef ADVTTS_NNBLOCKS_HPP
#define ADVTTS_NNBLOCKS_HPP

#include <cstddef>
#include <span>
#include <vector>

#include "advtts/ops.hpp"
#include "advtts/tensor.hpp"

namespace advtts::nn {

// Gradient scaling of the reversal layer. lambda = 0 detaches the classifier
// from whatever feeds it; lambda = 1 is full adversarial coupling.
struct GrlConfig {
  double lambda = 1.0;
};

struct AmSoftmaxConfig {
  double scale = 40.0;
  double margin = 0.6;
  int num_classes = 0;
};

// Band the decoder may attend to around the previously attended encoder
// position: [prev - back, prev + forward].
struct AttentionWindow {
  int back = 1;
  int forward = 3;
};

void validate(const GrlConfig& cfg);
void validate(const AmSoftmaxConfig& cfg);
void validate(const AttentionWindow& window);

// Identity forward; backward multiplies the upstream gradient by -lambda.
Tensor gradient_reversal(const Tensor& x, const GrlConfig& cfg);

struct ConvBlockParams {
  Tensor kernel;        // W x C x C
  Tensor speaker_proj;  // S x C
  double residual_scale = 0.7071067811865476;  // sqrt(0.5)
};

// y = (softsign(conv(x) + speaker_emb * speaker_proj) + x) * residual_scale.
// The speaker term is a 1 x C row broadcast over all timesteps. Encoder
// instances use kSame, decoder instances kCausal.
Tensor conditioned_conv_block(const Tensor& x, const Tensor& speaker_emb,
                              const ConvBlockParams& params,
                              ops::ConvMode mode);

// Sinusoidal table: PE(t, 2i) = sin(t / 10000^(2i/dim)),
// PE(t, 2i+1) = cos(t / 10000^(2i/dim)). `dim` must be even.
Tensor positional_encoding(std::size_t length, std::size_t dim);

struct AttentionResult {
  Tensor context;  // 1 x D
  Tensor weights;  // 1 x Te
};

// Scaled dot-product attention of one query over the encoder memory. With
// enforce set, scores outside [prev_pos - back, prev_pos + forward] (clipped
// to the valid encoder range) are masked before the softmax and the masked
// weights are flushed to exact zero.
AttentionResult windowed_attention(const Tensor& query, const Tensor& keys,
                                   const Tensor& values, int prev_pos,
                                   const AttentionWindow& window,
                                   bool enforce);

// Index of the largest entry of a 1 x n row; ties resolve to the lowest
// index.
std::size_t argmax_row(const Tensor& row);

// Mean over examples of -log softmax probability of the labelled class,
// where logits are scale * (cos theta_j - margin * [j == label]) over
// L2-normalized features and class weights.
Tensor am_softmax_loss(const Tensor& features, const Tensor& class_weights,
                       std::span<const int> labels,
                       const AmSoftmaxConfig& cfg);

// Mean absolute difference over all elements.
Tensor l1_loss(const Tensor& pred, const Tensor& target);

}  // namespace advtts::nn

#endif  // ADVTTS_NNBLOCKS_HPP
