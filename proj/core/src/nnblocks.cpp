// Copyright 2026 The advtts Authors
// SPDX-License-Identifier: Apache-2.0

#include "advtts/nnblocks.hpp"

#include <cmath>
#include <string>

#include "advtts/errors.hpp"

namespace advtts::nn {

namespace {

constexpr double kMaskSentinel = -1e30;
constexpr double kFlushThreshold = 1e-300;

}  // namespace

void validate(const GrlConfig& cfg) {
  if (!(cfg.lambda >= 0.0))
    throw ConfigError("grl: lambda must be nonnegative");
}

void validate(const AmSoftmaxConfig& cfg) {
  if (!(cfg.scale > 0.0))
    throw ConfigError("am_softmax: scale must be positive");
  if (!(cfg.margin >= 0.0 && cfg.margin < 1.0))
    throw ConfigError("am_softmax: margin must lie in [0, 1)");
  if (cfg.num_classes < 1)
    throw ConfigError("am_softmax: num_classes must be positive");
}

void validate(const AttentionWindow& window) {
  if (window.back < 0 || window.forward < 0)
    throw ConfigError("attention window offsets must be nonnegative");
}

Tensor gradient_reversal(const Tensor& x, const GrlConfig& cfg) {
  validate(cfg);
  const double lambda = cfg.lambda;
  // Forward output shares x's buffer, so bit-identity is structural.
  return ops::custom({x}, x.detached(),
                     [lambda](const Tensor& up) -> std::vector<Tensor> {
                       std::span<const double> pu = up.data();
                       std::vector<double> g(pu.size());
                       for (std::size_t i = 0; i < g.size(); ++i)
                         g[i] = -lambda * pu[i];
                       return {Tensor(up.shape(), std::move(g))};
                     });
}

Tensor conditioned_conv_block(const Tensor& x, const Tensor& speaker_emb,
                              const ConvBlockParams& params,
                              ops::ConvMode mode) {
  if (x.rank() != 2)
    throw ConfigError("conv block: input must be T x C, got " +
                      x.shape_str());
  const std::size_t channels = x.cols();
  if (params.kernel.rank() != 3 || params.kernel.shape()[1] != channels ||
      params.kernel.shape()[2] != channels)
    throw ConfigError("conv block: kernel " + params.kernel.shape_str() +
                      " does not map " + std::to_string(channels) +
                      " channels onto themselves");
  if (speaker_emb.rank() != 2 || speaker_emb.rows() != 1)
    throw ConfigError("conv block: speaker embedding must be 1 x S, got " +
                      speaker_emb.shape_str());
  if (params.speaker_proj.rank() != 2 ||
      params.speaker_proj.rows() != speaker_emb.cols() ||
      params.speaker_proj.cols() != channels)
    throw ConfigError("conv block: speaker projection " +
                      params.speaker_proj.shape_str() + " does not map " +
                      speaker_emb.shape_str() + " to " +
                      std::to_string(channels) + " channels");

  Tensor conv = ops::conv1d(x, params.kernel, mode);
  Tensor cond = ops::matmul(speaker_emb, params.speaker_proj);
  Tensor act = ops::softsign(ops::add(conv, cond));
  return ops::scale(ops::add(act, x), params.residual_scale);
}

Tensor positional_encoding(std::size_t length, std::size_t dim) {
  if (dim == 0 || dim % 2 != 0)
    throw ConfigError("positional encoding dim must be even, got " +
                      std::to_string(dim));
  if (length == 0)
    throw ConfigError("positional encoding length must be positive");
  std::vector<double> out(length * dim);
  for (std::size_t t = 0; t < length; ++t)
    for (std::size_t i = 0; i < dim / 2; ++i) {
      const double rate = std::pow(
          10000.0, (2.0 * static_cast<double>(i)) / static_cast<double>(dim));
      const double angle = static_cast<double>(t) / rate;
      out[t * dim + 2 * i] = std::sin(angle);
      out[t * dim + 2 * i + 1] = std::cos(angle);
    }
  return Tensor({length, dim}, std::move(out));
}

AttentionResult windowed_attention(const Tensor& query, const Tensor& keys,
                                   const Tensor& values, int prev_pos,
                                   const AttentionWindow& window,
                                   bool enforce) {
  validate(window);
  if (query.rank() != 2 || query.rows() != 1)
    throw ContractError("attention query must be 1 x D, got " +
                        query.shape_str());
  if (keys.rank() != 2 || keys.cols() != query.cols())
    throw DimensionError("attention keys " + keys.shape_str() +
                         " do not match query " + query.shape_str());
  if (values.rank() != 2 || values.rows() != keys.rows())
    throw DimensionError("attention values " + values.shape_str() +
                         " do not match keys " + keys.shape_str());
  const std::size_t steps = keys.rows();
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(query.cols()));

  Tensor scores = ops::scale(ops::matmul_nt(query, keys), inv_sqrt_d);

  if (enforce) {
    const std::ptrdiff_t lo_raw = prev_pos - window.back;
    const std::ptrdiff_t hi_raw = prev_pos + window.forward;
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(lo_raw, 0);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(
        hi_raw, static_cast<std::ptrdiff_t>(steps) - 1);
    if (lo > hi)
      throw ContractError("attention window [" + std::to_string(lo_raw) +
                          ", " + std::to_string(hi_raw) +
                          "] is empty after clipping to [0, " +
                          std::to_string(steps - 1) + "]");
    std::vector<double> mask(steps, kMaskSentinel);
    for (std::ptrdiff_t j = lo; j <= hi; ++j)
      mask[static_cast<std::size_t>(j)] = 0.0;
    scores = ops::add(scores, Tensor({1, steps}, std::move(mask)));
  }

  Tensor weights = ops::softmax_rows(scores);

  if (enforce) {
    // Flush sub-denormal leakage so out-of-window weights are exact zeros.
    std::span<const double> pw = weights.data();
    std::vector<double> keep(pw.size());
    bool any_flushed = false;
    for (std::size_t j = 0; j < keep.size(); ++j) {
      keep[j] = pw[j] < kFlushThreshold ? 0.0 : 1.0;
      any_flushed |= keep[j] == 0.0;
    }
    if (any_flushed)
      weights = ops::mul(weights, Tensor({1, steps}, std::move(keep)));
  }

  return AttentionResult{ops::matmul(weights, values), weights};
}

std::size_t argmax_row(const Tensor& row) {
  if (row.size() == 0) throw ContractError("argmax of empty tensor");
  std::span<const double> p = row.data();
  std::size_t best = 0;
  for (std::size_t i = 1; i < p.size(); ++i)
    if (p[i] > p[best]) best = i;
  return best;
}

Tensor am_softmax_loss(const Tensor& features, const Tensor& class_weights,
                       std::span<const int> labels,
                       const AmSoftmaxConfig& cfg) {
  validate(cfg);
  if (features.rank() != 2 || class_weights.rank() != 2)
    throw DimensionError(
        "am_softmax: features and class weights must be rank 2");
  const std::size_t n = features.rows();
  const std::size_t classes = class_weights.rows();
  if (static_cast<int>(classes) != cfg.num_classes)
    throw ConfigError("am_softmax: class weight rows " +
                      std::to_string(classes) + " != configured classes " +
                      std::to_string(cfg.num_classes));
  if (class_weights.cols() != features.cols())
    throw DimensionError("am_softmax: feature dim " + features.shape_str() +
                         " != class weight dim " + class_weights.shape_str());
  if (labels.size() != n)
    throw ContractError("am_softmax: " + std::to_string(labels.size()) +
                        " labels for " + std::to_string(n) + " examples");
  for (int label : labels)
    if (label < 0 || static_cast<std::size_t>(label) >= classes)
      throw ContractError("am_softmax: label " + std::to_string(label) +
                          " out of range [0, " + std::to_string(classes) +
                          ")");

  Tensor f_hat = ops::l2_normalize_rows(features);
  Tensor w_hat = ops::l2_normalize_rows(class_weights);
  Tensor cosines = ops::matmul_nt(f_hat, w_hat);  // n x C

  std::vector<double> one_hot(n * classes, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    one_hot[i * classes + static_cast<std::size_t>(labels[i])] = 1.0;
  Tensor targets({n, classes}, std::move(one_hot));

  Tensor logits = ops::scale(
      ops::sub(cosines, ops::scale(targets, cfg.margin)), cfg.scale);
  Tensor log_probs = ops::log_softmax_rows(logits);
  Tensor picked = ops::mul(log_probs, targets);
  return ops::scale(ops::reduce_sum(picked), -1.0 / static_cast<double>(n));
}

Tensor l1_loss(const Tensor& pred, const Tensor& target) {
  if (!pred.same_shape(target))
    throw ContractError("l1_loss: shape mismatch " + pred.shape_str() +
                        " vs " + target.shape_str());
  return ops::reduce_mean_abs(ops::sub(pred, target));
}

}  // namespace advtts::nn
