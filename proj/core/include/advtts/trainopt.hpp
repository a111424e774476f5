// Copyright 2026 The advtts Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef ADVTTS_TRAINOPT_HPP
#define ADVTTS_TRAINOPT_HPP

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "advtts/model.hpp"
#include "advtts/synthdata.hpp"

namespace advtts::train {

struct AdamConfig {
  double beta1 = 0.5;
  double beta2 = 0.9;
  double epsilon = 1e-6;
  double lr_peak = 0.0005;
  int warmup_steps = 500;
  double clip_norm = 0.1;
};

void validate(const AdamConfig& cfg);

struct AdamState {
  int step = 0;
  std::vector<double> first_moment;
  std::vector<double> second_moment;
};

// lr_peak * min(step / warmup, sqrt(warmup / step)); peaks exactly at
// step == warmup. Steps are 1-based.
double noam_lr(int step, const AdamConfig& cfg);

double l2_norm(std::span<const double> values);

// Global-norm clipping: if ||g|| > clip_norm, rescale so ||g|| == clip_norm.
// NumericError on non-finite input.
std::vector<double> clip_gradients(std::vector<double> grads,
                                   double clip_norm);

// Bias-corrected Adam update in place; the learning rate for the step comes
// from noam_lr. Fresh states get zero moments sized on first use.
void adam_step(std::vector<double>& params, std::span<const double> grads,
               AdamState& state, const AdamConfig& cfg);

// Which gradients the clip threshold applies to: the combined gradient, or
// only the classifier-loss gradient before it is added to the generation
// gradient.
enum class ClipScope { kAll, kClassifier };

struct TrainOptions {
  int steps = 1;
  int batch_size = 8;
  bool adversarial = true;  // false trains with lambda = 0
  std::uint64_t seed = 1;
  bool train_window = false;  // windowed attention during teacher forcing
  ClipScope clip_scope = ClipScope::kAll;
};

struct TrainRecord {
  int step = 0;
  double lr = 0.0;
  double l1 = 0.0;
  double ams = 0.0;
  double grad_norm = 0.0;  // pre-clip global norm
};

struct TrainLog {
  std::vector<TrainRecord> records;

  // CSV with header `step,lr,l1,ams,grad_norm`.
  std::string to_csv() const;
  void write_csv(const std::filesystem::path& path) const;
};

struct TrainResult {
  model::ModelParams params;
  AdamState state;
  TrainLog log;
};

// Joint training loop: per step, sample a batch with replacement, run the
// teacher-forced forward per utterance, average the joint losses, backward,
// clip, Adam. Deterministic for fixed inputs. `init` overrides the default
// seed-derived initialization (used to start two runs from identical
// weights). NumericError citing the step number on divergence.
TrainResult train(std::span<const data::Utterance> corpus,
                  const model::ModelConfig& model_cfg,
                  const AdamConfig& adam_cfg, const TrainOptions& options,
                  const model::ModelParams* init = nullptr);

struct Checkpoint {
  model::ModelConfig config;
  model::ModelParams params;
  AdamState state;
};

// Text manifest (config, then every stored array's name and shape in
// canonical order, model parameters first, then the two Adam moment arrays)
// followed by the arrays as little-endian IEEE-754 doubles in manifest
// order. Round trips are bit-exact.
void save_checkpoint(const model::ModelParams& params,
                     const model::ModelConfig& cfg, const AdamState& state,
                     const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace advtts::train

#endif  // ADVTTS_TRAINOPT_HPP
