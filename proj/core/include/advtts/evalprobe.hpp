// Copyright 2026 The advtts Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef ADVTTS_EVALPROBE_HPP
#define ADVTTS_EVALPROBE_HPP

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "advtts/model.hpp"
#include "advtts/synthdata.hpp"
#include "advtts/tensor.hpp"

namespace advtts::eval {

struct ProbeResult {
  double accuracy = 0.0;
  double chance = 0.0;  // 1 / num_classes
  int num_eval = 0;
};

struct ProbeOptions {
  int hidden_units = 32;  // mirror the model classifier's hidden layer
  int steps = 600;
  double lr_peak = 0.02;
  int warmup_steps = 50;
};

struct AlignmentReport {
  double monotonicity = 0.0;
  double coverage = 0.0;
  std::vector<std::size_t> path;  // per-decoder-step argmax positions
};

struct EmbeddingSet {
  Tensor features;          // N x dim
  std::vector<int> labels;  // speaker per row
};

// Mean text embedding per utterance, encoder run tape-free.
EmbeddingSet extract_embeddings(const model::ModelParams& params,
                                std::span<const data::Utterance> subset);

// Mean raw frame per utterance; sanity input that carries full speaker
// signal.
EmbeddingSet mean_frame_embeddings(std::span<const data::Utterance> subset);

// Diagnostic classifier: fresh single-hidden-layer softmax head (no reversal
// layer) trained on a seeded 80/20 split; reports eval-split accuracy.
// ContractError when any class has fewer than two examples.
ProbeResult train_probe(const EmbeddingSet& data, int num_classes,
                        std::uint64_t seed, const ProbeOptions& options = {});

// Path is the per-row argmax (ties to the lowest index); monotonicity is the
// fraction of consecutive steps with 0 <= delta <= forward_window; coverage
// is the fraction of encoder positions the path visits.
AlignmentReport alignment_report(const Tensor& alignment,
                                 int forward_window = 3);

// Writes `<base>.csv` (6 significant digits) and `<base>.pgm` (binary P5,
// weights scaled by 255 / max).
void export_alignment(const Tensor& alignment,
                      const std::filesystem::path& base);

std::string probe_csv(const ProbeResult& result);
void write_probe_csv(const ProbeResult& result,
                     const std::filesystem::path& path);

}  // namespace advtts::eval

#endif  // ADVTTS_EVALPROBE_HPP
