// Copyright 2026 The advtts Authors
// SPDX-License-Identifier: Apache-2.0

#include "advtts/evalprobe.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "advtts/errors.hpp"
#include "advtts/kvfile.hpp"
#include "advtts/ops.hpp"
#include "advtts/prng.hpp"
#include "advtts/trainopt.hpp"

namespace advtts::eval {

namespace {

Tensor mean_rows(const Tensor& m) {
  const std::size_t rows = m.rows(), cols = m.cols();
  std::vector<double> out(cols, 0.0);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[j] += m.at(i, j);
  for (double& v : out) v /= static_cast<double>(rows);
  return Tensor({1, cols}, std::move(out));
}

EmbeddingSet stack_rows(std::vector<Tensor> rows, std::vector<int> labels) {
  const std::size_t n = rows.size();
  const std::size_t dim = rows.front().cols();
  std::vector<double> data(n * dim);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < dim; ++j) data[i * dim + j] = rows[i].at(0, j);
  return {Tensor({n, dim}, std::move(data)), std::move(labels)};
}

std::size_t argmax_lowest(std::span<const double> row) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < row.size(); ++j)
    if (row[j] > row[best]) best = j;
  return best;
}

Tensor select_rows(const Tensor& m, std::span<const std::size_t> idx) {
  const std::size_t cols = m.cols();
  std::vector<double> out(idx.size() * cols);
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = m.at(idx[i], j);
  return Tensor({idx.size(), cols}, std::move(out));
}

}  // namespace

EmbeddingSet extract_embeddings(const model::ModelParams& params,
                                std::span<const data::Utterance> subset) {
  if (subset.empty()) throw ContractError("extract_embeddings: empty subset");
  std::vector<Tensor> rows;
  std::vector<int> labels;
  rows.reserve(subset.size());
  labels.reserve(subset.size());
  for (const data::Utterance& utt : subset) {
    model::EncodeResult enc =
        model::encode_text(params, utt.symbols, utt.speaker);
    rows.push_back(mean_rows(enc.text_embedding));
    labels.push_back(utt.speaker);
  }
  return stack_rows(std::move(rows), std::move(labels));
}

EmbeddingSet mean_frame_embeddings(std::span<const data::Utterance> subset) {
  if (subset.empty())
    throw ContractError("mean_frame_embeddings: empty subset");
  std::vector<Tensor> rows;
  std::vector<int> labels;
  rows.reserve(subset.size());
  labels.reserve(subset.size());
  for (const data::Utterance& utt : subset) {
    rows.push_back(mean_rows(utt.frames));
    labels.push_back(utt.speaker);
  }
  return stack_rows(std::move(rows), std::move(labels));
}

ProbeResult train_probe(const EmbeddingSet& data, int num_classes,
                        std::uint64_t seed, const ProbeOptions& options) {
  if (num_classes < 2) throw ContractError("probe: need at least 2 classes");
  if (options.hidden_units < 1 || options.steps < 1)
    throw ConfigError("probe: invalid options");
  const std::size_t n = data.features.rows();
  const std::size_t dim = data.features.cols();
  if (data.labels.size() != n)
    throw ContractError("probe: label count does not match rows");

  std::vector<std::size_t> per_class(static_cast<std::size_t>(num_classes), 0);
  for (int label : data.labels) {
    if (label < 0 || label >= num_classes)
      throw ContractError("probe: label " + std::to_string(label) +
                          " out of range");
    ++per_class[static_cast<std::size_t>(label)];
  }
  for (std::size_t c = 0; c < per_class.size(); ++c)
    if (per_class[c] < 2)
      throw ContractError("probe: class " + std::to_string(c) +
                          " has fewer than 2 examples");

  // Seeded shuffle, then 80/20 split.
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  SplitMix64 rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_index(i + 1));
    std::swap(order[i], order[j]);
  }
  const std::size_t n_train = n * 4 / 5;
  const std::size_t n_eval = n - n_train;
  if (n_train == 0 || n_eval == 0)
    throw ContractError("probe: too few examples to split");

  std::span<const std::size_t> train_idx(order.data(), n_train);
  std::span<const std::size_t> eval_idx(order.data() + n_train, n_eval);
  Tensor x_train = select_rows(data.features, train_idx);
  Tensor x_eval = select_rows(data.features, eval_idx);

  const auto classes = static_cast<std::size_t>(num_classes);
  std::vector<double> one_hot(n_train * classes, 0.0);
  for (std::size_t i = 0; i < n_train; ++i)
    one_hot[i * classes +
            static_cast<std::size_t>(data.labels[train_idx[i]])] = 1.0;
  Tensor targets({n_train, classes}, std::move(one_hot));

  // Same shape as the model's classifier head, trained standalone.
  const auto hidden = static_cast<std::size_t>(options.hidden_units);
  SplitMix64 init_rng(seed ^ 0xF00Dull);
  auto init_tensor = [&](std::vector<std::size_t> shape, std::size_t fan_in) {
    std::size_t count = 1;
    for (std::size_t d : shape) count *= d;
    const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
    std::vector<double> values(count);
    for (double& v : values) v = bound * (2.0 * init_rng.uniform() - 1.0);
    return Tensor(std::move(shape), std::move(values));
  };
  Tensor w_hidden = init_tensor({dim, hidden}, dim);
  Tensor w_out = init_tensor({classes, hidden}, hidden);

  train::AdamConfig adam;
  adam.beta1 = 0.9;
  adam.beta2 = 0.999;
  adam.epsilon = 1e-8;
  adam.lr_peak = options.lr_peak;
  adam.warmup_steps = options.warmup_steps;
  train::AdamState state;
  std::vector<double> flat(dim * hidden + classes * hidden);

  auto pack = [&]() {
    std::copy(w_hidden.data().begin(), w_hidden.data().end(), flat.begin());
    std::copy(w_out.data().begin(), w_out.data().end(),
              flat.begin() + static_cast<std::ptrdiff_t>(dim * hidden));
  };
  auto unpack = [&]() {
    w_hidden = Tensor({dim, hidden},
                      {flat.begin(),
                       flat.begin() + static_cast<std::ptrdiff_t>(dim * hidden)});
    w_out = Tensor({classes, hidden},
                   {flat.begin() + static_cast<std::ptrdiff_t>(dim * hidden),
                    flat.end()});
  };
  pack();

  for (int step = 0; step < options.steps; ++step) {
    unpack();
    Tape tape;
    Tensor wh = tape.watch(w_hidden);
    Tensor wo = tape.watch(w_out);
    Tensor logits = ops::matmul_nt(ops::relu(ops::matmul(x_train, wh)), wo);
    Tensor log_probs = ops::log_softmax_rows(logits);
    Tensor loss = ops::scale(ops::reduce_sum(ops::mul(log_probs, targets)),
                             -1.0 / static_cast<double>(n_train));
    GradStore grads = tape.backward(loss);
    Tensor gh = grads.at_or_zeros(wh);
    Tensor go = grads.at_or_zeros(wo);
    std::vector<double> g(flat.size());
    std::copy(gh.data().begin(), gh.data().end(), g.begin());
    std::copy(go.data().begin(), go.data().end(),
              g.begin() + static_cast<std::ptrdiff_t>(dim * hidden));
    train::adam_step(flat, g, state, adam);
  }
  unpack();

  Tensor eval_logits =
      ops::matmul_nt(ops::relu(ops::matmul(x_eval, w_hidden)), w_out);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n_eval; ++i) {
    std::span<const double> row = eval_logits.data().subspan(i * classes,
                                                             classes);
    if (argmax_lowest(row) ==
        static_cast<std::size_t>(data.labels[eval_idx[i]]))
      ++correct;
  }
  return {static_cast<double>(correct) / static_cast<double>(n_eval),
          1.0 / static_cast<double>(num_classes), static_cast<int>(n_eval)};
}

AlignmentReport alignment_report(const Tensor& alignment,
                                 int forward_window) {
  if (alignment.rank() != 2 || alignment.size() == 0)
    throw ContractError("alignment_report: matrix must be nonempty rank 2");
  const std::size_t rows = alignment.rows(), cols = alignment.cols();

  AlignmentReport report;
  report.path.reserve(rows);
  for (std::size_t i = 0; i < rows; ++i)
    report.path.push_back(
        argmax_lowest(alignment.data().subspan(i * cols, cols)));

  if (rows < 2) {
    report.monotonicity = 1.0;
  } else {
    std::size_t good = 0;
    for (std::size_t i = 0; i + 1 < rows; ++i) {
      const auto delta = static_cast<std::ptrdiff_t>(report.path[i + 1]) -
                         static_cast<std::ptrdiff_t>(report.path[i]);
      if (delta >= 0 && delta <= forward_window) ++good;
    }
    report.monotonicity =
        static_cast<double>(good) / static_cast<double>(rows - 1);
  }

  const std::set<std::size_t> visited(report.path.begin(), report.path.end());
  report.coverage =
      static_cast<double>(visited.size()) / static_cast<double>(cols);
  return report;
}

void export_alignment(const Tensor& alignment,
                      const std::filesystem::path& base) {
  if (alignment.rank() != 2 || alignment.size() == 0)
    throw ContractError("export_alignment: matrix must be nonempty rank 2");
  const std::size_t rows = alignment.rows(), cols = alignment.cols();

  std::filesystem::path csv_path = base;
  csv_path += ".csv";
  std::ofstream csv(csv_path, std::ios::binary);
  if (!csv)
    throw IoError("cannot open '" + csv_path.string() + "' for writing");
  char buf[32];
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      std::snprintf(buf, sizeof(buf), "%.6g", alignment.at(i, j));
      if (j) csv << ',';
      csv << buf;
    }
    csv << '\n';
  }
  if (!csv) throw IoError("write to '" + csv_path.string() + "' failed");
  csv.close();

  double max = 0.0;
  for (double v : alignment.data()) max = std::max(max, v);

  std::filesystem::path pgm_path = base;
  pgm_path += ".pgm";
  std::ofstream pgm(pgm_path, std::ios::binary);
  if (!pgm)
    throw IoError("cannot open '" + pgm_path.string() + "' for writing");
  pgm << "P5\n" << cols << ' ' << rows << "\n255\n";
  for (double v : alignment.data()) {
    const long pixel = max > 0.0 ? std::lround(v * 255.0 / max) : 0;
    pgm.put(static_cast<char>(pixel < 0 ? 0 : (pixel > 255 ? 255 : pixel)));
  }
  if (!pgm) throw IoError("write to '" + pgm_path.string() + "' failed");
}

std::string probe_csv(const ProbeResult& result) {
  return "accuracy,chance,num_eval\n" + format_double(result.accuracy) + "," +
         format_double(result.chance) + "," + std::to_string(result.num_eval) +
         "\n";
}

void write_probe_csv(const ProbeResult& result,
                     const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << probe_csv(result);
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

}  // namespace advtts::eval
