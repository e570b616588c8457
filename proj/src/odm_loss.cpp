// src/odm_loss.cpp

// Copyright 2026 The sodm Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "sodm/odm_loss.hpp"

#include <algorithm>
#include <cmath>

#include "sodm/error.hpp"

namespace sodm {

int sample_in_segment(const Segment& segment, std::mt19937_64& rng) {
  const int a = segment.begin;
  const int b = segment.end - 1;
  if (b <= a) return a;
  std::normal_distribution<double> normal(0.0, 1.0);
  double u = normal(rng);
  while (u < -2.0 || u > 2.0) u = normal(rng);
  const int t = static_cast<int>(std::lround(a + (u + 2.0) / 4.0 * (b - a)));
  return std::clamp(t, a, b);
}

TauSample sample_tau(std::span<const Segmentation> segmentations, std::mt19937_64& rng) {
  TauSample tau;
  tau.reserve(segmentations.size());
  for (const auto& seg : segmentations) {
    std::vector<int> picks;
    picks.reserve(seg.segments().size());
    for (const auto& s : seg.segments()) picks.push_back(sample_in_segment(s, rng));
    tau.push_back(std::move(picks));
  }
  return tau;
}

void LossConfig::validate() const {
  if (!(lambda >= 0)) throw ConfigError("lambda must be >= 0");
  if (ngram_order < 1) throw ConfigError("ngram_order must be >= 1");
  if (k_top < 1) throw ConfigError("k_top must be >= 1");
  if (fs_sample_size < 2) throw ConfigError("fs_sample_size must be >= 2");
  if (batch_size_segments < 1) throw ConfigError("batch_size_segments must be >= 1");
  if (!(temperature > 0)) throw ConfigError("temperature must be > 0");
}

OdmTerm j_odm(const Matrix& posteriors, std::span<const int> segments_per_utterance, const TopKTable& table) {
  if (table.empty()) throw DataError("J_ODM needs a non-empty N-gram table");
  const int n = table.order;
  if (posteriors.cols() != table.alphabet_size) throw ShapeError("posterior width differs from LM alphabet");

  // Row index of the last segment of every valid window.
  std::vector<int> window_ends;
  int offset = 0;
  for (int count : segments_per_utterance) {
    for (int i = n - 1; i < count; ++i) window_ends.push_back(offset + i);
    offset += count;
  }
  if (offset != posteriors.rows()) throw ShapeError("segment layout does not cover the posterior rows");
  if (window_ends.empty()) throw DataError("batch has no N-gram window (every utterance shorter than N segments)");
  const double inv_windows = 1.0 / static_cast<double>(window_ends.size());

  OdmTerm out;
  out.grad = Matrix::Zero(posteriors.rows(), posteriors.cols());
  std::vector<double> prefix(static_cast<std::size_t>(n) + 1);
  std::vector<double> suffix(static_cast<std::size_t>(n) + 1);

  for (std::size_t k = 0; k < table.size(); ++k) {
    const NGram& z = table.ngrams[k];
    const double p_lm = table.probs[k];
    double pbar = 0.0;
    for (int end : window_ends) {
      double prod = 1.0;
      for (int j = 0; j < n; ++j) prod *= posteriors(end - n + 1 + j, z[static_cast<std::size_t>(j)]);
      pbar += prod;
    }
    pbar *= inv_windows;
    if (pbar < kOdmLogFloor) {
      out.value -= p_lm * std::log(kOdmLogFloor);
      continue;  // floored: zero gradient
    }
    out.value -= p_lm * std::log(pbar);
    const double coef = -p_lm / pbar * inv_windows;
    if (coef == 0.0) continue;
    for (int end : window_ends) {
      const int start = end - n + 1;
      prefix[0] = 1.0;
      for (int j = 0; j < n; ++j) {
        prefix[static_cast<std::size_t>(j) + 1] =
            prefix[static_cast<std::size_t>(j)] * posteriors(start + j, z[static_cast<std::size_t>(j)]);
      }
      suffix[static_cast<std::size_t>(n)] = 1.0;
      for (int j = n - 1; j >= 0; --j) {
        suffix[static_cast<std::size_t>(j)] =
            suffix[static_cast<std::size_t>(j) + 1] * posteriors(start + j, z[static_cast<std::size_t>(j)]);
      }
      for (int j = 0; j < n; ++j) {
        out.grad(start + j, z[static_cast<std::size_t>(j)]) +=
            coef * prefix[static_cast<std::size_t>(j)] * suffix[static_cast<std::size_t>(j) + 1];
      }
    }
  }
  return out;
}

FsTerm j_fs(const Matrix& first, const Matrix& second) {
  if (first.rows() != second.rows() || first.cols() != second.cols()) throw ShapeError("J_FS pair shapes differ");
  FsTerm out;
  const Matrix diff = first - second;
  out.value = diff.squaredNorm();
  out.grad_first = 2.0 * diff;
  out.grad_second = -2.0 * diff;
  return out;
}

std::vector<TrainingUtterance> prepare_utterances(std::span<const FeatureSequence> features,
                                                  std::span<const Segmentation> segmentations,
                                                  int window_size) {
  if (features.size() != segmentations.size()) throw ShapeError("features and segmentations not aligned");
  std::vector<TrainingUtterance> out;
  out.reserve(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (segmentations[i].length() != features[i].length()) {
      throw ShapeError("segmentation length differs from utterance '" + features[i].utterance_id + "'");
    }
    out.push_back({context_windows(features[i], window_size), segmentations[i]});
  }
  return out;
}

std::vector<FramePair> sample_fs_pairs(std::span<const TrainingUtterance> utterances, std::span<const int> batch,
                                       int sample_size, std::mt19937_64& rng) {
  std::vector<long long> starts;
  long long total = 0;
  for (int u : batch) {
    starts.push_back(total);
    total += utterances[static_cast<std::size_t>(u)].segmentation.length();
  }
  if (total < 2) return {};
  const long long run = std::min<long long>(sample_size, total);
  std::uniform_int_distribution<long long> pick(0, total - run);
  const long long first = pick(rng);

  std::vector<FramePair> pairs;
  std::size_t b = 0;
  for (long long g = first; g + 1 < first + run; ++g) {
    while (b + 1 < starts.size() && starts[b + 1] <= g) ++b;
    const int u = batch[b];
    const auto& seg = utterances[static_cast<std::size_t>(u)].segmentation;
    const int t = static_cast<int>(g - starts[b]);
    if (t + 1 < seg.length() && !seg.is_boundary(t + 1)) pairs.push_back({u, t});
  }
  return pairs;
}

namespace {

Matrix gather_tau_rows(std::span<const TrainingUtterance> utterances, std::span<const int> batch,
                       const TauSample& tau, std::vector<int>& counts) {
  std::size_t rows = 0;
  for (int u : batch) rows += tau[static_cast<std::size_t>(u)].size();
  const auto cols = utterances[static_cast<std::size_t>(batch.front())].inputs.cols();
  Matrix x(static_cast<Eigen::Index>(rows), cols);
  Eigen::Index r = 0;
  counts.clear();
  for (int u : batch) {
    const auto& utt = utterances[static_cast<std::size_t>(u)];
    const auto& picks = tau[static_cast<std::size_t>(u)];
    if (static_cast<int>(picks.size()) != utt.segmentation.num_segments()) {
      throw ShapeError("tau sample does not match the utterance segmentation");
    }
    for (int t : picks) x.row(r++) = utt.inputs.row(t);
    counts.push_back(static_cast<int>(picks.size()));
  }
  return x;
}

void gather_pair_rows(std::span<const TrainingUtterance> utterances, std::span<const FramePair> pairs,
                      Eigen::Index cols, Matrix& first, Matrix& second) {
  first.resize(static_cast<Eigen::Index>(pairs.size()), cols);
  second.resize(static_cast<Eigen::Index>(pairs.size()), cols);
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto& utt = utterances[static_cast<std::size_t>(pairs[k].utterance)];
    if (pairs[k].frame < 0 || pairs[k].frame + 1 >= utt.inputs.rows()) throw ShapeError("frame pair out of range");
    first.row(static_cast<Eigen::Index>(k)) = utt.inputs.row(pairs[k].frame);
    second.row(static_cast<Eigen::Index>(k)) = utt.inputs.row(pairs[k].frame + 1);
  }
}

}  // namespace

std::pair<LossValue, Gradients> combined_loss(const Classifier& classifier,
                                              std::span<const TrainingUtterance> utterances,
                                              std::span<const int> batch, const TauSample& tau,
                                              std::span<const FramePair> pairs, const TopKTable& table,
                                              const LossConfig& config) {
  if (batch.empty()) throw DataError("empty batch");
  std::vector<int> counts;
  const Matrix x_tau = gather_tau_rows(utterances, batch, tau, counts);
  const ForwardCache tau_cache = classifier.forward_cached(x_tau, config.temperature);
  const OdmTerm odm = j_odm(tau_cache.posteriors, counts, table);

  LossValue value;
  value.odm = odm.value;
  Gradients grads = classifier.backward(x_tau, tau_cache, odm.grad, config.temperature);

  if (!pairs.empty()) {
    Matrix x_first;
    Matrix x_second;
    gather_pair_rows(utterances, pairs, x_tau.cols(), x_first, x_second);
    const ForwardCache c_first = classifier.forward_cached(x_first, config.temperature);
    const ForwardCache c_second = classifier.forward_cached(x_second, config.temperature);
    const FsTerm fs = j_fs(c_first.posteriors, c_second.posteriors);
    value.fs = fs.value;
    if (config.lambda > 0.0) {
      grads += classifier.backward(x_first, c_first, config.lambda * fs.grad_first, config.temperature);
      grads += classifier.backward(x_second, c_second, config.lambda * fs.grad_second, config.temperature);
    }
  }
  value.total = value.odm + config.lambda * value.fs;
  return {value, std::move(grads)};
}

double odm_value(const Classifier& classifier, std::span<const TrainingUtterance> utterances,
                 std::span<const int> batch, const TauSample& tau, const TopKTable& table, double temperature) {
  if (batch.empty()) throw DataError("empty batch");
  std::vector<int> counts;
  const Matrix x_tau = gather_tau_rows(utterances, batch, tau, counts);
  return j_odm(classifier.forward(x_tau, temperature), counts, table).value;
}

}  // namespace sodm
