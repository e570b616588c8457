// src/boundary.cpp

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

#include "sodm/boundary.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

#include "sodm/error.hpp"

namespace sodm {

namespace {

double quantile(std::vector<double> values, double q) {
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

double cosine(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 1.0;
  return a.dot(b) / (na * nb);
}

}  // namespace

BoundaryPriorSignal boundary_prior(const FeatureSequence& features, const DetectorConfig& config) {
  const int T = features.length();
  if (T < 1) throw DataError("boundary_prior needs at least one frame");
  if (config.half_width < 1) throw ConfigError("detector half_width must be >= 1");
  BoundaryPriorSignal out;
  out.prob.assign(static_cast<std::size_t>(T), 1.0);
  if (T == 1) return out;

  const int d = config.half_width;
  auto window_mean = [&](int from, int count) {
    Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(features.dim());
    for (int k = 0; k < count; ++k) acc += features.frames.row(std::clamp(from + k, 0, T - 1));
    return Eigen::RowVectorXd(acc / count);
  };
  std::vector<double> novelty(static_cast<std::size_t>(T - 1));
  for (int t = 1; t < T; ++t) {
    novelty[static_cast<std::size_t>(t - 1)] = 1.0 - cosine(window_mean(t - d, d), window_mean(t, d));
  }
  const double median = quantile(novelty, 0.5);
  double scale = quantile(novelty, 0.75) - quantile(novelty, 0.25);
  if (!(scale > 1e-12)) scale = 1.0;
  for (int t = 1; t < T; ++t) {
    const double z = (novelty[static_cast<std::size_t>(t - 1)] - median) / scale;
    const double p = 1.0 / (1.0 + std::exp(-z));
    out.prob[static_cast<std::size_t>(t)] = std::clamp(p, config.clamp, 1.0 - config.clamp);
  }
  return out;
}

BoundaryDetector spectral_delta_detector(DetectorConfig config) {
  return [config](const FeatureSequence& f) { return boundary_prior(f, config); };
}

Segmentation initial_boundaries(const BoundaryPriorSignal& prior, double threshold, int min_segment_len) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("boundary threshold must lie in (0, 1)");
  if (min_segment_len < 1) throw ConfigError("min_segment_len must be >= 1");
  const int T = prior.length();
  const auto& p = prior.prob;
  constexpr double kNone = -std::numeric_limits<double>::infinity();

  std::vector<int> candidates;
  for (int t = 1; t < T; ++t) {
    const double left = t - 1 >= 1 ? p[static_cast<std::size_t>(t - 1)] : kNone;
    const double right = t + 1 < T ? p[static_cast<std::size_t>(t + 1)] : kNone;
    const double v = p[static_cast<std::size_t>(t)];
    if (v > threshold && v > left && v >= right) candidates.push_back(t);
  }
  // Strongest first; equal strength keeps the earlier frame.
  std::stable_sort(candidates.begin(), candidates.end(), [&](int a, int b) {
    return p[static_cast<std::size_t>(a)] > p[static_cast<std::size_t>(b)];
  });
  std::vector<int> accepted{0};
  for (int t : candidates) {
    const bool clear = std::all_of(accepted.begin(), accepted.end(),
                                   [&](int s) { return std::abs(s - t) >= min_segment_len; });
    if (clear) accepted.push_back(t);
  }
  return Segmentation::from_starts(T, accepted);
}

namespace {

struct Hyp {
  Label label;
  std::vector<Label> history;  // last N-1 segment labels
  double score;
  int parent;
};

std::uint64_t state_key(Label label, const std::vector<Label>& history, int alphabet_size) {
  const auto base = static_cast<std::uint64_t>(alphabet_size) + 1;
  std::uint64_t key = static_cast<std::uint64_t>(history.size());
  for (Label h : history) key = key * base + static_cast<std::uint64_t>(h + 1);
  return key * base + static_cast<std::uint64_t>(label + 1);
}

}  // namespace

BeamResult beam_search(const Matrix& posteriors, const NGramLM& lm, const Vector& frame_prior,
                       const BoundaryPriorSignal& boundary_prior, const BeamOptions& options) {
  if (options.beam_width < 1) throw ConfigError("beam width must be >= 1");
  if (!(options.lm_weight >= 0)) throw ConfigError("lm_weight must be >= 0");
  const int T = static_cast<int>(posteriors.rows());
  const int Y = static_cast<int>(posteriors.cols());
  if (T < 1) throw DataError("beam search needs at least one frame");
  if (frame_prior.size() != Y || lm.alphabet_size() != Y) throw ShapeError("alphabet sizes disagree");
  if (boundary_prior.length() != T) throw ShapeError("boundary prior length differs from utterance");
  if ((frame_prior.array() <= 0.0).any()) throw ConfigError("frame prior must be strictly positive");

  const std::size_t max_history = static_cast<std::size_t>(lm.order() - 1);
  const Vector log_prior = frame_prior.array().log();
  Matrix acoustic(T, Y);
  for (int t = 0; t < T; ++t) {
    for (int y = 0; y < Y; ++y) acoustic(t, y) = std::log(posteriors(t, y)) - log_prior(y);
  }

  std::vector<std::vector<Hyp>> frames(static_cast<std::size_t>(T));
  std::vector<Hyp> candidates;
  std::unordered_map<std::uint64_t, std::size_t> index;

  auto finish_frame = [&](std::vector<Hyp>& out) {
    // Order: score desc, label asc, creation order (stable).
    std::vector<std::size_t> order(candidates.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (candidates[a].score != candidates[b].score) return candidates[a].score > candidates[b].score;
      return candidates[a].label < candidates[b].label;
    });
    // Drop impossible hypotheses unless nothing else survives.
    const bool any_finite = std::any_of(candidates.begin(), candidates.end(),
                                        [](const Hyp& h) { return std::isfinite(h.score); });
    for (std::size_t k : order) {
      if (static_cast<int>(out.size()) >= options.beam_width) break;
      if (any_finite && !std::isfinite(candidates[k].score)) continue;
      out.push_back(std::move(candidates[k]));
    }
    candidates.clear();
    index.clear();
  };

  auto offer = [&](Hyp&& h) {
    const auto key = state_key(h.label, h.history, Y);
    auto it = index.find(key);
    if (it == index.end()) {
      index.emplace(key, candidates.size());
      candidates.push_back(std::move(h));
    } else if (h.score > candidates[it->second].score) {
      candidates[it->second] = std::move(h);
    }
  };

  auto lm_term = [&](double p) { return options.lm_weight == 0.0 ? 0.0 : options.lm_weight * std::log(p); };

  const std::vector<Label> empty;
  for (int y = 0; y < Y; ++y) {
    Hyp h{y, {}, acoustic(0, y) + lm_term(lm.cond_prob(y, empty)), -1};
    if (max_history > 0) h.history.push_back(y);
    offer(std::move(h));
  }
  finish_frame(frames[0]);

  for (int t = 1; t < T; ++t) {
    const double p1 = boundary_prior.prob[static_cast<std::size_t>(t)];
    const double log_stay = std::log(1.0 - p1);
    const double log_change = std::log(p1);
    const auto& prev = frames[static_cast<std::size_t>(t - 1)];
    for (std::size_t k = 0; k < prev.size(); ++k) {
      const Hyp& h = prev[k];
      for (int y = 0; y < Y; ++y) {
        Hyp next{y, h.history, h.score + acoustic(t, y), static_cast<int>(k)};
        if (y == h.label) {
          next.score += log_stay;
        } else {
          next.score += log_change + lm_term(lm.cond_prob(y, h.history));
          if (max_history > 0) {
            next.history.push_back(y);
            if (next.history.size() > max_history) next.history.erase(next.history.begin());
          }
        }
        offer(std::move(next));
      }
    }
    finish_frame(frames[static_cast<std::size_t>(t)]);
  }

  BeamResult result;
  result.labels.resize(static_cast<std::size_t>(T));
  const auto& last = frames.back();
  result.score = last.front().score;
  int k = 0;
  for (int t = T - 1; t >= 0; --t) {
    const Hyp& h = frames[static_cast<std::size_t>(t)][static_cast<std::size_t>(k)];
    result.labels[static_cast<std::size_t>(t)] = h.label;
    k = h.parent;
  }
  return result;
}

Matrix frame_posteriors(const Classifier& classifier, const FeatureSequence& features, int window_size,
                        double temperature) {
  return classifier.forward(context_windows(features, window_size), temperature);
}

Refinement refine_boundaries(const Classifier& classifier, int window_size, const NGramLM& lm,
                             const Vector& frame_prior, const BoundaryPriorSignal& boundary_prior,
                             const FeatureSequence& features, int beam_width) {
  const Matrix post = frame_posteriors(classifier, features, window_size);
  BeamResult best = beam_search(post, lm, frame_prior, boundary_prior, {beam_width, 1.0});
  Refinement out;
  out.segmentation = Segmentation::from_labels(best.labels);
  out.labels = {std::move(best.labels), lm.alphabet_size()};
  out.score = best.score;
  return out;
}

SegMetrics seg_metrics(double recall, double precision) {
  SegMetrics m;
  m.recall = recall;
  m.precision = precision;
  m.f_score = recall + precision > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
  if (precision > 0.0) {
    const double os = recall / precision - 1.0;
    const double r1 = std::sqrt((1.0 - recall) * (1.0 - recall) + os * os);
    const double r2 = (-os + recall - 1.0) / std::sqrt(2.0);
    m.r_value = 1.0 - (std::abs(r1) + std::abs(r2)) / 2.0;
  }
  return m;
}

SegMetrics seg_metrics(const SegCounts& counts) {
  // Nothing to find counts as full recall; nothing proposed as full precision.
  const double recall = counts.ref > 0 ? static_cast<double>(counts.hits) / static_cast<double>(counts.ref) : 1.0;
  const double precision =
      counts.hyp > 0 ? static_cast<double>(counts.hits) / static_cast<double>(counts.hyp) : 1.0;
  SegMetrics m = seg_metrics(recall, precision);
  m.counts = counts;
  return m;
}

SegCounts match_boundaries(const Segmentation& hyp, const Segmentation& ref, int tolerance_frames) {
  if (hyp.length() != ref.length()) throw ShapeError("segmentations differ in length");
  if (tolerance_frames < 0) throw ConfigError("tolerance must be >= 0");
  std::vector<int> h;
  std::vector<int> r;
  for (int t = 1; t < hyp.length(); ++t) {
    if (hyp.is_boundary(t)) h.push_back(t);
    if (ref.is_boundary(t)) r.push_back(t);
  }
  // Earliest-feasible two-pointer matching gives a maximum one-to-one
  // matching for interval constraints, so the hit count is symmetric.
  SegCounts c;
  c.hyp = static_cast<long long>(h.size());
  c.ref = static_cast<long long>(r.size());
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < r.size() && j < h.size()) {
    if (h[j] < r[i] - tolerance_frames) {
      ++j;
    } else if (h[j] > r[i] + tolerance_frames) {
      ++i;
    } else {
      ++c.hits;
      ++i;
      ++j;
    }
  }
  return c;
}

SegMetrics eval_segmentation(const Segmentation& hyp, const Segmentation& ref, int tolerance_frames) {
  return seg_metrics(match_boundaries(hyp, ref, tolerance_frames));
}

SegMetrics eval_segmentation(std::span<const Segmentation> hyp, std::span<const Segmentation> ref,
                             int tolerance_frames) {
  if (hyp.size() != ref.size()) throw ShapeError("segmentation lists differ in size");
  SegCounts total;
  for (std::size_t k = 0; k < hyp.size(); ++k) total += match_boundaries(hyp[k], ref[k], tolerance_frames);
  return seg_metrics(total);
}

}  // namespace sodm
