// include/sodm/odm_loss.hpp

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

#pragma once

#include <random>
#include <span>
#include <vector>

#include "sodm/corpus.hpp"
#include "sodm/lm.hpp"
#include "sodm/model.hpp"

namespace sodm {

/// Floor applied to the batch N-gram distribution before the logarithm.
inline constexpr double kOdmLogFloor = 1e-12;

/// One sampled frame per segment, per utterance: tau[u][i] lies in segment i
/// of utterance u.
using TauSample = std::vector<std::vector<int>>;

/// Draws a frame from [begin, end) with a standard normal truncated to
/// [-2, 2], mapped linearly onto the segment and rounded.
int sample_in_segment(const Segment& segment, std::mt19937_64& rng);

TauSample sample_tau(std::span<const Segmentation> segmentations, std::mt19937_64& rng);

struct LossConfig {
  double lambda = 1e-5;
  int ngram_order = 2;
  std::size_t k_top = 10000;
  int fs_sample_size = 10000;
  int batch_size_segments = 500;
  double temperature = 1.0;

  void validate() const;
};

struct LossValue {
  double total = 0.0;
  double odm = 0.0;
  double fs = 0.0;
};

/// Value and gradient with respect to the posterior rows it was given.
struct OdmTerm {
  double value = 0.0;
  Matrix grad;
};

/// Inter-segment output distribution match.
///
/// `posteriors` holds one row per sampled segment, utterance after utterance;
/// `segments_per_utterance` gives the row count of each utterance so that
/// N-gram windows never straddle two utterances. The batch distribution is
///   pbar(z) = 1/W * sum_w prod_j posteriors[w_j][z_j]
/// over the W valid windows, and the value is -sum_{z in table} p(z) ln pbar(z).
/// Throws DataError when no utterance holds N segments.
OdmTerm j_odm(const Matrix& posteriors, std::span<const int> segments_per_utterance, const TopKTable& table);

struct FsTerm {
  double value = 0.0;
  Matrix grad_first;
  Matrix grad_second;
};

/// Frame smoothness: sum over pairs of ||first_r - second_r||^2.
FsTerm j_fs(const Matrix& first, const Matrix& second);

/// Utterance prepared for training: context-window inputs plus segmentation.
struct TrainingUtterance {
  Matrix inputs;
  Segmentation segmentation;
};

std::vector<TrainingUtterance> prepare_utterances(std::span<const FeatureSequence> features,
                                                  std::span<const Segmentation> segmentations,
                                                  int window_size);

/// Adjacent frames (frame, frame + 1) of one utterance inside one segment.
struct FramePair {
  int utterance = 0;
  int frame = 0;
  bool operator==(const FramePair&) const = default;
};

/// Picks a run of `sample_size` contiguous frames uniformly from the batch
/// (utterances laid end to end) and keeps its within-segment adjacent pairs.
std::vector<FramePair> sample_fs_pairs(std::span<const TrainingUtterance> utterances,
                                       std::span<const int> batch, int sample_size, std::mt19937_64& rng);

/// J = J_ODM + lambda * J_FS on one batch, with exact parameter gradients.
/// `batch` indexes into `utterances` and `tau`; `pairs` index utterances
/// directly.
std::pair<LossValue, Gradients> combined_loss(const Classifier& classifier,
                                              std::span<const TrainingUtterance> utterances,
                                              std::span<const int> batch, const TauSample& tau,
                                              std::span<const FramePair> pairs, const TopKTable& table,
                                              const LossConfig& config);

/// J_ODM value only (no gradient) over the given utterances.
double odm_value(const Classifier& classifier, std::span<const TrainingUtterance> utterances,
                 std::span<const int> batch, const TauSample& tau, const TopKTable& table,
                 double temperature);

}  // namespace sodm
