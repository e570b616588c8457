// include/sodm/decode.hpp

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

#include <span>
#include <string>
#include <vector>

#include "sodm/boundary.hpp"
#include "sodm/corpus.hpp"
#include "sodm/lm.hpp"
#include "sodm/model.hpp"

namespace sodm {

inline constexpr double kFramePriorFloor = 1e-6;

/// Mean posterior over every frame at temperature 1, floored and renormalised.
Vector estimate_frame_prior(const Classifier& classifier, int window_size,
                            std::span<const FeatureSequence> utterances);

struct Decoded {
  std::vector<Label> frame_labels;
  std::vector<Label> phonemes;
};

/// Beam MAP frame labelling with LM terms scaled by lm_weight, collapsed to
/// one symbol per run.
Decoded decode_utterance(const Classifier& classifier, int window_size, const NGramLM& lm,
                         const Vector& frame_prior, const BoundaryPriorSignal& boundary_prior,
                         const FeatureSequence& features, int beam_width, double lm_weight = 1.0);

double fer(std::span<const Label> pred, std::span<const Label> gold);

/// FER after removing the leading and trailing gold-silence runs (from both
/// sequences). Returns 0 when nothing remains.
double fer_star(std::span<const Label> pred, std::span<const Label> gold, Label silence = kSilence);

/// Unit-cost Levenshtein distance.
std::size_t edit_distance(std::span<const Label> a, std::span<const Label> b);

/// edit_distance(pred, gold) / |gold|; throws DataError on empty gold.
double per(std::span<const Label> pred, std::span<const Label> gold);

struct UtteranceScores {
  std::string utterance_id;
  double fer = 0.0;
  double fer_star = 0.0;
  double per = 0.0;
};

struct EvalReport {
  // Pooled rates: error counts over total counts across the corpus.
  double fer = 0.0;
  double fer_star = 0.0;
  double per = 0.0;
  std::vector<UtteranceScores> utterances;
  /// confusion[gold][pred] frame counts.
  std::vector<std::vector<long long>> confusion;

  /// "name value" lines for the machine-readable summary.
  std::string summary() const;
  /// Human readable report.
  std::string text() const;
};

EvalReport evaluate(std::span<const std::vector<Label>> pred_frames, std::span<const std::vector<Label>> gold_frames,
                    std::span<const std::vector<Label>> pred_phonemes,
                    std::span<const std::vector<Label>> gold_phonemes, int alphabet_size,
                    std::span<const std::string> utterance_ids = {});

}  // namespace sodm
