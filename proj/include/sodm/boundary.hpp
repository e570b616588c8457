// include/sodm/boundary.hpp

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

#include <functional>
#include <span>
#include <vector>

#include "sodm/corpus.hpp"
#include "sodm/lm.hpp"
#include "sodm/model.hpp"

namespace sodm {

/// Per-frame p(b_t = 1 | x). Entry 0 is 1 by convention.
struct BoundaryPriorSignal {
  std::vector<double> prob;

  int length() const { return static_cast<int>(prob.size()); }
};

struct DetectorConfig {
  /// Frames averaged on each side of a candidate boundary.
  int half_width = 3;
  double clamp = 1e-4;
};

using BoundaryDetector = std::function<BoundaryPriorSignal(const FeatureSequence&)>;

/// Spectral-delta detector: novelty(t) = 1 - cos(mean[t-d, t-1], mean[t, t+d-1])
/// with edge clamping, squashed through logistic((novelty - median) / IQR).
BoundaryPriorSignal boundary_prior(const FeatureSequence& features, const DetectorConfig& config = {});

BoundaryDetector spectral_delta_detector(DetectorConfig config = {});

/// Boundaries at local maxima of the prior above `threshold`; of two
/// boundaries closer than `min_segment_len` the weaker is dropped (equal
/// strength keeps the earlier). t = 0 is always a boundary.
Segmentation initial_boundaries(const BoundaryPriorSignal& prior, double threshold, int min_segment_len);

struct BeamOptions {
  int beam_width = 16;
  /// Multiplies every language-model log term.
  double lm_weight = 1.0;
};

struct BeamResult {
  std::vector<Label> labels;
  double score = 0.0;
};

/// Approximate MAP frame labelling under
///   prod_t p(y_t | y_<t) p(y_t | x_t) / p(y_t)
/// where staying in a segment costs p(b_t=0|x) and entering a new one costs
/// p(b_t=1|x) * p_LM(y_t | previous segment labels). Hypotheses sharing the
/// last frame label and LM history are merged.
///
/// `posteriors` is T x |Y| (classifier output at temperature 1).
BeamResult beam_search(const Matrix& posteriors, const NGramLM& lm, const Vector& frame_prior,
                       const BoundaryPriorSignal& boundary_prior, const BeamOptions& options);

/// Classifier posteriors for every frame of an utterance.
Matrix frame_posteriors(const Classifier& classifier, const FeatureSequence& features, int window_size,
                        double temperature = 1.0);

struct Refinement {
  LabelSequence labels;
  Segmentation segmentation;
  double score = 0.0;
};

Refinement refine_boundaries(const Classifier& classifier, int window_size, const NGramLM& lm,
                             const Vector& frame_prior, const BoundaryPriorSignal& boundary_prior,
                             const FeatureSequence& features, int beam_width);

struct SegCounts {
  long long hits = 0;
  long long hyp = 0;
  long long ref = 0;

  SegCounts& operator+=(const SegCounts& o) {
    hits += o.hits;
    hyp += o.hyp;
    ref += o.ref;
    return *this;
  }
};

struct SegMetrics {
  double recall = 0.0;
  double precision = 0.0;
  double f_score = 0.0;
  double r_value = 0.0;
  SegCounts counts;
};

/// Recall/precision/F/R-value from counts. An empty reference gives recall 1,
/// an empty hypothesis gives precision 1.
SegMetrics seg_metrics(const SegCounts& counts);
SegMetrics seg_metrics(double recall, double precision);

/// One-to-one boundary matching within +-tolerance frames, ignoring t = 0.
SegCounts match_boundaries(const Segmentation& hyp, const Segmentation& ref, int tolerance_frames);
SegMetrics eval_segmentation(const Segmentation& hyp, const Segmentation& ref, int tolerance_frames);
/// Corpus-level metrics from pooled counts.
SegMetrics eval_segmentation(std::span<const Segmentation> hyp, std::span<const Segmentation> ref,
                             int tolerance_frames);

}  // namespace sodm
