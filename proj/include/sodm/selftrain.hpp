// include/sodm/selftrain.hpp

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

#include <cstdint>
#include <span>
#include <vector>

#include "sodm/boundary.hpp"
#include "sodm/corpus.hpp"
#include "sodm/lm.hpp"
#include "sodm/model.hpp"

namespace sodm {

/// Features paired with frame labels used as training targets. The labels
/// are either the system's own MAP output or, for the supervised
/// comparator, gold labels.
struct PseudoLabeledCorpus {
  std::vector<FeatureSequence> features;
  std::vector<LabelSequence> labels;
};

PseudoLabeledCorpus pseudo_label(const Classifier& classifier, int window_size, const NGramLM& lm,
                                 const Vector& frame_prior, std::span<const BoundaryPriorSignal> boundary_priors,
                                 std::span<const FeatureSequence> corpus, int beam_width);

struct SupervisedConfig {
  int window_size = 11;
  int hidden_dim = 512;
  int max_epochs = 40;
  int batch_size_frames = 256;
  double learning_rate = 0.05;
  double momentum = 0.9;
  /// Fraction of utterances held out for early stopping.
  double heldout_fraction = 0.1;
  /// Epochs without held-out improvement before stopping.
  int patience = 5;

  void validate() const;
};

struct SupervisedReport {
  std::vector<double> train_loss;    // mean cross-entropy per epoch
  std::vector<double> heldout_loss;  // held-out cross-entropy per epoch
  int best_epoch = -1;
};

/// Fresh classifier trained with frame cross-entropy on (window, label)
/// pairs; keeps the epoch with the lowest held-out cross-entropy.
Classifier retrain_on_pseudo_labels(const PseudoLabeledCorpus& data, int alphabet_size,
                                    const SupervisedConfig& config, std::uint64_t seed,
                                    SupervisedReport* report = nullptr);

}  // namespace sodm
