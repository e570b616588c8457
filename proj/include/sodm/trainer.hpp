// include/sodm/trainer.hpp

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
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sodm/boundary.hpp"
#include "sodm/corpus.hpp"
#include "sodm/lm.hpp"
#include "sodm/model.hpp"
#include "sodm/odm_loss.hpp"

namespace sodm {

struct Stage {
  int epochs = 1;
  int batch_size_segments = 500;
  double temperature = 1.0;
  bool operator==(const Stage&) const = default;
};

/// Staged SGD schedule. The learning rate is reset to its base value at the
/// start of each stage and decays by `lr_decay` after every epoch.
struct Schedule {
  std::vector<Stage> stages;
  double learning_rate = 1e-3;
  double momentum = 0.9;
  double lr_decay = 0.999;

  /// 200/300/300/300 epochs at batch 500/5000/10000/20000 segments and
  /// temperature 1.0/0.9/0.8/0.7; lr 1e-3, momentum 0.9.
  static Schedule large();
  /// Desk-scale schedule used by the bundled presets.
  static Schedule desk();

  int total_epochs() const;
  void validate() const;
};

/// v <- mu * v - lr * grad; theta <- theta + v.
class MomentumSgd {
 public:
  MomentumSgd(const ClassifierDims& dims, double momentum);

  void step(Classifier& classifier, const Gradients& grad, double learning_rate);
  const Gradients& velocity() const { return velocity_; }

 private:
  Gradients velocity_;
  double momentum_;
};

struct EpochRecord {
  int epoch = 0;  // global, 0-based
  int stage = 0;
  double learning_rate = 0.0;
  double j = 0.0;
  double j_odm = 0.0;
  double j_fs = 0.0;
  double self_validation = 0.0;
  std::optional<double> diagnostic_fer;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;

  /// One "key=value ..." record per epoch.
  std::string to_lines() const;
  void save(const std::filesystem::path& path) const;
};

struct TrainerConfig {
  int window_size = 11;
  int hidden_dim = 512;
  LossConfig loss;
  Schedule schedule = Schedule::large();
  std::uint64_t seed = 1;
  /// Seeds the fixed tau used for every self-validation evaluation.
  std::uint64_t validation_seed = 7;

  void validate() const;
};

/// Features with their (unsupervised) segmentations. No gold labels here.
struct SegmentedSet {
  std::span<const FeatureSequence> features;
  std::span<const Segmentation> segmentations;
};

/// Optional gold-based diagnostic evaluated after each epoch. Its value is
/// only recorded, never used for model selection.
using Diagnostic = std::function<double(const Classifier&)>;

struct TrainResult {
  Classifier best;
  TrainReport report;
};

/// Runs the staged schedule on the combined loss and returns the epoch with
/// the lowest self-validation loss. Starts from `initial` when given.
TrainResult train_classifier(const SegmentedSet& train, const SegmentedSet& heldout, const TopKTable& table,
                             const TrainerConfig& config, const std::optional<Classifier>& initial = std::nullopt,
                             const Diagnostic& diagnostic = {});

/// J_ODM over the whole held-out set at temperature 1 with a tau drawn once
/// from `validation_seed`.
double self_validation_loss(const Classifier& classifier, int window_size, const SegmentedSet& heldout,
                            const TopKTable& table, std::uint64_t validation_seed);

struct AlternateConfig {
  TrainerConfig trainer;
  int outer_iterations = 2;
  int beam_width = 16;
  /// Continue training from the previous iteration's classifier.
  bool warm_start = true;
  /// When set, every iteration's checkpoint, report and segmentations land here.
  std::optional<std::filesystem::path> output_dir;

  void validate() const;
};

struct IterationReport {
  int iteration = 0;
  TrainReport train;
  Classifier classifier;
  Vector frame_prior;
  /// Boundaries refined with this iteration's classifier.
  std::vector<Segmentation> train_segmentations;
  std::vector<Segmentation> heldout_segmentations;
};

struct AlternateResult {
  Classifier classifier;
  std::vector<Segmentation> train_segmentations;
  std::vector<Segmentation> heldout_segmentations;
  std::vector<IterationReport> iterations;
};

/// Boundary priors for both pools are needed by the refinement step.
struct BoundaryPriors {
  std::span<const BoundaryPriorSignal> train;
  std::span<const BoundaryPriorSignal> heldout;
};

/// Alternates classifier training with MAP boundary refinement. The first
/// iteration starts from `initial` when given.
AlternateResult alternate(std::span<const FeatureSequence> train, std::span<const FeatureSequence> heldout,
                          const NGramLM& lm, const TopKTable& table, const BoundaryPriors& priors,
                          std::vector<Segmentation> init_train, std::vector<Segmentation> init_heldout,
                          const AlternateConfig& config, const Diagnostic& diagnostic = {},
                          const std::optional<Classifier>& initial = std::nullopt);

/// Writes one "utt_id v_0 v_1 ..." row per utterance.
void save_rows(const std::filesystem::path& path, std::span<const std::string> ids,
               std::span<const std::vector<int>> rows);
std::vector<std::pair<std::string, std::vector<int>>> load_rows(const std::filesystem::path& path);

void save_segmentations(const std::filesystem::path& path, std::span<const FeatureSequence> utterances,
                        std::span<const Segmentation> segmentations);
/// Reads segmentations and aligns them to `utterances` by id.
std::vector<Segmentation> load_segmentations(const std::filesystem::path& path,
                                             std::span<const FeatureSequence> utterances);

}  // namespace sodm
