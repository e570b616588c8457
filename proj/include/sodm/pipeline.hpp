// include/sodm/pipeline.hpp

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

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "sodm/boundary.hpp"
#include "sodm/corpus.hpp"
#include "sodm/lm.hpp"
#include "sodm/selftrain.hpp"
#include "sodm/trainer.hpp"

namespace sodm {

enum class ExperimentMode { kMatchingLm, kNonMatchingLm };
enum class BoundaryMode { kGold, kEstimated };

struct LmConfig {
  int order = 2;
  double alpha = 0.01;
  std::size_t k_top = 10000;
  bool renormalize = false;
};

struct BoundaryConfig {
  BoundaryMode mode = BoundaryMode::kEstimated;
  double threshold = 0.6;
  int min_segment_len = 2;
  int detector_half_width = 3;
  int beam_width = 16;
  int tolerance = 2;
};

struct DecodeConfig {
  int beam_width = 16;
  double lm_weight = 1.0;
};

struct SelfTrainConfig {
  int rounds = 1;
  SupervisedConfig supervised;
};

/// Supervised same-architecture comparator trained on gold labels.
struct ComparatorConfig {
  bool enabled = false;
  /// Fraction of the training pool whose labels the comparator may use.
  double labeled_fraction = 1.0;
  SupervisedConfig supervised;
};

struct RunConfig {
  std::string preset = "desk";
  SynthSpec synth;
  /// When set, the corpus is loaded from here instead of generated.
  std::optional<std::filesystem::path> corpus_dir;
  double train_fraction = 0.8;
  std::uint64_t split_seed = 3;
  LmConfig lm;
  TrainerConfig trainer;
  BoundaryConfig boundary;
  DecodeConfig decode;
  int outer_iterations = 2;
  SelfTrainConfig selftrain;
  ComparatorConfig comparator;
  ExperimentMode experiment = ExperimentMode::kMatchingLm;
  std::filesystem::path output_dir = "run";

  void validate() const;
};

/// Desk-scale defaults (minutes on one core) or the full-size preset.
RunConfig preset_config(const std::string& name);

/// Starts from the preset named by "preset" (default "desk") and applies
/// every other key. Unknown keys raise ConfigError.
RunConfig parse_run_config(const nlohmann::json& json);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& config);

/// Hex SHA-256 of a file, or of a directory (sorted relative names and contents).
std::string content_hash(const std::filesystem::path& path);

struct RunManifest {
  nlohmann::json config;
  std::map<std::string, std::pair<std::string, std::string>> artifacts;  // name -> (relative path, sha256)
  std::map<std::string, double> metrics;
  std::string started;
  std::string finished;
  std::string code_version;

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& json);
  void save(const std::filesystem::path& path) const;
  static RunManifest load(const std::filesystem::path& path);
  /// Throws DataError when an artifact is missing or its hash differs.
  void verify(const std::filesystem::path& run_dir) const;
};

/// Classifier FER (framewise argmax) and FER* against gold labels.
struct FrameScores {
  double fer = 0.0;
  double fer_star = 0.0;
};
FrameScores classifier_frame_scores(const Classifier& classifier, int window_size, const Corpus& corpus);

/// Corpus -> split -> LM -> initial boundaries -> alternate -> optional
/// self-training -> decode + eval -> manifest (written to output_dir).
RunManifest full_run(const RunConfig& config);

/// Sets a dotted key path ("trainer.loss.lambda") inside a config JSON.
void set_json_path(nlohmann::json& json, const std::string& dotted, const nlohmann::json& value);

struct SweepRow {
  std::map<std::string, nlohmann::json> point;
  RunManifest manifest;
};

/// Cartesian product over `grid` (dotted key -> values); one full run per
/// point in its own sub-directory. Writes a consolidated results.tsv.
std::vector<SweepRow> sweep(const nlohmann::json& base_config,
                            const std::map<std::string, std::vector<nlohmann::json>>& grid,
                            const std::filesystem::path& output_dir);

std::string format_sweep_table(const std::vector<SweepRow>& rows);

}  // namespace sodm
