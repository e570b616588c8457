// include/sodm/corpus.hpp

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
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace sodm {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

using Label = int;

/// Label index reserved for silence in every alphabet.
inline constexpr Label kSilence = 0;

/// One utterance: T frames of m-dimensional features, one row per frame.
struct FeatureSequence {
  std::string utterance_id;
  Matrix frames;

  int length() const { return static_cast<int>(frames.rows()); }
  int dim() const { return static_cast<int>(frames.cols()); }

  /// Throws DataError unless T >= 1, m >= 1 and all values are finite.
  void validate() const;

  bool operator==(const FeatureSequence& other) const;
};

struct LabelSequence {
  std::vector<Label> labels;
  int alphabet_size = 0;

  int length() const { return static_cast<int>(labels.size()); }
  bool operator==(const LabelSequence&) const = default;
};

/// Half-open frame range [begin, end) of one segment.
struct Segment {
  int begin = 0;
  int end = 0;

  int length() const { return end - begin; }
  bool operator==(const Segment&) const = default;
};

/// Per-frame boundary indicators; boundaries[t] == 1 starts a new segment.
class Segmentation {
 public:
  Segmentation() = default;
  explicit Segmentation(std::vector<std::uint8_t> boundaries);

  /// A single segment covering [0, length).
  static Segmentation single(int length);
  /// Boundaries at every change of label, plus t = 0.
  static Segmentation from_labels(std::span<const Label> labels);
  /// Boundaries at the given segment start frames (0 is always included).
  static Segmentation from_starts(int length, std::span<const int> starts);

  int length() const { return static_cast<int>(boundaries_.size()); }
  int num_segments() const { return static_cast<int>(segments_.size()); }
  const std::vector<std::uint8_t>& boundaries() const { return boundaries_; }
  const std::vector<Segment>& segments() const { return segments_; }
  bool is_boundary(int t) const { return boundaries_[static_cast<std::size_t>(t)] != 0; }

  bool operator==(const Segmentation& other) const { return boundaries_ == other.boundaries_; }

 private:
  std::vector<std::uint8_t> boundaries_;
  std::vector<Segment> segments_;
};

/// Collapses a frame label sequence into one symbol per maximal run.
std::vector<Label> collapse_runs(std::span<const Label> frame_labels);

struct Corpus {
  std::vector<FeatureSequence> utterances;
  std::optional<std::vector<LabelSequence>> gold_labels;
  std::optional<std::vector<Segmentation>> gold_segmentation;
  /// Label names; index 0 is silence.
  std::vector<std::string> alphabet;
  int feature_dim = 0;

  int alphabet_size() const { return static_cast<int>(alphabet.size()); }
  std::size_t size() const { return utterances.size(); }
  std::size_t total_frames() const;

  /// Segment-level gold transcriptions (one symbol per gold segment).
  std::vector<std::vector<Label>> gold_transcriptions() const;

  /// Checks alignment of gold lists and label/boundary consistency.
  void validate() const;

  bool operator==(const Corpus& other) const;
};

struct SynthSpec {
  int alphabet_size = 6;
  int feature_dim = 8;
  int num_utterances = 200;
  /// Mean number of non-silence segments per utterance (Poisson, at least 1).
  double mean_phones_per_utterance = 8.0;
  double mean_segment_length = 8.0;
  int min_segment_length = 3;
  double emission_cluster_separation = 4.0;
  double emission_noise_std = 1.0;
  int transition_lm_order = 2;
  int coarticulation_blend_frames = 1;
  std::uint64_t random_seed = 1;

  void validate() const;
};

/// Draws a synthetic corpus: Markov label process, Poisson durations,
/// Gaussian cluster emissions with linear blending around boundaries.
/// Every utterance starts and ends with a silence segment.
Corpus generate_corpus(const SynthSpec& spec);

/// Writes the corpus directory (MANIFEST plus one .utt file per utterance).
void save_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus load_corpus(const std::filesystem::path& dir);

/// Utterance-level split; train size is ceil(train_fraction * n).
std::pair<Corpus, Corpus> split_corpus(const Corpus& corpus, double train_fraction,
                                       std::uint64_t seed);

/// Frames t-(w-1)/2 .. t+(w-1)/2 concatenated, edges clamped to the first or
/// last frame.
Vector context_window(const FeatureSequence& features, int t, int window_size);

/// All context windows of an utterance, one row per frame (T x w*m).
Matrix context_windows(const FeatureSequence& features, int window_size);

}  // namespace sodm
