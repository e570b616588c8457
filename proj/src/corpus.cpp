// src/corpus.cpp

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

#include "sodm/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "sodm/error.hpp"
#include "text_io.hpp"

namespace sodm {

void FeatureSequence::validate() const {
  if (frames.rows() < 1) throw DataError("utterance '" + utterance_id + "' has no frames");
  if (frames.cols() < 1) throw DataError("utterance '" + utterance_id + "' has zero feature dim");
  if (!frames.allFinite()) throw DataError("utterance '" + utterance_id + "' has non-finite features");
}

bool FeatureSequence::operator==(const FeatureSequence& other) const {
  return utterance_id == other.utterance_id && frames.rows() == other.frames.rows() &&
         frames.cols() == other.frames.cols() && frames == other.frames;
}

Segmentation::Segmentation(std::vector<std::uint8_t> boundaries) : boundaries_(std::move(boundaries)) {
  if (boundaries_.empty()) return;
  if (boundaries_[0] != 1) throw DataError("segmentation must start with a boundary at t=0");
  for (std::size_t t = 0; t < boundaries_.size(); ++t) {
    if (boundaries_[t] > 1) throw DataError("boundary indicators must be 0 or 1");
    if (boundaries_[t] == 1) {
      if (!segments_.empty()) segments_.back().end = static_cast<int>(t);
      segments_.push_back({static_cast<int>(t), static_cast<int>(boundaries_.size())});
    }
  }
}

Segmentation Segmentation::single(int length) {
  std::vector<std::uint8_t> b(static_cast<std::size_t>(length), 0);
  if (length > 0) b[0] = 1;
  return Segmentation(std::move(b));
}

Segmentation Segmentation::from_labels(std::span<const Label> labels) {
  std::vector<std::uint8_t> b(labels.size(), 0);
  for (std::size_t t = 0; t < labels.size(); ++t) {
    b[t] = (t == 0 || labels[t] != labels[t - 1]) ? 1 : 0;
  }
  return Segmentation(std::move(b));
}

Segmentation Segmentation::from_starts(int length, std::span<const int> starts) {
  std::vector<std::uint8_t> b(static_cast<std::size_t>(length), 0);
  if (length > 0) b[0] = 1;
  for (int s : starts) {
    if (s < 0 || s >= length) throw DataError("segment start out of range");
    b[static_cast<std::size_t>(s)] = 1;
  }
  return Segmentation(std::move(b));
}

std::vector<Label> collapse_runs(std::span<const Label> frame_labels) {
  std::vector<Label> out;
  for (std::size_t t = 0; t < frame_labels.size(); ++t) {
    if (t == 0 || frame_labels[t] != frame_labels[t - 1]) out.push_back(frame_labels[t]);
  }
  return out;
}

std::size_t Corpus::total_frames() const {
  std::size_t n = 0;
  for (const auto& u : utterances) n += static_cast<std::size_t>(u.length());
  return n;
}

std::vector<std::vector<Label>> Corpus::gold_transcriptions() const {
  if (!gold_labels) throw DataError("corpus has no gold labels");
  std::vector<std::vector<Label>> out;
  out.reserve(gold_labels->size());
  for (const auto& seq : *gold_labels) out.push_back(collapse_runs(seq.labels));
  return out;
}

void Corpus::validate() const {
  if (alphabet.empty()) throw DataError("corpus alphabet is empty");
  for (const auto& u : utterances) {
    u.validate();
    if (u.dim() != feature_dim) {
      throw DataError("utterance '" + u.utterance_id + "' has feature dim " + std::to_string(u.dim()) +
                      ", corpus declares " + std::to_string(feature_dim));
    }
  }
  if (gold_labels) {
    if (gold_labels->size() != utterances.size()) throw DataError("gold label list not aligned");
    for (std::size_t i = 0; i < utterances.size(); ++i) {
      const auto& seq = (*gold_labels)[i];
      if (seq.length() != utterances[i].length()) {
        throw DataError("utterance '" + utterances[i].utterance_id + "': label count mismatch");
      }
      for (Label y : seq.labels) {
        if (y < 0 || y >= alphabet_size()) throw DataError("label out of range");
      }
    }
  }
  if (gold_segmentation) {
    if (gold_segmentation->size() != utterances.size()) throw DataError("gold segmentation not aligned");
    for (std::size_t i = 0; i < utterances.size(); ++i) {
      const auto& seg = (*gold_segmentation)[i];
      if (seg.length() != utterances[i].length()) {
        throw DataError("utterance '" + utterances[i].utterance_id + "': boundary count mismatch");
      }
      if (gold_labels && Segmentation::from_labels((*gold_labels)[i].labels) != seg) {
        throw DataError("utterance '" + utterances[i].utterance_id +
                        "': gold labels disagree with gold segmentation");
      }
    }
  }
}

bool Corpus::operator==(const Corpus& other) const {
  return utterances == other.utterances && gold_labels == other.gold_labels &&
         gold_segmentation == other.gold_segmentation && alphabet == other.alphabet &&
         feature_dim == other.feature_dim;
}

void SynthSpec::validate() const {
  if (alphabet_size < 2) throw ConfigError("alphabet_size must be >= 2 (silence plus one label)");
  if (feature_dim < 1) throw ConfigError("feature_dim must be >= 1");
  if (num_utterances < 0) throw ConfigError("num_utterances must be >= 0");
  if (!(mean_phones_per_utterance > 0)) throw ConfigError("mean_phones_per_utterance must be > 0");
  if (!(mean_segment_length > 0)) throw ConfigError("mean_segment_length must be > 0");
  if (min_segment_length < 1) throw ConfigError("min_segment_length must be >= 1");
  if (!(emission_cluster_separation >= 0)) throw ConfigError("emission_cluster_separation must be >= 0");
  if (!(emission_noise_std >= 0)) throw ConfigError("emission_noise_std must be >= 0");
  if (transition_lm_order < 1) throw ConfigError("transition_lm_order must be >= 1");
  if (coarticulation_blend_frames < 0) throw ConfigError("coarticulation_blend_frames must be >= 0");
}

namespace {

Matrix place_cluster_means(int count, int dim, double separation, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix means(count, dim);
  // Start near the spread at which random pairs sit about `separation` apart.
  double scale = separation > 0 ? separation / std::sqrt(2.0 * dim) : 1.0;
  for (int attempt = 0;; ++attempt) {
    if (attempt > 0 && attempt % 50 == 0) scale *= 1.25;
    for (int k = 0; k < count; ++k) {
      for (int d = 0; d < dim; ++d) means(k, d) = scale * normal(rng);
    }
    bool ok = true;
    for (int a = 0; a < count && ok; ++a) {
      for (int b = a + 1; b < count && ok; ++b) {
        ok = (means.row(a) - means.row(b)).norm() >= separation;
      }
    }
    if (ok) return means;
  }
}

// Ground-truth label process: one weight row per context of the last
// (order - 1) labels, silence-padded at the utterance start.
class MarkovSource {
 public:
  MarkovSource(int alphabet_size, int order, std::mt19937_64& rng)
      : alphabet_size_(alphabet_size), context_len_(order - 1) {
    std::size_t contexts = 1;
    for (int i = 0; i < context_len_; ++i) contexts *= static_cast<std::size_t>(alphabet_size);
    std::gamma_distribution<double> gamma(0.5, 1.0);
    weights_.assign(contexts * static_cast<std::size_t>(alphabet_size), 0.0);
    for (std::size_t c = 0; c < contexts; ++c) {
      for (int y = 1; y < alphabet_size; ++y) {
        weights_[c * static_cast<std::size_t>(alphabet_size) + static_cast<std::size_t>(y)] =
            gamma(rng) + 1e-3;
      }
    }
  }

  /// Next non-silence label, never equal to the previous one. Returns -1 when
  /// no label is admissible.
  Label next(const std::vector<Label>& history, std::mt19937_64& rng) const {
    std::size_t ctx = 0;
    for (int i = 0; i < context_len_; ++i) {
      const int pos = static_cast<int>(history.size()) - context_len_ + i;
      const Label y = pos >= 0 ? history[static_cast<std::size_t>(pos)] : kSilence;
      ctx = ctx * static_cast<std::size_t>(alphabet_size_) + static_cast<std::size_t>(y);
    }
    std::vector<double> w(weights_.begin() + static_cast<std::ptrdiff_t>(ctx * alphabet_size_),
                          weights_.begin() + static_cast<std::ptrdiff_t>((ctx + 1) * alphabet_size_));
    const Label prev = history.empty() ? kSilence : history.back();
    w[static_cast<std::size_t>(prev)] = 0.0;
    if (std::accumulate(w.begin(), w.end(), 0.0) <= 0.0) return -1;
    std::discrete_distribution<int> pick(w.begin(), w.end());
    return pick(rng);
  }

 private:
  int alphabet_size_;
  int context_len_;
  std::vector<double> weights_;
};

}  // namespace

Corpus generate_corpus(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.random_seed);
  const int num_labels = spec.alphabet_size;

  Corpus corpus;
  corpus.feature_dim = spec.feature_dim;
  corpus.alphabet.push_back("sil");
  for (int y = 1; y < num_labels; ++y) corpus.alphabet.push_back("p" + std::to_string(y));

  const Matrix means =
      place_cluster_means(num_labels, spec.feature_dim, spec.emission_cluster_separation, rng);
  const MarkovSource source(num_labels, spec.transition_lm_order, rng);

  std::poisson_distribution<int> phone_count(spec.mean_phones_per_utterance);
  std::poisson_distribution<int> duration(spec.mean_segment_length);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<LabelSequence> labels;
  std::vector<Segmentation> segmentations;
  const int blend = spec.coarticulation_blend_frames;

  for (int u = 0; u < spec.num_utterances; ++u) {
    // Segment-level label string: silence, phones, silence.
    std::vector<Label> phones;
    const int count = std::max(1, phone_count(rng));
    for (int i = 0; i < count; ++i) {
      const Label y = source.next(phones, rng);
      if (y < 0) break;
      phones.push_back(y);
    }
    std::vector<Label> seg_labels;
    seg_labels.push_back(kSilence);
    seg_labels.insert(seg_labels.end(), phones.begin(), phones.end());
    seg_labels.push_back(kSilence);

    std::vector<Segment> segs;
    int t = 0;
    for (std::size_t i = 0; i < seg_labels.size(); ++i) {
      const int len = std::max(spec.min_segment_length, duration(rng));
      segs.push_back({t, t + len});
      t += len;
    }
    const int T = t;

    FeatureSequence fs;
    char id[32];
    std::snprintf(id, sizeof(id), "utt%05d", u);
    fs.utterance_id = id;
    fs.frames.resize(T, spec.feature_dim);
    LabelSequence ls;
    ls.alphabet_size = num_labels;
    ls.labels.resize(static_cast<std::size_t>(T));

    for (std::size_t s = 0; s < segs.size(); ++s) {
      const Label y = seg_labels[s];
      for (int f = segs[s].begin; f < segs[s].end; ++f) {
        ls.labels[static_cast<std::size_t>(f)] = y;
        const int from_start = f - segs[s].begin;
        const int to_end = segs[s].end - 1 - f;
        Eigen::RowVectorXd mean = means.row(y);
        if (s > 0 && from_start < blend && from_start <= to_end) {
          const double w = 0.5 * (blend - from_start) / (blend + 1.0);
          mean = (1.0 - w) * mean + w * means.row(seg_labels[s - 1]);
        } else if (s + 1 < segs.size() && to_end < blend) {
          const double w = 0.5 * (blend - to_end) / (blend + 1.0);
          mean = (1.0 - w) * mean + w * means.row(seg_labels[s + 1]);
        }
        for (int d = 0; d < spec.feature_dim; ++d) {
          fs.frames(f, d) = mean(d) + spec.emission_noise_std * normal(rng);
        }
      }
    }
    segmentations.push_back(Segmentation::from_labels(ls.labels));
    labels.push_back(std::move(ls));
    corpus.utterances.push_back(std::move(fs));
  }
  corpus.gold_labels = std::move(labels);
  corpus.gold_segmentation = std::move(segmentations);
  return corpus;
}

// Directory layout:
//   MANIFEST        header, alphabet and the ordered utterance ids
//   <id>.utt        "frames T", T feature rows, optional "labels ..." and
//                   "boundaries ..." rows
void save_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  corpus.validate();
  std::filesystem::create_directories(dir);
  {
    auto out = detail::open_for_write((dir / "MANIFEST").string());
    out << "sodm-corpus 1\n";
    out << "feature_dim " << corpus.feature_dim << "\n";
    out << "alphabet";
    for (const auto& name : corpus.alphabet) out << ' ' << name;
    out << "\n";
    out << "has_labels " << (corpus.gold_labels ? 1 : 0) << "\n";
    out << "has_boundaries " << (corpus.gold_segmentation ? 1 : 0) << "\n";
    out << "utterances " << corpus.utterances.size() << "\n";
    for (const auto& u : corpus.utterances) out << u.utterance_id << "\n";
  }
  for (std::size_t i = 0; i < corpus.utterances.size(); ++i) {
    const auto& u = corpus.utterances[i];
    auto out = detail::open_for_write((dir / (u.utterance_id + ".utt")).string());
    out << "frames " << u.length() << "\n";
    for (int t = 0; t < u.length(); ++t) {
      for (int d = 0; d < u.dim(); ++d) {
        if (d) out << ' ';
        out << detail::format_double(u.frames(t, d));
      }
      out << "\n";
    }
    if (corpus.gold_labels) {
      out << "labels";
      for (Label y : (*corpus.gold_labels)[i].labels) out << ' ' << y;
      out << "\n";
    }
    if (corpus.gold_segmentation) {
      out << "boundaries";
      for (auto b : (*corpus.gold_segmentation)[i].boundaries()) out << ' ' << static_cast<int>(b);
      out << "\n";
    }
  }
}

Corpus load_corpus(const std::filesystem::path& dir) {
  Corpus corpus;
  std::vector<std::string> ids;
  bool has_labels = false;
  bool has_boundaries = false;
  {
    detail::LineReader in((dir / "MANIFEST").string());
    auto tok = in.expect("header");
    if (tok.size() != 2 || tok[0] != "sodm-corpus") in.fail("not a corpus manifest");
    if (tok[1] != "1") in.fail("unsupported corpus version " + std::string(tok[1]));
    tok = in.expect("feature_dim");
    in.require(tok, "feature_dim", 2);
    corpus.feature_dim = in.parse<int>(tok[1]);
    if (corpus.feature_dim < 1) in.fail("feature_dim must be positive");
    tok = in.expect("alphabet");
    if (tok[0] != "alphabet" || tok.size() < 2) in.fail("expected non-empty 'alphabet'");
    for (std::size_t k = 1; k < tok.size(); ++k) corpus.alphabet.emplace_back(tok[k]);
    tok = in.expect("has_labels");
    in.require(tok, "has_labels", 2);
    has_labels = in.parse<int>(tok[1]) != 0;
    tok = in.expect("has_boundaries");
    in.require(tok, "has_boundaries", 2);
    has_boundaries = in.parse<int>(tok[1]) != 0;
    tok = in.expect("utterances");
    in.require(tok, "utterances", 2);
    const auto n = in.parse<std::size_t>(tok[1]);
    for (std::size_t i = 0; i < n; ++i) {
      tok = in.expect("utterance id");
      if (tok.size() != 1) in.fail("utterance id line must hold a single token");
      ids.emplace_back(tok[0]);
    }
    std::vector<std::string_view> extra;
    if (in.next(extra)) in.fail("trailing content after utterance list");
  }

  std::vector<LabelSequence> labels;
  std::vector<Segmentation> segmentations;
  const int num_labels = static_cast<int>(corpus.alphabet.size());
  for (const auto& id : ids) {
    detail::LineReader in((dir / (id + ".utt")).string());
    auto tok = in.expect("frames");
    in.require(tok, "frames", 2);
    const int T = in.parse<int>(tok[1]);
    if (T < 1) in.fail("utterance must have at least one frame");
    FeatureSequence fs;
    fs.utterance_id = id;
    fs.frames.resize(T, corpus.feature_dim);
    for (int t = 0; t < T; ++t) {
      tok = in.expect("feature row");
      if (static_cast<int>(tok.size()) != corpus.feature_dim) {
        in.fail("feature row has " + std::to_string(tok.size()) + " values, expected " +
                std::to_string(corpus.feature_dim));
      }
      for (int d = 0; d < corpus.feature_dim; ++d) fs.frames(t, d) = in.parse<double>(tok[static_cast<std::size_t>(d)]);
    }
    if (!fs.frames.allFinite()) in.fail("non-finite feature value");
    if (has_labels) {
      tok = in.expect("labels");
      if (tok[0] != "labels") in.fail("expected 'labels'");
      if (static_cast<int>(tok.size()) - 1 != T) {
        in.fail("label count " + std::to_string(tok.size() - 1) + " does not match frame count " +
                std::to_string(T));
      }
      LabelSequence ls;
      ls.alphabet_size = num_labels;
      for (std::size_t k = 1; k < tok.size(); ++k) {
        const Label y = in.parse<int>(tok[k]);
        if (y < 0 || y >= num_labels) in.fail("label out of range");
        ls.labels.push_back(y);
      }
      labels.push_back(std::move(ls));
    }
    if (has_boundaries) {
      tok = in.expect("boundaries");
      if (tok[0] != "boundaries") in.fail("expected 'boundaries'");
      if (static_cast<int>(tok.size()) - 1 != T) {
        in.fail("boundary count " + std::to_string(tok.size() - 1) + " does not match frame count " +
                std::to_string(T));
      }
      std::vector<std::uint8_t> b;
      for (std::size_t k = 1; k < tok.size(); ++k) {
        const int v = in.parse<int>(tok[k]);
        if (v != 0 && v != 1) in.fail("boundary indicator must be 0 or 1");
        b.push_back(static_cast<std::uint8_t>(v));
      }
      if (b[0] != 1) in.fail("first boundary indicator must be 1");
      segmentations.emplace_back(std::move(b));
    }
    std::vector<std::string_view> extra;
    if (in.next(extra)) in.fail("trailing content");
    corpus.utterances.push_back(std::move(fs));
  }
  if (has_labels) corpus.gold_labels = std::move(labels);
  if (has_boundaries) corpus.gold_segmentation = std::move(segmentations);
  corpus.validate();
  return corpus;
}

std::pair<Corpus, Corpus> split_corpus(const Corpus& corpus, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("train_fraction must lie in (0, 1)");
  }
  const std::size_t n = corpus.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::ceil(train_fraction * static_cast<double>(n) - 1e-12));

  std::vector<char> in_train(n, 0);
  for (std::size_t k = 0; k < n_train; ++k) in_train[order[k]] = 1;

  auto make = [&](bool train) {
    Corpus part;
    part.alphabet = corpus.alphabet;
    part.feature_dim = corpus.feature_dim;
    if (corpus.gold_labels) part.gold_labels.emplace();
    if (corpus.gold_segmentation) part.gold_segmentation.emplace();
    for (std::size_t i = 0; i < n; ++i) {
      if ((in_train[i] != 0) != train) continue;
      part.utterances.push_back(corpus.utterances[i]);
      if (corpus.gold_labels) part.gold_labels->push_back((*corpus.gold_labels)[i]);
      if (corpus.gold_segmentation) part.gold_segmentation->push_back((*corpus.gold_segmentation)[i]);
    }
    return part;
  };
  return {make(true), make(false)};
}

Vector context_window(const FeatureSequence& features, int t, int window_size) {
  if (window_size < 1 || window_size % 2 == 0) throw ConfigError("context window size must be odd");
  const int T = features.length();
  if (t < 0 || t >= T) throw ShapeError("frame index out of range");
  const int m = features.dim();
  const int half = (window_size - 1) / 2;
  Vector out(window_size * m);
  for (int k = 0; k < window_size; ++k) {
    const int src = std::clamp(t - half + k, 0, T - 1);
    out.segment(k * m, m) = features.frames.row(src).transpose();
  }
  return out;
}

Matrix context_windows(const FeatureSequence& features, int window_size) {
  if (window_size < 1 || window_size % 2 == 0) throw ConfigError("context window size must be odd");
  const int T = features.length();
  const int m = features.dim();
  const int half = (window_size - 1) / 2;
  Matrix out(T, window_size * m);
  for (int t = 0; t < T; ++t) {
    for (int k = 0; k < window_size; ++k) {
      const int src = std::clamp(t - half + k, 0, T - 1);
      out.block(t, k * m, 1, m) = features.frames.row(src);
    }
  }
  return out;
}

}  // namespace sodm
