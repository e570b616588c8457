// src/decode.cpp

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

#include "sodm/decode.hpp"

#include <algorithm>
#include <sstream>

#include "sodm/error.hpp"
#include "text_io.hpp"

namespace sodm {

Vector estimate_frame_prior(const Classifier& classifier, int window_size,
                            std::span<const FeatureSequence> utterances) {
  const int Y = classifier.dims().output_dim;
  Vector sum = Vector::Zero(Y);
  double frames = 0.0;
  for (const auto& u : utterances) {
    const Matrix post = frame_posteriors(classifier, u, window_size, 1.0);
    sum += post.colwise().sum().transpose();
    frames += static_cast<double>(post.rows());
  }
  if (frames == 0.0) throw DataError("frame prior needs a non-empty corpus");
  Vector prior = (sum / frames).cwiseMax(kFramePriorFloor);
  return prior / prior.sum();
}

Decoded decode_utterance(const Classifier& classifier, int window_size, const NGramLM& lm,
                         const Vector& frame_prior, const BoundaryPriorSignal& boundary_prior,
                         const FeatureSequence& features, int beam_width, double lm_weight) {
  if (!(lm_weight >= 0)) throw ConfigError("lm_weight must be >= 0");
  const Matrix post = frame_posteriors(classifier, features, window_size);
  BeamResult best = beam_search(post, lm, frame_prior, boundary_prior, {beam_width, lm_weight});
  Decoded out;
  out.phonemes = collapse_runs(best.labels);
  out.frame_labels = std::move(best.labels);
  return out;
}

namespace {

void require_same_length(std::span<const Label> a, std::span<const Label> b) {
  if (a.size() != b.size()) throw ShapeError("predicted and gold frame sequences differ in length");
}

std::pair<std::size_t, std::size_t> stripped_range(std::span<const Label> gold, Label silence) {
  std::size_t lo = 0;
  std::size_t hi = gold.size();
  while (lo < hi && gold[lo] == silence) ++lo;
  while (hi > lo && gold[hi - 1] == silence) --hi;
  return {lo, hi};
}

std::size_t frame_errors(std::span<const Label> pred, std::span<const Label> gold) {
  std::size_t errors = 0;
  for (std::size_t t = 0; t < gold.size(); ++t) errors += pred[t] != gold[t] ? 1 : 0;
  return errors;
}

}  // namespace

double fer(std::span<const Label> pred, std::span<const Label> gold) {
  require_same_length(pred, gold);
  if (gold.empty()) return 0.0;
  return static_cast<double>(frame_errors(pred, gold)) / static_cast<double>(gold.size());
}

double fer_star(std::span<const Label> pred, std::span<const Label> gold, Label silence) {
  require_same_length(pred, gold);
  const auto [lo, hi] = stripped_range(gold, silence);
  return fer(pred.subspan(lo, hi - lo), gold.subspan(lo, hi - lo));
}

std::size_t edit_distance(std::span<const Label> a, std::span<const Label> b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

double per(std::span<const Label> pred, std::span<const Label> gold) {
  if (gold.empty()) throw DataError("PER needs a non-empty reference");
  return static_cast<double>(edit_distance(pred, gold)) / static_cast<double>(gold.size());
}

EvalReport evaluate(std::span<const std::vector<Label>> pred_frames, std::span<const std::vector<Label>> gold_frames,
                    std::span<const std::vector<Label>> pred_phonemes,
                    std::span<const std::vector<Label>> gold_phonemes, int alphabet_size,
                    std::span<const std::string> utterance_ids) {
  const std::size_t n = gold_frames.size();
  if (pred_frames.size() != n || pred_phonemes.size() != n || gold_phonemes.size() != n) {
    throw ShapeError("evaluation lists differ in size");
  }
  if (!utterance_ids.empty() && utterance_ids.size() != n) throw ShapeError("utterance id list size");
  EvalReport report;
  report.confusion.assign(static_cast<std::size_t>(alphabet_size),
                          std::vector<long long>(static_cast<std::size_t>(alphabet_size), 0));
  std::size_t frames = 0, frame_errs = 0, star_frames = 0, star_errs = 0, phones = 0, phone_errs = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const auto& pf = pred_frames[k];
    const auto& gf = gold_frames[k];
    require_same_length(pf, gf);
    UtteranceScores s;
    if (!utterance_ids.empty()) s.utterance_id = utterance_ids[k];
    s.fer = fer(pf, gf);
    s.fer_star = fer_star(pf, gf);
    s.per = per(pred_phonemes[k], gold_phonemes[k]);
    report.utterances.push_back(s);

    frames += gf.size();
    frame_errs += frame_errors(pf, gf);
    const auto [lo, hi] = stripped_range(gf, kSilence);
    star_frames += hi - lo;
    star_errs += frame_errors(std::span(pf).subspan(lo, hi - lo), std::span(gf).subspan(lo, hi - lo));
    phones += gold_phonemes[k].size();
    phone_errs += edit_distance(pred_phonemes[k], gold_phonemes[k]);
    for (std::size_t t = 0; t < gf.size(); ++t) {
      if (gf[t] < 0 || gf[t] >= alphabet_size || pf[t] < 0 || pf[t] >= alphabet_size) {
        throw DataError("label out of range in evaluation");
      }
      ++report.confusion[static_cast<std::size_t>(gf[t])][static_cast<std::size_t>(pf[t])];
    }
  }
  auto rate = [](std::size_t e, std::size_t d) { return d ? static_cast<double>(e) / static_cast<double>(d) : 0.0; };
  report.fer = rate(frame_errs, frames);
  report.fer_star = rate(star_errs, star_frames);
  report.per = rate(phone_errs, phones);
  return report;
}

std::string EvalReport::summary() const {
  std::ostringstream out;
  out << "fer " << detail::format_double(fer) << "\n";
  out << "fer_star " << detail::format_double(fer_star) << "\n";
  out << "per " << detail::format_double(per) << "\n";
  return out.str();
}

std::string EvalReport::text() const {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(2);
  out << "%FER  " << 100.0 * fer << "\n";
  out << "%FER* " << 100.0 * fer_star << "\n";
  out << "%PER  " << 100.0 * per << "\n";
  out << "utterances " << utterances.size() << "\n";
  out << "confusion (rows gold, columns predicted)\n";
  for (const auto& row : confusion) {
    for (std::size_t j = 0; j < row.size(); ++j) out << (j ? " " : "") << row[j];
    out << "\n";
  }
  return out.str();
}

}  // namespace sodm
