// tests/fixtures.hpp

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

// Random small instances and the checks run on them. Shared by the unit
// tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "sodm/boundary.hpp"
#include "sodm/decode.hpp"
#include "sodm/lm.hpp"
#include "sodm/model.hpp"
#include "sodm/odm_loss.hpp"

namespace fixtures {

using namespace sodm;

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline FeatureSequence random_features(std::mt19937_64& rng, const std::string& id, int frames, int dim) {
  std::normal_distribution<double> g;
  FeatureSequence f{id, Matrix(frames, dim)};
  for (int t = 0; t < frames; ++t) {
    for (int j = 0; j < dim; ++j) f.frames(t, j) = g(rng);
  }
  return f;
}

inline Segmentation random_segmentation(std::mt19937_64& rng, int frames, double boundary_rate) {
  std::bernoulli_distribution b(boundary_rate);
  std::vector<std::uint8_t> ind(static_cast<std::size_t>(frames), 0);
  ind[0] = 1;
  for (int t = 1; t < frames; ++t) ind[static_cast<std::size_t>(t)] = b(rng) ? 1 : 0;
  return Segmentation(std::move(ind));
}

inline NGramLM random_lm(std::mt19937_64& rng, int order, int alphabet, double alpha) {
  std::vector<std::vector<Label>> seqs;
  for (int s = 0; s < 6; ++s) {
    std::vector<Label> seq(static_cast<std::size_t>(uniform_int(rng, order, 12)));
    for (auto& v : seq) v = uniform_int(rng, 0, alphabet - 1);
    seqs.push_back(seq);
  }
  return train_lm(seqs, order, alphabet, alpha);
}

struct LossInstance {
  Classifier classifier;
  std::vector<FeatureSequence> features;
  std::vector<TrainingUtterance> utterances;
  std::vector<int> batch;
  TauSample tau;
  std::vector<FramePair> pairs;
  TopKTable table;
  LossConfig config;
};

/// Random instance within |Y| <= 4, H <= 8, N <= 3, <= 3 utterances. Hidden
/// pre-activations are kept away from the ReLU kink so that central
/// differences are meaningful.
inline LossInstance random_loss_instance(std::mt19937_64& rng) {
  while (true) {
    LossInstance in;
    const int y = uniform_int(rng, 2, 4);
    const int h = uniform_int(rng, 1, 8);
    const int n = uniform_int(rng, 1, 3);
    const int u = uniform_int(rng, 1, 3);
    const int m = uniform_int(rng, 1, 3);
    const int w = 3;
    std::vector<Segmentation> segs;
    for (int k = 0; k < u; ++k) {
      const int frames = uniform_int(rng, 3, 10);
      in.features.push_back(random_features(rng, "u" + std::to_string(k), frames, m));
      segs.push_back(random_segmentation(rng, frames, 0.4));
    }
    bool any_window = false;
    for (const auto& s : segs) any_window |= s.num_segments() >= n;
    if (!any_window) continue;

    in.classifier = Classifier::init({w * m, h, y}, rng());
    std::normal_distribution<double> g(0.0, 0.3);
    for (Eigen::Index k = 0; k < in.classifier.b_hidden.size(); ++k) in.classifier.b_hidden(k) = g(rng);
    for (Eigen::Index k = 0; k < in.classifier.b_output.size(); ++k) in.classifier.b_output(k) = g(rng);
    in.utterances = prepare_utterances(in.features, segs, w);
    bool near_kink = false;
    for (const auto& tu : in.utterances) {
      const Matrix pre = (tu.inputs * in.classifier.w_hidden.transpose()).rowwise() + in.classifier.b_hidden.transpose();
      near_kink |= pre.cwiseAbs().minCoeff() < 1e-3;
    }
    if (near_kink) continue;

    for (int k = 0; k < u; ++k) in.batch.push_back(k);
    in.tau = sample_tau(segs, rng);
    in.config.ngram_order = n;
    in.config.lambda = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    in.config.temperature = std::uniform_real_distribution<double>(0.5, 1.5)(rng);
    in.config.fs_sample_size = 40;
    in.pairs = sample_fs_pairs(in.utterances, in.batch, in.config.fs_sample_size, rng);
    in.table = topk(random_lm(rng, n, y, 0.0), static_cast<std::size_t>(uniform_int(rng, 1, 30)), rng() % 2 == 0);
    return in;
  }
}

inline double loss_total(const LossInstance& in, const Classifier& c) {
  return combined_loss(c, in.utterances, in.batch, in.tau, in.pairs, in.table, in.config).first.total;
}

/// Largest relative difference between the analytic gradient and central
/// differences (step 1e-5) over every parameter.
inline double max_gradient_rel_error(const LossInstance& in) {
  const Vector analytic = flatten(combined_loss(in.classifier, in.utterances, in.batch, in.tau, in.pairs, in.table,
                                                in.config).second);
  const Vector theta = in.classifier.flat();
  const double eps = 1e-5;
  double worst = 0.0;
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    Classifier cp = in.classifier, cm = in.classifier;
    Vector tp = theta, tm = theta;
    tp(k) += eps;
    tm(k) -= eps;
    cp.set_flat(tp);
    cm.set_flat(tm);
    const double numeric = (loss_total(in, cp) - loss_total(in, cm)) / (2 * eps);
    const double denom = std::max({std::abs(numeric), std::abs(analytic(k)), 1e-6});
    worst = std::max(worst, std::abs(numeric - analytic(k)) / denom);
  }
  return worst;
}

/// |J_ODM with unit segments - frame-level Empirical-ODM reference|.
inline double degeneracy_gap(std::mt19937_64& rng) {
  const int y = uniform_int(rng, 2, 4);
  const int n = uniform_int(rng, 1, 3);
  const int m = uniform_int(rng, 1, 3);
  const int w = 2 * uniform_int(rng, 0, 2) + 1;
  const int u = uniform_int(rng, 1, 3);
  std::vector<FeatureSequence> feats;
  std::vector<Segmentation> segs;
  for (int k = 0; k < u; ++k) {
    const int frames = uniform_int(rng, n, 9);
    feats.push_back(random_features(rng, "u" + std::to_string(k), frames, m));
    segs.emplace_back(std::vector<std::uint8_t>(static_cast<std::size_t>(frames), 1));
  }
  const Classifier c = Classifier::init({w * m, uniform_int(rng, 1, 6), y}, rng());
  const TopKTable table = topk(random_lm(rng, n, y, 0.0), 1000, rng() % 2 == 0);
  const auto utts = prepare_utterances(feats, segs, w);
  std::vector<int> batch;
  for (int k = 0; k < u; ++k) batch.push_back(k);
  const TauSample tau = sample_tau(segs, rng);
  LossConfig cfg;
  cfg.ngram_order = n;
  cfg.lambda = 0.0;
  const double got = combined_loss(c, utts, batch, tau, {}, table, cfg).first.odm;

  // Reference: N-gram windows over raw frames, no segment machinery.
  std::vector<std::vector<std::vector<double>>> rows;
  for (const auto& f : feats) {
    Matrix x(f.length(), w * m);
    for (int t = 0; t < f.length(); ++t) {
      for (int j = 0; j < w; ++j) {
        const int src = std::clamp(t - (w - 1) / 2 + j, 0, f.length() - 1);
        x.block(t, j * m, 1, m) = f.frames.row(src);
      }
    }
    const Matrix p = c.forward(x, 1.0);
    std::vector<std::vector<double>> r;
    for (int t = 0; t < p.rows(); ++t) r.emplace_back(p.row(t).data(), p.row(t).data() + p.cols());
    rows.push_back(r);
  }
  std::vector<oracle::Seq> grams(table.ngrams.begin(), table.ngrams.end());
  return std::abs(got - oracle::odm_cost(rows, grams, table.probs));
}

struct MapTrial {
  std::vector<Label> beam_labels;
  std::vector<Label> exhaustive_labels;
  std::vector<Label> decoded_phonemes;
  double beam_score = 0.0;
  double exhaustive_score = 0.0;
};

/// Refinement and decoding on a random instance (T <= 5, |Y| <= 3, N = 2)
/// against enumeration of every labelling.
inline MapTrial map_trial(std::mt19937_64& rng) {
  const int y = uniform_int(rng, 2, 3);
  const int frames = uniform_int(rng, 1, 5);
  const int m = 2;
  const int w = 3;
  const FeatureSequence f = random_features(rng, "u", frames, m);
  Classifier c = Classifier::init({w * m, 5, y}, rng());
  c.w_output *= 3.0;
  const NGramLM lm = random_lm(rng, 2, y, std::uniform_real_distribution<double>(0.05, 1.0)(rng));
  Vector prior(y);
  for (int k = 0; k < y; ++k) prior(k) = std::uniform_real_distribution<double>(0.1, 1.0)(rng);
  prior /= prior.sum();
  BoundaryPriorSignal bp;
  bp.prob.push_back(1.0);
  for (int t = 1; t < frames; ++t) bp.prob.push_back(std::uniform_real_distribution<double>(0.02, 0.98)(rng));
  const int beam = y * y * y;

  MapTrial out;
  const Refinement ref = refine_boundaries(c, w, lm, prior, bp, f, beam);
  out.beam_labels = ref.labels.labels;
  out.beam_score = ref.score;
  out.decoded_phonemes = decode_utterance(c, w, lm, prior, bp, f, beam, 1.0).phonemes;

  const Matrix post = frame_posteriors(c, f, w);
  auto cond = [&](int next, const oracle::Seq& h) { return lm.cond_prob(next, h); };
  out.exhaustive_score = -std::numeric_limits<double>::infinity();
  for (const auto& seq : oracle::all_sequences(y, frames)) {
    const double s = oracle::map_score(seq, post, prior, bp.prob, 2, cond);
    if (s > out.exhaustive_score) {
      out.exhaustive_score = s;
      out.exhaustive_labels = seq;
    }
  }
  return out;
}

}  // namespace fixtures
