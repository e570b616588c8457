// tests/test_boundary.cpp

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

#include <cmath>
#include <random>

#include "doctest.h"
#include "fixtures.hpp"
#include "sodm/boundary.hpp"
#include "sodm/corpus.hpp"
#include "sodm/error.hpp"

using namespace sodm;

namespace {

BoundaryPriorSignal signal(std::vector<double> p) { return BoundaryPriorSignal{std::move(p)}; }

}  // namespace

TEST_CASE("constant features give a flat prior") {
  const FeatureSequence f{"c", Matrix::Constant(12, 3, 1.5)};
  const BoundaryPriorSignal p = boundary_prior(f);
  CHECK(p.prob[0] == 1.0);
  for (int t = 1; t < p.length(); ++t) CHECK(std::abs(p.prob[static_cast<std::size_t>(t)] - 0.5) < 1e-12);
}

TEST_CASE("prior values lie in (0, 1) and scale does not matter") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    FeatureSequence f = fixtures::random_features(rng, "r", fixtures::uniform_int(rng, 1, 40), 4);
    const BoundaryPriorSignal p = boundary_prior(f);
    REQUIRE(p.length() == f.length());
    CHECK(p.prob[0] == 1.0);
    for (int t = 1; t < p.length(); ++t) {
      CHECK(p.prob[static_cast<std::size_t>(t)] > 0.0);
      CHECK(p.prob[static_cast<std::size_t>(t)] < 1.0);
    }
    FeatureSequence g = f;
    g.frames *= 2.0;
    const BoundaryPriorSignal q = boundary_prior(g);
    for (int t = 0; t < p.length(); ++t) {
      CHECK(q.prob[static_cast<std::size_t>(t)] == doctest::Approx(p.prob[static_cast<std::size_t>(t)]).epsilon(1e-12));
    }
  }
}

TEST_CASE("clean synthetic data puts prior peaks at gold boundaries") {
  SynthSpec spec;
  spec.num_utterances = 10;
  spec.emission_noise_std = 0.0;
  spec.coarticulation_blend_frames = 0;
  const Corpus c = generate_corpus(spec);
  for (std::size_t i = 0; i < c.size(); ++i) {
    const auto p = boundary_prior(c.utterances[i]).prob;
    const int T = static_cast<int>(p.size());
    auto local_max = [&](int t) {
      if (t < 1 || t >= T) return false;
      const double left = t > 1 ? p[static_cast<std::size_t>(t - 1)] : -1.0;
      const double right = t + 1 < T ? p[static_cast<std::size_t>(t + 1)] : -1.0;
      return p[static_cast<std::size_t>(t)] >= left && p[static_cast<std::size_t>(t)] >= right;
    };
    const auto& gold = (*c.gold_segmentation)[i];
    for (int t = 1; t < T; ++t) {
      if (!gold.is_boundary(t)) continue;
      CHECK((local_max(t - 1) || local_max(t) || local_max(t + 1)));
    }
  }
}

TEST_CASE("initial boundaries from the prior") {
  CHECK(initial_boundaries(signal({1.0, 0.1, 0.2, 0.3, 0.1}), 0.5, 1) == Segmentation::single(5));
  // Two peaks one frame apart: the higher one survives.
  CHECK(initial_boundaries(signal({1.0, 0.1, 0.8, 0.2, 0.9, 0.1, 0.1}), 0.5, 3) ==
        Segmentation::from_starts(7, std::vector<int>{4}));
  // Equal peaks keep the earlier one.
  CHECK(initial_boundaries(signal({1.0, 0.1, 0.1, 0.8, 0.2, 0.8, 0.1, 0.1, 0.1}), 0.5, 3) ==
        Segmentation::from_starts(9, std::vector<int>{3}));
  // Impulses at the gold boundaries reproduce them exactly.
  SynthSpec spec;
  spec.num_utterances = 5;
  const Corpus c = generate_corpus(spec);
  for (const auto& gold : *c.gold_segmentation) {
    BoundaryPriorSignal imp;
    for (int t = 0; t < gold.length(); ++t) imp.prob.push_back(gold.is_boundary(t) ? 0.99 : 0.01);
    CHECK(initial_boundaries(imp, 0.5, 1) == gold);
  }
  CHECK_THROWS_AS(initial_boundaries(signal({1.0, 0.5}), 1.5, 1), ConfigError);
}

TEST_CASE("single frame closed form") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const int y = 3;
    const Matrix post = oracle::random_stochastic(1, y, rng);
    const NGramLM lm = fixtures::random_lm(rng, 2, y, 0.5);
    Vector prior = oracle::random_stochastic(1, y, rng).row(0).transpose();
    int best = 0;
    double best_score = -1e300;
    for (int k = 0; k < y; ++k) {
      const double s = std::log(post(0, k)) - std::log(prior(k)) + std::log(lm.cond_prob(k, {}));
      if (s > best_score) {
        best_score = s;
        best = k;
      }
    }
    const BeamResult r = beam_search(post, lm, prior, signal({1.0}), {4, 1.0});
    CHECK(r.labels == std::vector<Label>{best});
  }
}

TEST_CASE("refinement and decoding equal exhaustive MAP") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const fixtures::MapTrial m = fixtures::map_trial(rng);
    CHECK(m.beam_labels == m.exhaustive_labels);
    CHECK(m.decoded_phonemes == collapse_runs(m.exhaustive_labels));
    CHECK(m.beam_score == doctest::Approx(m.exhaustive_score).epsilon(1e-12));
  }
}

TEST_CASE("oracle-sharp posteriors recover gold labels and boundaries") {
  SynthSpec spec;
  spec.num_utterances = 5;
  const Corpus c = generate_corpus(spec);
  const NGramLM lm = train_lm(c.gold_transcriptions(), 2, spec.alphabet_size, 0.1);
  const Vector prior = Vector::Constant(spec.alphabet_size, 1.0 / spec.alphabet_size);
  std::mt19937_64 rng(4);
  for (std::size_t i = 0; i < c.size(); ++i) {
    const auto& gold = (*c.gold_labels)[i].labels;
    Matrix post = Matrix::Zero(static_cast<Eigen::Index>(gold.size()), spec.alphabet_size);
    for (std::size_t t = 0; t < gold.size(); ++t) post(static_cast<Eigen::Index>(t), gold[t]) = 1.0;
    BoundaryPriorSignal bp;
    bp.prob.push_back(1.0);
    for (std::size_t t = 1; t < gold.size(); ++t) bp.prob.push_back(std::uniform_real_distribution<double>(0.01, 0.99)(rng));
    const BeamResult r = beam_search(post, lm, prior, bp, {8, 1.0});
    CHECK(r.labels == gold);
    CHECK(Segmentation::from_labels(r.labels) == (*c.gold_segmentation)[i]);
  }
}

TEST_CASE("beam properties on random instances") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const int y = fixtures::uniform_int(rng, 2, 4);
    const int T = fixtures::uniform_int(rng, 1, 12);
    const Matrix post = oracle::random_stochastic(T, y, rng);
    const NGramLM lm = fixtures::random_lm(rng, fixtures::uniform_int(rng, 1, 3), y, 0.3);
    const Vector prior = oracle::random_stochastic(1, y, rng).row(0).transpose();
    BoundaryPriorSignal bp;
    bp.prob.push_back(1.0);
    for (int t = 1; t < T; ++t) bp.prob.push_back(std::uniform_real_distribution<double>(0.01, 0.99)(rng));

    double last = -std::numeric_limits<double>::infinity();
    for (int width = 1; width <= 16; ++width) {
      const BeamResult r = beam_search(post, lm, prior, bp, {width, 1.0});
      CHECK(r.score >= last - 1e-9);
      last = std::max(last, r.score);
      CHECK(std::isfinite(r.score));
    }
    const BeamResult base = beam_search(post, lm, prior, bp, {8, 1.0});
    const BeamResult scaled = beam_search(post, lm, Vector(prior * 3.7), bp, {8, 1.0});
    CHECK(base.labels == scaled.labels);
  }
  CHECK_THROWS_AS(beam_search(Matrix::Constant(2, 2, 0.5), train_lm({{0, 1}}, 2, 2, 0.1), Vector::Constant(2, 0.5),
                              signal({1.0, 0.5}), {0, 1.0}),
                  ConfigError);
}

TEST_CASE("refined boundaries are the label change points") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 30; ++trial) {
    const FeatureSequence f = fixtures::random_features(rng, "u", fixtures::uniform_int(rng, 1, 30), 3);
    const Classifier c = Classifier::init({9, 6, 4}, rng());
    const NGramLM lm = fixtures::random_lm(rng, 2, 4, 0.2);
    const Refinement r =
        refine_boundaries(c, 3, lm, Vector::Constant(4, 0.25), boundary_prior(f), f, fixtures::uniform_int(rng, 1, 10));
    REQUIRE(r.segmentation.length() == f.length());
    CHECK(r.segmentation.is_boundary(0));
    for (int t = 1; t < f.length(); ++t) {
      CHECK(r.segmentation.is_boundary(t) ==
            (r.labels.labels[static_cast<std::size_t>(t)] != r.labels.labels[static_cast<std::size_t>(t - 1)]));
    }
  }
}

TEST_CASE("segmentation metric examples") {
  const Segmentation ref = Segmentation::from_starts(20, std::vector<int>{4, 9, 15});
  const SegMetrics same = eval_segmentation(ref, ref, 2);
  CHECK(same.recall == 1.0);
  CHECK(same.precision == 1.0);
  CHECK(same.f_score == 1.0);
  CHECK(same.r_value == 1.0);

  const SegMetrics half = seg_metrics(0.5, 1.0);
  CHECK(half.f_score == doctest::Approx(2.0 / 3.0));

  const SegMetrics wang = seg_metrics(0.782, 0.822);
  CHECK(wang.r_value == doctest::Approx(0.826).epsilon(0.005 / 0.826));
  CHECK(std::abs(wang.r_value - 0.826) <= 0.005);

  // Tolerance window and one-to-one matching.
  const Segmentation hyp = Segmentation::from_starts(20, std::vector<int>{5, 6, 12});
  const SegCounts n = match_boundaries(hyp, ref, 2);
  CHECK(n.hits == 1);
  CHECK(n.hyp == 3);
  CHECK(n.ref == 3);
  CHECK(match_boundaries(hyp, ref, 3).hits == 3);

  CHECK_THROWS_AS(eval_segmentation(Segmentation::single(4), Segmentation::single(5), 1), ShapeError);
}

TEST_CASE("recall and precision swap when hypothesis and reference swap") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 300; ++trial) {
    const int T = fixtures::uniform_int(rng, 1, 40);
    const Segmentation a = fixtures::random_segmentation(rng, T, 0.3);
    const Segmentation b = fixtures::random_segmentation(rng, T, 0.2);
    const int tol = fixtures::uniform_int(rng, 0, 3);
    const SegMetrics ab = eval_segmentation(a, b, tol), ba = eval_segmentation(b, a, tol);
    CHECK(ab.recall == ba.precision);
    CHECK(ab.precision == ba.recall);
    for (double v : {ab.recall, ab.precision, ab.f_score}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    CHECK(ab.r_value <= 1.0);
  }
}
