// tests/test_trainer.cpp

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
#include <filesystem>
#include <random>

#include "doctest.h"
#include "fixtures.hpp"
#include "sodm/corpus.hpp"
#include "sodm/error.hpp"
#include "sodm/trainer.hpp"

using namespace sodm;
namespace fs = std::filesystem;

namespace {

struct Setup {
  Corpus train, heldout;
  NGramLM lm;
  TopKTable table;
  TrainerConfig config;
};

Setup make_setup(double noise, int alphabet, int stages_epochs) {
  SynthSpec spec;
  spec.alphabet_size = alphabet;
  spec.num_utterances = 60;
  spec.mean_phones_per_utterance = 6;
  spec.emission_noise_std = noise;
  spec.random_seed = 5;
  Setup s;
  auto [tr, ho] = split_corpus(generate_corpus(spec), 0.8, 1);
  s.train = std::move(tr);
  s.heldout = std::move(ho);
  s.lm = train_lm(s.train.gold_transcriptions(), 2, alphabet, 0.01);
  s.table = topk(s.lm, 10000, false);
  s.config.window_size = 3;
  s.config.hidden_dim = 16;
  s.config.loss.lambda = 1e-3;
  s.config.loss.fs_sample_size = 500;
  s.config.schedule = Schedule::desk();
  for (auto& st : s.config.schedule.stages) st.epochs = stages_epochs;
  return s;
}

SegmentedSet gold(const Corpus& c) { return {c.utterances, *c.gold_segmentation}; }

}  // namespace

TEST_CASE("momentum update rule and plain SGD reduction") {
  const ClassifierDims d{3, 2, 2};
  std::mt19937_64 rng(1);
  Gradients g1 = Gradients::zeros(d), g2 = Gradients::zeros(d);
  g1.w_hidden.setRandom();
  g1.b_output.setRandom();
  g2.w_output.setRandom();
  g2.b_hidden.setRandom();

  Classifier c = Classifier::init(d, 1);
  const Vector theta0 = c.flat();
  MomentumSgd plain(d, 0.0);
  plain.step(c, g1, 0.1);
  plain.step(c, g2, 0.2);
  CHECK((c.flat() - (theta0 - 0.1 * flatten(g1) - 0.2 * flatten(g2))).cwiseAbs().maxCoeff() < 1e-15);

  Classifier m = Classifier::init(d, 1);
  MomentumSgd sgd(d, 0.9);
  sgd.step(m, g1, 0.1);
  sgd.step(m, g2, 0.2);
  const Vector v1 = -0.1 * flatten(g1);
  const Vector v2 = 0.9 * v1 - 0.2 * flatten(g2);
  CHECK((flatten(sgd.velocity()) - v2).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((m.flat() - (theta0 + v1 + v2)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("schedule validation") {
  Schedule s = Schedule::desk();
  CHECK_NOTHROW(s.validate());
  CHECK_NOTHROW(Schedule::large().validate());
  CHECK(Schedule::large().total_epochs() == 1100);
  s.stages.clear();
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = Schedule::desk();
  s.stages[1].batch_size_segments = 0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = Schedule::desk();
  s.stages[0].temperature = 0.0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  Setup s = make_setup(1.0, 4, 1);
  s.config.schedule.stages.resize(1);
  s.config.schedule.learning_rate = 0.0;
  const Classifier init = Classifier::init({3 * 8, 16, 4}, 3);
  const TrainResult r = train_classifier(gold(s.train), gold(s.heldout), s.table, s.config, init);
  CHECK(r.best == init);
}

TEST_CASE("training is deterministic per seed") {
  Setup s = make_setup(1.0, 4, 2);
  const TrainResult a = train_classifier(gold(s.train), gold(s.heldout), s.table, s.config);
  const TrainResult b = train_classifier(gold(s.train), gold(s.heldout), s.table, s.config);
  CHECK(a.report.to_lines() == b.report.to_lines());
  CHECK(a.best == b.best);
  s.config.seed = 2;
  const TrainResult c = train_classifier(gold(s.train), gold(s.heldout), s.table, s.config);
  CHECK(!(c.best == a.best));
}

TEST_CASE("best epoch is the argmin of the self-validation loss") {
  Setup s = make_setup(1.0, 4, 3);
  const TrainResult r = train_classifier(gold(s.train), gold(s.heldout), s.table, s.config);
  REQUIRE(r.report.epochs.size() == 12);
  int arg = 0;
  for (std::size_t e = 0; e < r.report.epochs.size(); ++e) {
    if (r.report.epochs[e].self_validation < r.report.epochs[static_cast<std::size_t>(arg)].self_validation) {
      arg = static_cast<int>(e);
    }
  }
  CHECK(r.report.best_epoch == arg);
  CHECK(self_validation_loss(r.best, 3, gold(s.heldout), s.table, s.config.validation_seed) ==
        r.report.epochs[static_cast<std::size_t>(arg)].self_validation);
}

TEST_CASE("diagnostics never change model selection") {
  Setup s = make_setup(1.0, 4, 2);
  const TrainResult plain = train_classifier(gold(s.train), gold(s.heldout), s.table, s.config);
  std::mt19937_64 noise(99);
  const Diagnostic random_diag = [&](const Classifier&) { return std::uniform_real_distribution<double>()(noise); };
  const TrainResult diag = train_classifier(gold(s.train), gold(s.heldout), s.table, s.config, std::nullopt, random_diag);
  CHECK(plain.best == diag.best);
  CHECK(plain.report.best_epoch == diag.report.best_epoch);
  CHECK(diag.report.epochs.front().diagnostic_fer.has_value());
}

TEST_CASE("self-validation equals the training objective on the same data and tau") {
  Setup s = make_setup(1.0, 4, 1);
  const Classifier c = Classifier::init({24, 16, 4}, 8);
  const auto utts = prepare_utterances(s.heldout.utterances, *s.heldout.gold_segmentation, 3);
  std::mt19937_64 rng(s.config.validation_seed);
  const TauSample tau = sample_tau(*s.heldout.gold_segmentation, rng);
  std::vector<int> all(utts.size());
  for (std::size_t k = 0; k < all.size(); ++k) all[k] = static_cast<int>(k);
  CHECK(self_validation_loss(c, 3, gold(s.heldout), s.table, s.config.validation_seed) ==
        odm_value(c, utts, all, tau, s.table, 1.0));

  // A uniform-output classifier under N = 1 scores ln|Y| times the table mass.
  const Classifier uniform(ClassifierDims{24, 16, 4});
  const TopKTable uni = topk(train_lm(s.train.gold_transcriptions(), 1, 4, 0.0), 10, false);
  CHECK(self_validation_loss(uniform, 3, gold(s.heldout), uni, 1) ==
        doctest::Approx(std::log(4.0) * uni.total_mass()).epsilon(1e-12));
}

TEST_CASE("self-validation falls over the first stage on separable data") {
  Setup s = make_setup(0.0, 4, 20);
  s.config.schedule.stages.resize(1);
  s.config.loss.lambda = 0.0;
  const TrainResult r = train_classifier(gold(s.train), gold(s.heldout), s.table, s.config);
  int up = 0;
  for (std::size_t e = 1; e < r.report.epochs.size(); ++e) {
    up += r.report.epochs[e].self_validation >= r.report.epochs[e - 1].self_validation;
  }
  CHECK(up <= 2);
  CHECK(r.report.epochs.back().self_validation < r.report.epochs.front().self_validation);
}

TEST_CASE("non-finite parameters abort with stage and epoch") {
  Setup s = make_setup(1.0, 4, 1);
  Classifier bad = Classifier::init({24, 16, 4}, 1);
  bad.w_output(0, 0) = std::nan("");
  try {
    train_classifier(gold(s.train), gold(s.heldout), s.table, s.config, bad);
    FAIL("expected a numeric error");
  } catch (const NumericError& e) {
    const std::string what = e.what();
    CHECK(what.find("stage 0") != std::string::npos);
    CHECK(what.find("epoch 0") != std::string::npos);
  }
}

TEST_CASE("one outer iteration equals a single training run") {
  Setup s = make_setup(1.0, 4, 1);
  std::vector<BoundaryPriorSignal> ptr, pho;
  for (const auto& u : s.train.utterances) ptr.push_back(boundary_prior(u));
  for (const auto& u : s.heldout.utterances) pho.push_back(boundary_prior(u));
  AlternateConfig ac;
  ac.trainer = s.config;
  ac.outer_iterations = 1;
  ac.beam_width = 4;
  ac.output_dir = fs::temp_directory_path() / "sodm_test_alternate";
  fs::remove_all(*ac.output_dir);
  const AlternateResult alt = alternate(s.train.utterances, s.heldout.utterances, s.lm, s.table, {ptr, pho},
                                        *s.train.gold_segmentation, *s.heldout.gold_segmentation, ac);
  const TrainResult single = train_classifier(gold(s.train), gold(s.heldout), s.table, s.config);
  CHECK(alt.classifier == single.best);
  REQUIRE(alt.iterations.size() == 1);
  for (const char* f : {"iter1.ckpt", "iter1.report", "iter1.train.seg", "iter1.heldout.seg"}) {
    CHECK(fs::exists(*ac.output_dir / f));
  }
  CHECK(load_segmentations(*ac.output_dir / "iter1.train.seg", s.train.utterances) == alt.train_segmentations);
}

TEST_CASE("row files round trip") {
  const fs::path p = fs::temp_directory_path() / "sodm_test_rows.txt";
  const std::vector<std::string> ids{"a", "b"};
  const std::vector<std::vector<int>> rows{{1, 2, 3}, {}};
  save_rows(p, ids, rows);
  const auto back = load_rows(p);
  REQUIRE(back.size() == 2);
  CHECK(back[0].first == "a");
  CHECK(back[0].second == rows[0]);
  CHECK(back[1].second.empty());
}
