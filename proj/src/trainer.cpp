// src/trainer.cpp

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

#include "sodm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "sodm/decode.hpp"
#include "sodm/error.hpp"
#include "text_io.hpp"

namespace sodm {

Schedule Schedule::large() {
  Schedule s;
  s.stages = {{200, 500, 1.0}, {300, 5000, 0.9}, {300, 10000, 0.8}, {300, 20000, 0.7}};
  s.learning_rate = 1e-3;
  s.momentum = 0.9;
  return s;
}

Schedule Schedule::desk() {
  Schedule s;
  s.stages = {{20, 250, 1.0}, {20, 500, 0.9}, {20, 1000, 0.8}, {20, 2000, 0.7}};
  s.learning_rate = 0.05;
  s.momentum = 0.9;
  return s;
}

int Schedule::total_epochs() const {
  int n = 0;
  for (const auto& st : stages) n += st.epochs;
  return n;
}

void Schedule::validate() const {
  if (stages.empty()) throw ConfigError("schedule needs at least one stage");
  for (const auto& st : stages) {
    if (st.epochs < 0) throw ConfigError("stage epochs must be >= 0");
    if (st.batch_size_segments < 1) throw ConfigError("stage batch size must be positive");
    if (!(st.temperature > 0)) throw ConfigError("stage temperature must be positive");
  }
  if (total_epochs() < 1) throw ConfigError("schedule must run at least one epoch");
  if (!(learning_rate >= 0)) throw ConfigError("learning rate must be >= 0");
  if (!(momentum >= 0 && momentum < 1)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(lr_decay > 0 && lr_decay <= 1)) throw ConfigError("lr_decay must lie in (0, 1]");
}

MomentumSgd::MomentumSgd(const ClassifierDims& dims, double momentum)
    : velocity_(Gradients::zeros(dims)), momentum_(momentum) {}

void MomentumSgd::step(Classifier& classifier, const Gradients& grad, double learning_rate) {
  velocity_ *= momentum_;
  Gradients scaled = grad;
  scaled *= -learning_rate;
  velocity_ += scaled;
  classifier.apply(velocity_);
}

std::string TrainReport::to_lines() const {
  std::ostringstream out;
  for (const auto& r : epochs) {
    out << "epoch=" << r.epoch << " stage=" << r.stage << " lr=" << detail::format_double(r.learning_rate)
        << " J=" << detail::format_double(r.j) << " J_ODM=" << detail::format_double(r.j_odm)
        << " J_FS=" << detail::format_double(r.j_fs) << " selfval=" << detail::format_double(r.self_validation);
    if (r.diagnostic_fer) out << " diag_fer=" << detail::format_double(*r.diagnostic_fer);
    out << " best=" << (r.epoch == best_epoch ? 1 : 0) << "\n";
  }
  return out.str();
}

void TrainReport::save(const std::filesystem::path& path) const {
  auto out = detail::open_for_write(path.string());
  out << to_lines();
}

void TrainerConfig::validate() const {
  if (window_size < 1 || window_size % 2 == 0) throw ConfigError("window_size must be odd and positive");
  if (hidden_dim < 1) throw ConfigError("hidden_dim must be positive");
  loss.validate();
  schedule.validate();
}

namespace {

std::vector<std::vector<int>> make_batches(std::span<const TrainingUtterance> utts, std::vector<int> order,
                                           int batch_size_segments) {
  std::vector<std::vector<int>> batches;
  std::vector<int> current;
  int segs = 0;
  for (int u : order) {
    current.push_back(u);
    segs += utts[static_cast<std::size_t>(u)].segmentation.num_segments();
    if (segs >= batch_size_segments) {
      batches.push_back(std::move(current));
      current.clear();
      segs = 0;
    }
  }
  if (!current.empty()) {
    // A small tail batch gives a noisy N-gram estimate; fold it into the last one.
    if (!batches.empty() && 2 * segs < batch_size_segments) {
      batches.back().insert(batches.back().end(), current.begin(), current.end());
    } else {
      batches.push_back(std::move(current));
    }
  }
  return batches;
}

void check_finite(const LossValue& v, const Gradients& g, int stage, int epoch) {
  auto fail = [&](const char* what) {
    throw NumericError(std::string("non-finite ") + what + " at stage " + std::to_string(stage) + ", epoch " +
                       std::to_string(epoch));
  };
  if (!std::isfinite(v.odm)) fail("J_ODM");
  if (!std::isfinite(v.fs)) fail("J_FS");
  if (!std::isfinite(v.total)) fail("J");
  if (!g.all_finite()) fail("gradient");
}

std::vector<int> all_indices(std::size_t n) {
  std::vector<int> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

}  // namespace

double self_validation_loss(const Classifier& classifier, int window_size, const SegmentedSet& heldout,
                            const TopKTable& table, std::uint64_t validation_seed) {
  if (heldout.features.empty()) throw DataError("self-validation needs a non-empty held-out set");
  const auto utts = prepare_utterances(heldout.features, heldout.segmentations, window_size);
  std::mt19937_64 rng(validation_seed);
  const TauSample tau = sample_tau(heldout.segmentations, rng);
  const auto batch = all_indices(utts.size());
  return odm_value(classifier, utts, batch, tau, table, 1.0);
}

TrainResult train_classifier(const SegmentedSet& train, const SegmentedSet& heldout, const TopKTable& table,
                             const TrainerConfig& config, const std::optional<Classifier>& initial,
                             const Diagnostic& diagnostic) {
  config.validate();
  if (train.features.empty()) throw DataError("training set is empty");
  if (heldout.features.empty()) throw DataError("held-out set is empty");
  if (table.order != config.loss.ngram_order) throw ConfigError("N-gram table order differs from loss config");

  const auto train_utts = prepare_utterances(train.features, train.segmentations, config.window_size);
  const auto held_utts = prepare_utterances(heldout.features, heldout.segmentations, config.window_size);
  const ClassifierDims dims{static_cast<int>(train_utts.front().inputs.cols()), config.hidden_dim,
                            table.alphabet_size};

  Classifier classifier = initial ? *initial : Classifier::init(dims, config.seed);
  if (classifier.dims() != dims) throw ConfigError("initial classifier dims do not match the data");

  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::mt19937_64 val_rng(config.validation_seed);
  const TauSample val_tau = sample_tau(heldout.segmentations, val_rng);
  const auto held_batch = all_indices(held_utts.size());

  MomentumSgd sgd(dims, config.schedule.momentum);
  TrainResult result{classifier, {}};
  double best = std::numeric_limits<double>::infinity();
  LossConfig loss = config.loss;

  int epoch = 0;
  for (std::size_t s = 0; s < config.schedule.stages.size(); ++s) {
    const Stage& stage = config.schedule.stages[s];
    loss.batch_size_segments = stage.batch_size_segments;
    loss.temperature = stage.temperature;
    double lr = config.schedule.learning_rate;
    for (int e = 0; e < stage.epochs; ++e, ++epoch) {
      const TauSample tau = sample_tau(train.segmentations, rng);
      std::vector<int> order = all_indices(train_utts.size());
      std::shuffle(order.begin(), order.end(), rng);
      const auto batches = make_batches(train_utts, std::move(order), loss.batch_size_segments);

      EpochRecord rec;
      rec.epoch = epoch;
      rec.stage = static_cast<int>(s);
      rec.learning_rate = lr;
      for (const auto& batch : batches) {
        const auto pairs = sample_fs_pairs(train_utts, batch, loss.fs_sample_size, rng);
        auto [value, grads] = combined_loss(classifier, train_utts, batch, tau, pairs, table, loss);
        check_finite(value, grads, static_cast<int>(s), epoch);
        sgd.step(classifier, grads, lr);
        rec.j += value.total;
        rec.j_odm += value.odm;
        rec.j_fs += value.fs;
      }
      const double nb = static_cast<double>(batches.size());
      rec.j /= nb;
      rec.j_odm /= nb;
      rec.j_fs /= nb;
      if (!classifier.all_finite()) {
        throw NumericError("non-finite parameters at stage " + std::to_string(s) + ", epoch " +
                           std::to_string(epoch));
      }
      rec.self_validation = odm_value(classifier, held_utts, held_batch, val_tau, table, 1.0);
      if (!std::isfinite(rec.self_validation)) {
        throw NumericError("non-finite self-validation loss at stage " + std::to_string(s) + ", epoch " +
                           std::to_string(epoch));
      }
      if (diagnostic) rec.diagnostic_fer = diagnostic(classifier);
      if (rec.self_validation < best) {
        best = rec.self_validation;
        result.best = classifier;
        result.report.best_epoch = epoch;
      }
      result.report.epochs.push_back(rec);
      lr *= config.schedule.lr_decay;
    }
  }
  return result;
}

void AlternateConfig::validate() const {
  trainer.validate();
  if (outer_iterations < 1) throw ConfigError("outer_iterations must be >= 1");
  if (beam_width < 1) throw ConfigError("beam_width must be >= 1");
}

AlternateResult alternate(std::span<const FeatureSequence> train, std::span<const FeatureSequence> heldout,
                          const NGramLM& lm, const TopKTable& table, const BoundaryPriors& priors,
                          std::vector<Segmentation> init_train, std::vector<Segmentation> init_heldout,
                          const AlternateConfig& config, const Diagnostic& diagnostic,
                          const std::optional<Classifier>& initial) {
  config.validate();
  if (priors.train.size() != train.size() || priors.heldout.size() != heldout.size()) {
    throw ShapeError("boundary priors not aligned with utterances");
  }
  if (config.output_dir) std::filesystem::create_directories(*config.output_dir);

  AlternateResult result;
  result.train_segmentations = std::move(init_train);
  result.heldout_segmentations = std::move(init_heldout);
  std::optional<Classifier> previous = initial;
  const int w = config.trainer.window_size;

  for (int it = 0; it < config.outer_iterations; ++it) {
    const bool carry = config.warm_start || it == 0;
    TrainResult tr = train_classifier({train, result.train_segmentations}, {heldout, result.heldout_segmentations},
                                      table, config.trainer, carry ? previous : std::nullopt, diagnostic);
    IterationReport rep;
    rep.iteration = it;
    rep.classifier = tr.best;
    rep.train = std::move(tr.report);
    rep.frame_prior = estimate_frame_prior(rep.classifier, w, train);
    for (std::size_t i = 0; i < train.size(); ++i) {
      rep.train_segmentations.push_back(
          refine_boundaries(rep.classifier, w, lm, rep.frame_prior, priors.train[i], train[i], config.beam_width)
              .segmentation);
    }
    for (std::size_t i = 0; i < heldout.size(); ++i) {
      rep.heldout_segmentations.push_back(refine_boundaries(rep.classifier, w, lm, rep.frame_prior,
                                                            priors.heldout[i], heldout[i], config.beam_width)
                                              .segmentation);
    }
    if (config.output_dir) {
      const auto stem = *config.output_dir / ("iter" + std::to_string(it + 1));
      save_checkpoint(rep.classifier, {rep.train.best_epoch, it}, stem.string() + ".ckpt");
      rep.train.save(stem.string() + ".report");
      save_segmentations(stem.string() + ".train.seg", train, rep.train_segmentations);
      save_segmentations(stem.string() + ".heldout.seg", heldout, rep.heldout_segmentations);
    }
    result.train_segmentations = rep.train_segmentations;
    result.heldout_segmentations = rep.heldout_segmentations;
    previous = rep.classifier;
    result.classifier = rep.classifier;
    result.iterations.push_back(std::move(rep));
  }
  return result;
}

void save_rows(const std::filesystem::path& path, std::span<const std::string> ids,
               std::span<const std::vector<int>> rows) {
  if (ids.size() != rows.size()) throw ShapeError("row ids and rows differ in size");
  auto out = detail::open_for_write(path.string());
  for (std::size_t k = 0; k < ids.size(); ++k) {
    out << ids[k];
    for (int v : rows[k]) out << ' ' << v;
    out << "\n";
  }
}

std::vector<std::pair<std::string, std::vector<int>>> load_rows(const std::filesystem::path& path) {
  detail::LineReader in(path.string());
  std::vector<std::pair<std::string, std::vector<int>>> out;
  std::vector<std::string_view> tok;
  while (in.next(tok)) {
    std::vector<int> values;
    for (std::size_t k = 1; k < tok.size(); ++k) values.push_back(in.parse<int>(tok[k]));
    out.emplace_back(std::string(tok[0]), std::move(values));
  }
  return out;
}

void save_segmentations(const std::filesystem::path& path, std::span<const FeatureSequence> utterances,
                        std::span<const Segmentation> segmentations) {
  if (utterances.size() != segmentations.size()) throw ShapeError("segmentations not aligned");
  std::vector<std::string> ids;
  std::vector<std::vector<int>> rows;
  for (std::size_t k = 0; k < utterances.size(); ++k) {
    ids.push_back(utterances[k].utterance_id);
    const auto& b = segmentations[k].boundaries();
    rows.emplace_back(b.begin(), b.end());
  }
  save_rows(path, ids, rows);
}

std::vector<Segmentation> load_segmentations(const std::filesystem::path& path,
                                             std::span<const FeatureSequence> utterances) {
  auto rows = load_rows(path);
  std::map<std::string, std::vector<int>> by_id;
  for (auto& [id, r] : rows) {
    if (!by_id.emplace(id, std::move(r)).second) throw DataError(path.string() + ": duplicate id " + id);
  }
  std::vector<Segmentation> out;
  for (const auto& u : utterances) {
    auto it = by_id.find(u.utterance_id);
    if (it == by_id.end()) throw DataError(path.string() + ": no segmentation for " + u.utterance_id);
    if (static_cast<int>(it->second.size()) != u.length()) {
      throw DataError(path.string() + ": segmentation length mismatch for " + u.utterance_id);
    }
    std::vector<std::uint8_t> b;
    for (int v : it->second) {
      if (v != 0 && v != 1) throw DataError(path.string() + ": boundary values must be 0/1");
      b.push_back(static_cast<std::uint8_t>(v));
    }
    out.emplace_back(std::move(b));
  }
  return out;
}

}  // namespace sodm
