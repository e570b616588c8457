// src/selftrain.cpp

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

#include "sodm/selftrain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "sodm/error.hpp"
#include "sodm/trainer.hpp"

namespace sodm {

PseudoLabeledCorpus pseudo_label(const Classifier& classifier, int window_size, const NGramLM& lm,
                                 const Vector& frame_prior, std::span<const BoundaryPriorSignal> boundary_priors,
                                 std::span<const FeatureSequence> corpus, int beam_width) {
  if (boundary_priors.size() != corpus.size()) throw ShapeError("boundary priors not aligned with corpus");
  PseudoLabeledCorpus out;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    auto ref = refine_boundaries(classifier, window_size, lm, frame_prior, boundary_priors[i], corpus[i], beam_width);
    out.features.push_back(corpus[i]);
    out.labels.push_back(std::move(ref.labels));
  }
  return out;
}

void SupervisedConfig::validate() const {
  if (window_size < 1 || window_size % 2 == 0) throw ConfigError("window_size must be odd and positive");
  if (hidden_dim < 1) throw ConfigError("hidden_dim must be positive");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (batch_size_frames < 1) throw ConfigError("batch_size_frames must be >= 1");
  if (!(learning_rate >= 0)) throw ConfigError("learning_rate must be >= 0");
  if (!(momentum >= 0 && momentum < 1)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(heldout_fraction > 0 && heldout_fraction < 1)) throw ConfigError("heldout_fraction must lie in (0, 1)");
  if (patience < 1) throw ConfigError("patience must be >= 1");
}

namespace {

struct FrameSet {
  Matrix inputs;
  std::vector<Label> labels;
};

FrameSet stack_frames(const PseudoLabeledCorpus& data, std::span<const std::size_t> which, int window_size) {
  FrameSet set;
  Eigen::Index rows = 0;
  for (std::size_t u : which) rows += data.features[u].length();
  if (rows == 0) return set;
  const Eigen::Index cols = static_cast<Eigen::Index>(window_size) * data.features[which.front()].dim();
  set.inputs.resize(rows, cols);
  Eigen::Index r = 0;
  for (std::size_t u : which) {
    const Matrix w = context_windows(data.features[u], window_size);
    set.inputs.middleRows(r, w.rows()) = w;
    r += w.rows();
    set.labels.insert(set.labels.end(), data.labels[u].labels.begin(), data.labels[u].labels.end());
  }
  return set;
}

// Mean cross-entropy of the rows and its gradient w.r.t. the posteriors.
double cross_entropy(const Matrix& posteriors, std::span<const Label> labels, Matrix* grad) {
  double loss = 0.0;
  const double n = static_cast<double>(labels.size());
  if (grad) *grad = Matrix::Zero(posteriors.rows(), posteriors.cols());
  for (std::size_t r = 0; r < labels.size(); ++r) {
    const auto row = static_cast<Eigen::Index>(r);
    const double p = std::max(posteriors(row, labels[r]), 1e-300);
    loss -= std::log(p);
    if (grad) (*grad)(row, labels[r]) = -1.0 / (p * n);
  }
  return loss / n;
}

}  // namespace

Classifier retrain_on_pseudo_labels(const PseudoLabeledCorpus& data, int alphabet_size,
                                    const SupervisedConfig& config, std::uint64_t seed, SupervisedReport* report) {
  config.validate();
  if (data.features.empty()) throw DataError("pseudo-labelled corpus is empty");
  if (data.labels.size() != data.features.size()) throw ShapeError("pseudo labels not aligned with features");
  for (std::size_t u = 0; u < data.features.size(); ++u) {
    if (data.labels[u].length() != data.features[u].length()) throw ShapeError("pseudo label length mismatch");
  }

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(data.features.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t n_held = static_cast<std::size_t>(std::floor(config.heldout_fraction * static_cast<double>(order.size())));
  if (order.size() > 1) n_held = std::clamp<std::size_t>(n_held, 1, order.size() - 1);
  else n_held = 0;
  std::vector<std::size_t> held(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_held));
  std::vector<std::size_t> fit(order.begin() + static_cast<std::ptrdiff_t>(n_held), order.end());
  std::sort(held.begin(), held.end());
  std::sort(fit.begin(), fit.end());

  const FrameSet train = stack_frames(data, fit, config.window_size);
  const FrameSet valid = held.empty() ? train : stack_frames(data, held, config.window_size);

  const ClassifierDims dims{static_cast<int>(train.inputs.cols()), config.hidden_dim, alphabet_size};
  Classifier classifier = Classifier::init(dims, seed);
  MomentumSgd sgd(dims, config.momentum);
  Classifier best = classifier;
  double best_loss = std::numeric_limits<double>::infinity();
  int since_best = 0;
  SupervisedReport local;

  std::vector<Eigen::Index> rows(static_cast<std::size_t>(train.inputs.rows()));
  std::iota(rows.begin(), rows.end(), 0);
  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    std::shuffle(rows.begin(), rows.end(), rng);
    double epoch_loss = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < rows.size(); start += static_cast<std::size_t>(config.batch_size_frames)) {
      const std::size_t end = std::min(rows.size(), start + static_cast<std::size_t>(config.batch_size_frames));
      Matrix x(static_cast<Eigen::Index>(end - start), train.inputs.cols());
      std::vector<Label> y;
      for (std::size_t k = start; k < end; ++k) {
        x.row(static_cast<Eigen::Index>(k - start)) = train.inputs.row(rows[k]);
        y.push_back(train.labels[static_cast<std::size_t>(rows[k])]);
      }
      const ForwardCache cache = classifier.forward_cached(x, 1.0);
      Matrix grad;
      epoch_loss += cross_entropy(cache.posteriors, y, &grad);
      sgd.step(classifier, classifier.backward(x, cache, grad, 1.0), config.learning_rate);
      ++batches;
    }
    if (!classifier.all_finite()) throw NumericError("non-finite parameters in supervised epoch " + std::to_string(epoch));
    const double held_loss = cross_entropy(classifier.forward(valid.inputs, 1.0), valid.labels, nullptr);
    local.train_loss.push_back(epoch_loss / std::max(batches, 1));
    local.heldout_loss.push_back(held_loss);
    if (held_loss < best_loss) {
      best_loss = held_loss;
      best = classifier;
      local.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  if (report) *report = std::move(local);
  return best;
}

}  // namespace sodm
