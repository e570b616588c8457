// include/sodm/model.hpp

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

#include "sodm/corpus.hpp"

namespace sodm {

struct ClassifierDims {
  int input_dim = 0;
  int hidden_dim = 0;
  int output_dim = 0;

  bool operator==(const ClassifierDims&) const = default;
};

/// Parameter-shaped container, used both for gradients and momentum buffers.
struct Gradients {
  Matrix w_hidden;
  Vector b_hidden;
  Matrix w_output;
  Vector b_output;

  static Gradients zeros(const ClassifierDims& dims);

  Gradients& operator+=(const Gradients& other);
  Gradients& operator*=(double scale);
  double squared_norm() const;
  bool all_finite() const;
  ClassifierDims dims() const;
};

/// Activations kept from the forward pass for backpropagation.
struct ForwardCache {
  Matrix hidden;      // rectified hidden activations, n x H
  Matrix posteriors;  // n x |Y|
};

/// p(y | x): one rectified hidden layer, then a temperature softmax.
class Classifier {
 public:
  Classifier() = default;
  explicit Classifier(const ClassifierDims& dims);

  /// Uniform fan-based (Glorot) weights, zero biases.
  static Classifier init(const ClassifierDims& dims, std::uint64_t seed);

  const ClassifierDims& dims() const { return dims_; }

  Matrix forward(const Matrix& inputs, double temperature) const;
  ForwardCache forward_cached(const Matrix& inputs, double temperature) const;

  /// Gradient of a scalar loss given dLoss/dPosteriors for every input row.
  Gradients backward(const Matrix& inputs, const ForwardCache& cache, const Matrix& d_posteriors,
                     double temperature) const;

  /// theta += step, shape-checked.
  void apply(const Gradients& step);

  // Parameters are public state of a plain model; keep them accessible for
  // tests and serialization.
  Matrix w_hidden;  // H x D
  Vector b_hidden;  // H
  Matrix w_output;  // |Y| x H
  Vector b_output;  // |Y|

  std::size_t num_parameters() const;
  /// Flat parameter view in the order w_hidden, b_hidden, w_output, b_output.
  Vector flat() const;
  void set_flat(const Vector& values);

  bool all_finite() const;
  bool operator==(const Classifier& other) const;

 private:
  ClassifierDims dims_;
};

Vector flatten(const Gradients& g);

/// Row-wise softmax of logits / temperature.
Matrix softmax_rows(const Matrix& logits, double temperature);

struct CheckpointMeta {
  int epoch = 0;
  int stage = 0;
  bool operator==(const CheckpointMeta&) const = default;
};

inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(const Classifier& classifier, const CheckpointMeta& meta,
                     const std::filesystem::path& path);
std::pair<Classifier, CheckpointMeta> load_checkpoint(const std::filesystem::path& path);

}  // namespace sodm
