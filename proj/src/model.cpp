// src/model.cpp

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

#include "sodm/model.hpp"

#include <cmath>
#include <random>

#include "sodm/error.hpp"
#include "text_io.hpp"

namespace sodm {

Gradients Gradients::zeros(const ClassifierDims& d) {
  Gradients g;
  g.w_hidden = Matrix::Zero(d.hidden_dim, d.input_dim);
  g.b_hidden = Vector::Zero(d.hidden_dim);
  g.w_output = Matrix::Zero(d.output_dim, d.hidden_dim);
  g.b_output = Vector::Zero(d.output_dim);
  return g;
}

Gradients& Gradients::operator+=(const Gradients& other) {
  if (dims() != other.dims()) throw ShapeError("gradient shapes differ");
  w_hidden += other.w_hidden;
  b_hidden += other.b_hidden;
  w_output += other.w_output;
  b_output += other.b_output;
  return *this;
}

Gradients& Gradients::operator*=(double scale) {
  w_hidden *= scale;
  b_hidden *= scale;
  w_output *= scale;
  b_output *= scale;
  return *this;
}

double Gradients::squared_norm() const {
  return w_hidden.squaredNorm() + b_hidden.squaredNorm() + w_output.squaredNorm() +
         b_output.squaredNorm();
}

bool Gradients::all_finite() const {
  return w_hidden.allFinite() && b_hidden.allFinite() && w_output.allFinite() && b_output.allFinite();
}

ClassifierDims Gradients::dims() const {
  return {static_cast<int>(w_hidden.cols()), static_cast<int>(w_hidden.rows()),
          static_cast<int>(w_output.rows())};
}

Vector flatten(const Gradients& g) {
  Vector out(g.w_hidden.size() + g.b_hidden.size() + g.w_output.size() + g.b_output.size());
  Eigen::Index o = 0;
  out.segment(o, g.w_hidden.size()) = Eigen::Map<const Vector>(g.w_hidden.data(), g.w_hidden.size());
  o += g.w_hidden.size();
  out.segment(o, g.b_hidden.size()) = g.b_hidden;
  o += g.b_hidden.size();
  out.segment(o, g.w_output.size()) = Eigen::Map<const Vector>(g.w_output.data(), g.w_output.size());
  o += g.w_output.size();
  out.segment(o, g.b_output.size()) = g.b_output;
  return out;
}

Classifier::Classifier(const ClassifierDims& dims) : dims_(dims) {
  if (dims.input_dim < 1 || dims.hidden_dim < 1 || dims.output_dim < 1) {
    throw ConfigError("classifier dimensions must be positive");
  }
  w_hidden = Matrix::Zero(dims.hidden_dim, dims.input_dim);
  b_hidden = Vector::Zero(dims.hidden_dim);
  w_output = Matrix::Zero(dims.output_dim, dims.hidden_dim);
  b_output = Vector::Zero(dims.output_dim);
}

Classifier Classifier::init(const ClassifierDims& dims, std::uint64_t seed) {
  Classifier c(dims);
  std::mt19937_64 rng(seed);
  auto fill = [&rng](Matrix& w) {
    const double bound = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    std::uniform_real_distribution<double> uniform(-bound, bound);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = uniform(rng);
  };
  fill(c.w_hidden);
  fill(c.w_output);
  return c;
}

Matrix softmax_rows(const Matrix& logits, double temperature) {
  Matrix out = logits / temperature;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double mx = out.row(r).maxCoeff();
    out.row(r) = (out.row(r).array() - mx).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

ForwardCache Classifier::forward_cached(const Matrix& inputs, double temperature) const {
  if (inputs.cols() != dims_.input_dim) {
    throw ShapeError("classifier input dim " + std::to_string(dims_.input_dim) + ", got " +
                     std::to_string(inputs.cols()));
  }
  if (!(temperature > 0)) throw ConfigError("softmax temperature must be > 0");
  ForwardCache cache;
  cache.hidden = ((inputs * w_hidden.transpose()).rowwise() + b_hidden.transpose()).cwiseMax(0.0);
  const Matrix logits = (cache.hidden * w_output.transpose()).rowwise() + b_output.transpose();
  cache.posteriors = softmax_rows(logits, temperature);
  return cache;
}

Matrix Classifier::forward(const Matrix& inputs, double temperature) const {
  return forward_cached(inputs, temperature).posteriors;
}

Gradients Classifier::backward(const Matrix& inputs, const ForwardCache& cache, const Matrix& d_posteriors,
                               double temperature) const {
  const auto& p = cache.posteriors;
  if (d_posteriors.rows() != p.rows() || d_posteriors.cols() != p.cols() || inputs.rows() != p.rows() ||
      inputs.cols() != dims_.input_dim) {
    throw ShapeError("backward: inputs, cache and dLoss/dPosteriors disagree in shape");
  }
  // Softmax Jacobian: dlogit_k = p_k (g_k - <g, p>) / T.
  const Vector inner = (d_posteriors.array() * p.array()).rowwise().sum();
  Matrix d_logits = (p.array() * (d_posteriors.colwise() - inner).array()) / temperature;

  Gradients g;
  g.w_output = d_logits.transpose() * cache.hidden;
  g.b_output = d_logits.colwise().sum().transpose();
  Matrix d_hidden = d_logits * w_output;
  d_hidden.array() *= (cache.hidden.array() > 0.0).cast<double>();
  g.w_hidden = d_hidden.transpose() * inputs;
  g.b_hidden = d_hidden.colwise().sum().transpose();
  return g;
}

void Classifier::apply(const Gradients& step) {
  if (step.dims() != dims_) throw ShapeError("update shape does not match classifier");
  w_hidden += step.w_hidden;
  b_hidden += step.b_hidden;
  w_output += step.w_output;
  b_output += step.b_output;
}

std::size_t Classifier::num_parameters() const {
  return static_cast<std::size_t>(w_hidden.size() + b_hidden.size() + w_output.size() + b_output.size());
}

Vector Classifier::flat() const {
  Gradients g{w_hidden, b_hidden, w_output, b_output};
  return flatten(g);
}

void Classifier::set_flat(const Vector& values) {
  if (static_cast<std::size_t>(values.size()) != num_parameters()) throw ShapeError("flat parameter size");
  Eigen::Index o = 0;
  Eigen::Map<Vector>(w_hidden.data(), w_hidden.size()) = values.segment(o, w_hidden.size());
  o += w_hidden.size();
  b_hidden = values.segment(o, b_hidden.size());
  o += b_hidden.size();
  Eigen::Map<Vector>(w_output.data(), w_output.size()) = values.segment(o, w_output.size());
  o += w_output.size();
  b_output = values.segment(o, b_output.size());
}

bool Classifier::all_finite() const {
  return w_hidden.allFinite() && b_hidden.allFinite() && w_output.allFinite() && b_output.allFinite();
}

bool Classifier::operator==(const Classifier& other) const {
  return dims_ == other.dims_ && w_hidden == other.w_hidden && b_hidden == other.b_hidden &&
         w_output == other.w_output && b_output == other.b_output;
}

namespace {

void write_block(std::ostream& out, const char* name, const double* data, Eigen::Index rows, Eigen::Index cols) {
  out << name << ' ' << rows << ' ' << cols << "\n";
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (c) out << ' ';
      out << detail::format_double(data[r * cols + c]);
    }
    out << "\n";
  }
}

void read_block(detail::LineReader& in, const char* name, double* data, Eigen::Index rows, Eigen::Index cols) {
  auto tok = in.expect(name);
  in.require(tok, name, 3);
  if (in.parse<Eigen::Index>(tok[1]) != rows || in.parse<Eigen::Index>(tok[2]) != cols) {
    in.fail(std::string("block '") + name + "' shape disagrees with dims header");
  }
  for (Eigen::Index r = 0; r < rows; ++r) {
    tok = in.expect("parameter row");
    if (static_cast<Eigen::Index>(tok.size()) != cols) in.fail("parameter row has wrong length");
    for (Eigen::Index c = 0; c < cols; ++c) data[r * cols + c] = in.parse<double>(tok[static_cast<std::size_t>(c)]);
  }
}

}  // namespace

// Text checkpoint: version tag, dims, metadata, then the four parameter
// blocks (row-major, shortest round-trip decimals).
void save_checkpoint(const Classifier& c, const CheckpointMeta& meta, const std::filesystem::path& path) {
  auto out = detail::open_for_write(path.string());
  const auto& d = c.dims();
  out << "sodm-checkpoint " << kCheckpointVersion << "\n";
  out << "dims " << d.input_dim << ' ' << d.hidden_dim << ' ' << d.output_dim << "\n";
  out << "meta " << meta.epoch << ' ' << meta.stage << "\n";
  write_block(out, "w_hidden", c.w_hidden.data(), c.w_hidden.rows(), c.w_hidden.cols());
  write_block(out, "b_hidden", c.b_hidden.data(), 1, c.b_hidden.size());
  write_block(out, "w_output", c.w_output.data(), c.w_output.rows(), c.w_output.cols());
  write_block(out, "b_output", c.b_output.data(), 1, c.b_output.size());
}

std::pair<Classifier, CheckpointMeta> load_checkpoint(const std::filesystem::path& path) {
  detail::LineReader in(path.string());
  auto tok = in.expect("header");
  if (tok.size() != 2 || tok[0] != "sodm-checkpoint") in.fail("not a checkpoint file");
  if (in.parse<int>(tok[1]) != kCheckpointVersion) {
    in.fail("checkpoint version " + std::string(tok[1]) + " unsupported (expected " +
            std::to_string(kCheckpointVersion) + ")");
  }
  tok = in.expect("dims");
  in.require(tok, "dims", 4);
  ClassifierDims d{in.parse<int>(tok[1]), in.parse<int>(tok[2]), in.parse<int>(tok[3])};
  if (d.input_dim < 1 || d.hidden_dim < 1 || d.output_dim < 1) in.fail("dims must be positive");
  tok = in.expect("meta");
  in.require(tok, "meta", 3);
  CheckpointMeta meta{in.parse<int>(tok[1]), in.parse<int>(tok[2])};
  Classifier c(d);
  read_block(in, "w_hidden", c.w_hidden.data(), c.w_hidden.rows(), c.w_hidden.cols());
  read_block(in, "b_hidden", c.b_hidden.data(), 1, c.b_hidden.size());
  read_block(in, "w_output", c.w_output.data(), c.w_output.rows(), c.w_output.cols());
  read_block(in, "b_output", c.b_output.data(), 1, c.b_output.size());
  if (!c.all_finite()) in.fail("non-finite parameter");
  return {std::move(c), meta};
}

}  // namespace sodm
