// src/lm.cpp

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

#include "sodm/lm.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "sodm/error.hpp"
#include "text_io.hpp"

namespace sodm {

double TopKTable::total_mass() const { return std::accumulate(probs.begin(), probs.end(), 0.0); }

NGramLM::NGramLM(int order, int alphabet_size, double alpha)
    : order_(order), alphabet_size_(alphabet_size), alpha_(alpha) {
  if (order < 1) throw ConfigError("LM order must be >= 1");
  if (alphabet_size < 1) throw ConfigError("LM alphabet size must be >= 1");
  if (!(alpha >= 0)) throw ConfigError("LM smoothing constant must be >= 0");
  counts_.resize(static_cast<std::size_t>(order));
  continuations_.resize(static_cast<std::size_t>(order));
}

void NGramLM::add_count(const NGram& gram, std::uint64_t n) {
  const auto k = gram.size();
  if (k < 1 || k > static_cast<std::size_t>(order_)) throw DataError("n-gram length outside [1, order]");
  for (Label y : gram) {
    if (y < 0 || y >= alphabet_size_) throw DataError("n-gram label out of range");
  }
  counts_[k - 1][gram] += n;
}

void NGramLM::finalize() {
  for (auto& m : continuations_) m.clear();
  for (std::size_t k = 1; k <= counts_.size(); ++k) {
    for (const auto& [gram, n] : counts_[k - 1]) {
      NGram context(gram.begin(), gram.end() - 1);
      continuations_[k - 1][context] += n;
    }
  }
}

std::uint64_t NGramLM::count(std::span<const Label> gram) const {
  if (gram.empty() || gram.size() > counts_.size()) return 0;
  const auto& m = counts_[gram.size() - 1];
  auto it = m.find(NGram(gram.begin(), gram.end()));
  return it == m.end() ? 0 : it->second;
}

std::uint64_t NGramLM::total_windows() const {
  if (counts_.empty()) return 0;
  std::uint64_t total = 0;
  for (const auto& [gram, n] : counts_.back()) total += n;
  return total;
}

double NGramLM::joint(std::span<const Label> gram) const {
  if (static_cast<int>(gram.size()) != order_) throw ShapeError("joint query needs an order-N gram");
  const auto total = total_windows();
  return total == 0 ? 0.0 : static_cast<double>(count(gram)) / static_cast<double>(total);
}

std::vector<std::pair<NGram, double>> NGramLM::joint_table() const {
  std::vector<std::pair<NGram, double>> out;
  const auto total = static_cast<double>(total_windows());
  if (counts_.empty()) return out;
  for (const auto& [gram, n] : counts_.back()) out.emplace_back(gram, static_cast<double>(n) / total);
  return out;
}

double NGramLM::cond_prob(Label next, std::span<const Label> history) const {
  const std::size_t ctx_len = std::min(history.size(), static_cast<std::size_t>(order_ - 1));
  NGram gram(history.end() - static_cast<std::ptrdiff_t>(ctx_len), history.end());
  double ctx_count = 0.0;
  if (!continuations_.empty()) {
    const auto& cont = continuations_[ctx_len];
    auto it = cont.find(gram);
    if (it != cont.end()) ctx_count = static_cast<double>(it->second);
  }
  gram.push_back(next);
  const double joint_count = static_cast<double>(count(gram));
  const double denom = ctx_count + alpha_ * alphabet_size_;
  if (denom <= 0.0) return 1.0 / alphabet_size_;
  return (joint_count + alpha_) / denom;
}

const std::map<NGram, std::uint64_t>& NGramLM::counts_of_order(int k) const {
  if (k < 1 || k > order_) throw ShapeError("order outside [1, N]");
  return counts_[static_cast<std::size_t>(k - 1)];
}

bool NGramLM::operator==(const NGramLM& other) const {
  return order_ == other.order_ && alphabet_size_ == other.alphabet_size_ && alpha_ == other.alpha_ &&
         counts_ == other.counts_;
}

NGramLM train_lm(const std::vector<std::vector<Label>>& sequences, int order, int alphabet_size,
                 double alpha) {
  NGramLM lm(order, alphabet_size, alpha);
  bool any_window = false;
  for (const auto& seq : sequences) {
    for (std::size_t k = 1; k <= static_cast<std::size_t>(order); ++k) {
      if (seq.size() < k) break;
      for (std::size_t i = 0; i + k <= seq.size(); ++i) {
        lm.add_count(NGram(seq.begin() + static_cast<std::ptrdiff_t>(i),
                           seq.begin() + static_cast<std::ptrdiff_t>(i + k)),
                     1);
      }
    }
    any_window = any_window || seq.size() >= static_cast<std::size_t>(order);
  }
  if (!any_window) throw ConfigError("LM order exceeds every training sequence length");
  lm.finalize();
  return lm;
}

TopKTable topk(const NGramLM& lm, std::size_t k_top, bool renormalize) {
  if (k_top < 1) throw ConfigError("K_top must be >= 1");
  auto table = lm.joint_table();
  std::stable_sort(table.begin(), table.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (table.size() > k_top) table.resize(k_top);
  TopKTable out;
  out.order = lm.order();
  out.alphabet_size = lm.alphabet_size();
  out.renormalized = renormalize;
  double mass = 0.0;
  for (auto& [gram, p] : table) {
    out.ngrams.push_back(gram);
    out.probs.push_back(p);
    mass += p;
  }
  if (renormalize && mass > 0.0) {
    for (double& p : out.probs) p /= mass;
  }
  return out;
}

// Format:
//   sodm-lm 1
//   order N
//   alphabet_size Y
//   alpha a
//   \k-grams n       (for each k with counts, followed by n lines "z_1 .. z_k count")
void save_lm(const NGramLM& lm, const std::filesystem::path& path) {
  auto out = detail::open_for_write(path.string());
  out << "sodm-lm 1\n";
  out << "order " << lm.order() << "\n";
  out << "alphabet_size " << lm.alphabet_size() << "\n";
  out << "alpha " << detail::format_double(lm.alpha()) << "\n";
  for (int k = 1; k <= lm.order(); ++k) {
    const auto& counts = lm.counts_of_order(k);
    if (counts.empty()) continue;
    out << "\\" << k << "-grams " << counts.size() << "\n";
    for (const auto& [gram, n] : counts) {
      for (Label y : gram) out << y << ' ';
      out << n << "\n";
    }
  }
}

NGramLM load_lm(const std::filesystem::path& path) {
  detail::LineReader in(path.string());
  auto tok = in.expect("header");
  if (tok.size() != 2 || tok[0] != "sodm-lm") in.fail("not an LM file");
  if (tok[1] != "1") in.fail("unsupported LM version");
  tok = in.expect("order");
  in.require(tok, "order", 2);
  const int order = in.parse<int>(tok[1]);
  tok = in.expect("alphabet_size");
  in.require(tok, "alphabet_size", 2);
  const int alphabet_size = in.parse<int>(tok[1]);
  tok = in.expect("alpha");
  in.require(tok, "alpha", 2);
  const double alpha = in.parse<double>(tok[1]);
  if (order < 1 || alphabet_size < 1 || !(alpha >= 0)) in.fail("invalid LM header values");
  NGramLM lm(order, alphabet_size, alpha);

  while (in.next(tok)) {
    const std::string head(tok[0]);
    if (tok.size() != 2 || head.size() < 8 || head[0] != '\\' || head.substr(head.size() - 6) != "-grams") {
      in.fail("expected section header '\\k-grams n'");
    }
    const int k = in.parse<int>(std::string_view(head).substr(1, head.size() - 7));
    if (k < 1 || k > order) {
      in.fail("section order " + std::to_string(k) + " does not match header order " + std::to_string(order));
    }
    const auto n = in.parse<std::size_t>(tok[1]);
    for (std::size_t i = 0; i < n; ++i) {
      tok = in.expect("n-gram line");
      if (static_cast<int>(tok.size()) != k + 1) {
        in.fail("n-gram line has " + std::to_string(tok.size() - 1) + " labels, expected " +
                std::to_string(k));
      }
      NGram gram;
      for (int j = 0; j < k; ++j) {
        const Label y = in.parse<int>(tok[static_cast<std::size_t>(j)]);
        if (y < 0 || y >= alphabet_size) in.fail("label out of range");
        gram.push_back(y);
      }
      const auto c = in.parse<std::uint64_t>(tok.back());
      if (lm.count(gram) != 0) in.fail("duplicate n-gram");
      lm.add_count(gram, c);
    }
  }
  lm.finalize();
  return lm;
}

}  // namespace sodm
