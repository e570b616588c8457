// include/sodm/lm.hpp

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
#include <map>
#include <span>
#include <vector>

#include "sodm/corpus.hpp"

namespace sodm {

using NGram = std::vector<Label>;

/// Truncated joint N-gram table, highest probability first.
struct TopKTable {
  int order = 0;
  int alphabet_size = 0;
  std::vector<NGram> ngrams;
  std::vector<double> probs;
  bool renormalized = false;

  std::size_t size() const { return ngrams.size(); }
  bool empty() const { return ngrams.empty(); }
  double total_mass() const;
};

/// Order-N label language model estimated by counting within-utterance
/// windows. Counts of every order 1..N are kept so that conditional queries
/// with short histories (utterance starts) are answerable.
class NGramLM {
 public:
  NGramLM() = default;
  /// Empty model with no counts.
  NGramLM(int order, int alphabet_size, double alpha);

  int order() const { return order_; }
  int alphabet_size() const { return alphabet_size_; }
  double alpha() const { return alpha_; }
  bool empty() const { return counts_.empty() || counts_.back().empty(); }

  /// Raw count of a k-gram, 1 <= k <= order.
  std::uint64_t count(std::span<const Label> gram) const;
  /// Number of order-N windows.
  std::uint64_t total_windows() const;

  /// Maximum-likelihood joint probability of an order-N gram.
  double joint(std::span<const Label> gram) const;
  /// All observed order-N grams with their joint probabilities, lexicographic.
  std::vector<std::pair<NGram, double>> joint_table() const;

  /// Add-alpha conditional p(next | history); only the last N-1 history
  /// symbols are used. Shorter histories fall back to lower-order counts.
  double cond_prob(Label next, std::span<const Label> history) const;

  const std::map<NGram, std::uint64_t>& counts_of_order(int k) const;

  bool operator==(const NGramLM& other) const;

  // Used by training and loading.
  void add_count(const NGram& gram, std::uint64_t n);
  void finalize();

 private:
  int order_ = 0;
  int alphabet_size_ = 0;
  double alpha_ = 0.0;
  std::vector<std::map<NGram, std::uint64_t>> counts_;        // index k-1
  std::vector<std::map<NGram, std::uint64_t>> continuations_;  // context length k
};

/// Counts all k-gram windows (k <= order) inside each sequence. Throws
/// ConfigError when no sequence is long enough to hold an order-N window.
NGramLM train_lm(const std::vector<std::vector<Label>>& sequences, int order, int alphabet_size,
                 double alpha);

TopKTable topk(const NGramLM& lm, std::size_t k_top, bool renormalize);

void save_lm(const NGramLM& lm, const std::filesystem::path& path);
NGramLM load_lm(const std::filesystem::path& path);

}  // namespace sodm
