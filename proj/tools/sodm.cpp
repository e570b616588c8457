// tools/sodm.cpp

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

// Command-line front end: data generation, LM training, classifier training,
// boundary refinement, decoding, evaluation, self-training and whole runs.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "sodm/decode.hpp"
#include "sodm/error.hpp"
#include "sodm/pipeline.hpp"

namespace fs = std::filesystem;
using namespace sodm;

namespace {

RunConfig config_or_preset(const std::string& path) {
  return path.empty() ? parse_run_config(nlohmann::json::object()) : load_run_config(path);
}

// The window size is implied by the checkpoint input width.
int window_of(const Classifier& c, const Corpus& corpus) {
  const int d = c.dims().input_dim;
  if (corpus.feature_dim < 1 || d % corpus.feature_dim != 0) {
    throw ShapeError("checkpoint input width does not fit the corpus feature dimension");
  }
  return d / corpus.feature_dim;
}

std::vector<BoundaryPriorSignal> priors_of(const Corpus& c, int half_width) {
  DetectorConfig det;
  det.half_width = half_width;
  std::vector<BoundaryPriorSignal> out;
  for (const auto& u : c.utterances) out.push_back(boundary_prior(u, det));
  return out;
}

std::vector<Segmentation> boundaries_for(const std::string& how, const Corpus& c,
                                         std::span<const BoundaryPriorSignal> priors, const BoundaryConfig& b) {
  if (how == "gold") {
    if (!c.gold_segmentation) throw DataError("corpus has no gold boundaries");
    return *c.gold_segmentation;
  }
  if (how == "estimated") {
    std::vector<Segmentation> out;
    for (const auto& p : priors) out.push_back(initial_boundaries(p, b.threshold, b.min_segment_len));
    return out;
  }
  return load_segmentations(how, c.utterances);
}

std::vector<std::string> ids_of(const Corpus& c) {
  std::vector<std::string> ids;
  for (const auto& u : c.utterances) ids.push_back(u.utterance_id);
  return ids;
}

// Rows aligned to the corpus order by utterance id.
std::vector<std::vector<Label>> aligned_rows(const fs::path& path, const Corpus& c) {
  std::map<std::string, std::vector<int>> by_id;
  for (auto& [id, row] : load_rows(path)) by_id[id] = std::move(row);
  std::vector<std::vector<Label>> out;
  for (const auto& u : c.utterances) {
    auto it = by_id.find(u.utterance_id);
    if (it == by_id.end()) throw DataError(path.string() + ": no row for utterance " + u.utterance_id);
    out.push_back(it->second);
  }
  return out;
}

void print_metrics(const std::map<std::string, double>& m) {
  for (const auto& [k, v] : m) std::printf("%s %.6g\n", k.c_str(), v);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Segmental empirical-ODM unsupervised sequence recognition"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "Run config JSON (defaults to the desk preset)")->check(CLI::ExistingFile);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic corpus and its train/heldout split");
  std::string gen_out;
  std::optional<std::uint64_t> gen_seed;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--seed", gen_seed, "Override the generator seed");

  // train-lm
  auto* tlm = app.add_subcommand("train-lm", "Count an N-gram LM from a corpus's gold transcriptions");
  std::string tlm_corpus, tlm_out;
  int tlm_order = 2;
  double tlm_alpha = 0.01;
  std::optional<std::size_t> tlm_topk;
  tlm->add_option("--corpus", tlm_corpus, "Corpus directory")->required();
  tlm->add_option("--out", tlm_out, "LM file")->required();
  tlm->add_option("--order", tlm_order, "N-gram order")->check(CLI::PositiveNumber);
  tlm->add_option("--alpha", tlm_alpha, "Additive smoothing")->check(CLI::NonNegativeNumber);
  tlm->add_option("--topk", tlm_topk, "Also write the top-K N-gram table to <out>.topk");

  // train
  auto* trn = app.add_subcommand("train", "Train the classifier (optionally alternating with refinement)");
  std::string trn_train, trn_heldout, trn_lm, trn_out, trn_bounds = "estimated";
  std::optional<int> trn_iters;
  std::string trn_init;
  trn->add_option("--train", trn_train, "Training corpus directory")->required();
  trn->add_option("--heldout", trn_heldout, "Held-out corpus directory (self-validation)")->required();
  trn->add_option("--lm", trn_lm, "LM file")->required();
  trn->add_option("--out", trn_out, "Output directory")->required();
  trn->add_option("--boundaries", trn_bounds, "gold, estimated, or a segmentation file for the training corpus");
  trn->add_option("--iterations", trn_iters, "Outer training/refinement iterations")->check(CLI::PositiveNumber);
  trn->add_option("--init", trn_init, "Start from this checkpoint instead of a fresh initialisation");

  // refine
  auto* ref = app.add_subcommand("refine", "MAP boundary refinement with a trained classifier");
  std::string ref_corpus, ref_lm, ref_ckpt, ref_out;
  std::optional<int> ref_beam, ref_tol;
  ref->add_option("--corpus", ref_corpus, "Corpus directory")->required();
  ref->add_option("--lm", ref_lm, "LM file")->required();
  ref->add_option("--checkpoint", ref_ckpt, "Classifier checkpoint")->required();
  ref->add_option("--out", ref_out, "Segmentation file (labels go to <out>.labels)")->required();
  ref->add_option("--beam", ref_beam, "Beam width")->check(CLI::PositiveNumber);
  ref->add_option("--tolerance", ref_tol, "Boundary tolerance in frames for the report")->check(CLI::NonNegativeNumber);

  // decode
  auto* dec = app.add_subcommand("decode", "Decode frame labels and phoneme sequences");
  std::string dec_corpus, dec_lm, dec_ckpt, dec_out;
  std::optional<int> dec_beam;
  std::optional<double> dec_lmw;
  dec->add_option("--corpus", dec_corpus, "Corpus directory")->required();
  dec->add_option("--lm", dec_lm, "LM file")->required();
  dec->add_option("--checkpoint", dec_ckpt, "Classifier checkpoint")->required();
  dec->add_option("--out", dec_out, "Output prefix (<out>.frames, <out>.phonemes)")->required();
  dec->add_option("--beam", dec_beam, "Beam width")->check(CLI::PositiveNumber);
  dec->add_option("--lm-weight", dec_lmw, "LM score weight")->check(CLI::NonNegativeNumber);

  // eval
  auto* evl = app.add_subcommand("eval", "Score decoded output against gold labels");
  std::string evl_corpus, evl_frames, evl_phonemes, evl_out;
  evl->add_option("--corpus", evl_corpus, "Corpus directory with gold labels")->required();
  evl->add_option("--frames", evl_frames, "Predicted frame label rows")->required();
  evl->add_option("--phonemes", evl_phonemes, "Predicted phoneme rows")->required();
  evl->add_option("--out", evl_out, "Write the full report here");

  // selftrain
  auto* slf = app.add_subcommand("selftrain", "Retrain on the system's own MAP labels");
  std::string slf_corpus, slf_lm, slf_ckpt, slf_out;
  int slf_rounds = 1;
  slf->add_option("--corpus", slf_corpus, "Corpus directory")->required();
  slf->add_option("--lm", slf_lm, "LM file")->required();
  slf->add_option("--checkpoint", slf_ckpt, "Starting classifier checkpoint")->required();
  slf->add_option("--out", slf_out, "Output checkpoint")->required();
  slf->add_option("--rounds", slf_rounds, "Self-training rounds")->check(CLI::PositiveNumber);

  // full-run
  auto* run = app.add_subcommand("full-run", "Generate, train, refine, decode and evaluate in one go");
  std::string run_out;
  run->add_option("--out", run_out, "Override the output directory");

  // sweep
  auto* swp = app.add_subcommand("sweep", "Full runs over a grid of config values");
  std::string swp_grid, swp_out;
  swp->add_option("--grid", swp_grid, "JSON object: dotted key -> list of values")->required()->check(CLI::ExistingFile);
  swp->add_option("--out", swp_out, "Output directory")->required();

  // verify
  auto* ver = app.add_subcommand("verify", "Check a run manifest's artifact hashes");
  std::string ver_manifest;
  ver->add_option("--manifest", ver_manifest, "manifest.json")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    RunConfig cfg = config_or_preset(config_path);

    if (*gen) {
      if (gen_seed) cfg.synth.random_seed = *gen_seed;
      const Corpus corpus = generate_corpus(cfg.synth);
      auto [train, heldout] = split_corpus(corpus, cfg.train_fraction, cfg.split_seed);
      save_corpus(corpus, fs::path(gen_out) / "full");
      save_corpus(train, fs::path(gen_out) / "train");
      save_corpus(heldout, fs::path(gen_out) / "heldout");
      std::printf("utterances %zu train %zu heldout %zu frames %zu\n", corpus.size(), train.size(), heldout.size(),
                  corpus.total_frames());
    } else if (*tlm) {
      const Corpus corpus = load_corpus(tlm_corpus);
      if (!corpus.gold_labels) throw DataError("LM training needs transcriptions");
      const NGramLM lm = train_lm(corpus.gold_transcriptions(), tlm_order, corpus.alphabet_size(), tlm_alpha);
      save_lm(lm, tlm_out);
      if (tlm_topk) {
        const TopKTable table = topk(lm, *tlm_topk, false);
        std::ofstream o(tlm_out + ".topk");
        double mass = 0.0;
        for (std::size_t k = 0; k < table.ngrams.size(); ++k) {
          for (Label z : table.ngrams[k]) o << z << ' ';
          o << table.probs[k] << "\n";
          mass += table.probs[k];
        }
        if (!o) throw DataError("cannot write " + tlm_out + ".topk");
        std::printf("topk %zu mass %.6f\n", table.ngrams.size(), mass);
      }
      std::printf("windows %lld\n", static_cast<long long>(lm.total_windows()));
    } else if (*trn) {
      const Corpus train = load_corpus(trn_train);
      const Corpus heldout = load_corpus(trn_heldout);
      const NGramLM lm = load_lm(trn_lm);
      cfg.trainer.loss.ngram_order = lm.order();
      const TopKTable table = topk(lm, cfg.lm.k_top, cfg.lm.renormalize);
      const auto ptr = priors_of(train, cfg.boundary.detector_half_width);
      const auto pho = priors_of(heldout, cfg.boundary.detector_half_width);
      auto str = boundaries_for(trn_bounds, train, ptr, cfg.boundary);
      // A segmentation file only covers the training corpus; held-out data
      // falls back to detector boundaries.
      const bool file = trn_bounds != "gold" && trn_bounds != "estimated";
      auto sho = boundaries_for(file ? "estimated" : trn_bounds, heldout, pho, cfg.boundary);
      AlternateConfig ac;
      ac.trainer = cfg.trainer;
      ac.outer_iterations = trn_iters.value_or(1);
      ac.beam_width = cfg.boundary.beam_width;
      ac.output_dir = trn_out;
      std::optional<Classifier> init;
      if (!trn_init.empty()) init = load_checkpoint(trn_init).first;
      const AlternateResult res = alternate(train.utterances, heldout.utterances, lm, table, {ptr, pho}, std::move(str),
                                            std::move(sho), ac, {}, init);
      save_checkpoint(res.classifier, {res.iterations.back().train.best_epoch, -1}, fs::path(trn_out) / "final.ckpt");
      for (const auto& it : res.iterations) {
        const auto& best = it.train.epochs[static_cast<std::size_t>(it.train.best_epoch)];
        std::printf("iteration %d best_epoch %d self_validation %.6f\n", it.iteration + 1, it.train.best_epoch,
                    best.self_validation);
      }
    } else if (*ref) {
      const Corpus corpus = load_corpus(ref_corpus);
      const NGramLM lm = load_lm(ref_lm);
      const Classifier c = load_checkpoint(ref_ckpt).first;
      const int w = window_of(c, corpus);
      const Vector prior = estimate_frame_prior(c, w, corpus.utterances);
      const auto priors = priors_of(corpus, cfg.boundary.detector_half_width);
      std::vector<Segmentation> segs;
      std::vector<std::vector<int>> labels;
      double score = 0.0;
      for (std::size_t i = 0; i < corpus.size(); ++i) {
        Refinement r = refine_boundaries(c, w, lm, prior, priors[i], corpus.utterances[i],
                                         ref_beam.value_or(cfg.boundary.beam_width));
        score += r.score;
        segs.push_back(std::move(r.segmentation));
        labels.push_back(std::move(r.labels.labels));
      }
      save_segmentations(ref_out, corpus.utterances, segs);
      save_rows(ref_out + ".labels", ids_of(corpus), labels);
      std::printf("score %.17g\n", score);
      if (corpus.gold_segmentation) {
        const SegMetrics m =
            eval_segmentation(segs, *corpus.gold_segmentation, ref_tol.value_or(cfg.boundary.tolerance));
        std::printf("recall %.6f\nprecision %.6f\nf_score %.6f\nr_value %.6f\n", m.recall, m.precision, m.f_score,
                    m.r_value);
      }
    } else if (*dec) {
      const Corpus corpus = load_corpus(dec_corpus);
      const NGramLM lm = load_lm(dec_lm);
      const Classifier c = load_checkpoint(dec_ckpt).first;
      const int w = window_of(c, corpus);
      const Vector prior = estimate_frame_prior(c, w, corpus.utterances);
      const auto priors = priors_of(corpus, cfg.boundary.detector_half_width);
      std::vector<std::vector<int>> frames, phonemes;
      for (std::size_t i = 0; i < corpus.size(); ++i) {
        Decoded d = decode_utterance(c, w, lm, prior, priors[i], corpus.utterances[i],
                                     dec_beam.value_or(cfg.decode.beam_width), dec_lmw.value_or(cfg.decode.lm_weight));
        frames.push_back(std::move(d.frame_labels));
        phonemes.push_back(std::move(d.phonemes));
      }
      save_rows(dec_out + ".frames", ids_of(corpus), frames);
      save_rows(dec_out + ".phonemes", ids_of(corpus), phonemes);
    } else if (*evl) {
      const Corpus corpus = load_corpus(evl_corpus);
      if (!corpus.gold_labels) throw DataError("evaluation needs gold labels");
      std::vector<std::vector<Label>> gold;
      for (const auto& l : *corpus.gold_labels) gold.push_back(l.labels);
      const auto ids = ids_of(corpus);
      const EvalReport rep = evaluate(aligned_rows(evl_frames, corpus), gold, aligned_rows(evl_phonemes, corpus),
                                      corpus.gold_transcriptions(), corpus.alphabet_size(), ids);
      std::cout << rep.summary();
      if (!evl_out.empty()) {
        std::ofstream o(evl_out);
        o << rep.text();
        if (!o) throw DataError("cannot write " + evl_out);
      }
    } else if (*slf) {
      const Corpus corpus = load_corpus(slf_corpus);
      const NGramLM lm = load_lm(slf_lm);
      Classifier c = load_checkpoint(slf_ckpt).first;
      const auto priors = priors_of(corpus, cfg.boundary.detector_half_width);
      for (int round = 0; round < slf_rounds; ++round) {
        const int w = window_of(c, corpus);
        const Vector prior = estimate_frame_prior(c, w, corpus.utterances);
        const PseudoLabeledCorpus pseudo = pseudo_label(c, w, lm, prior, priors, corpus.utterances, cfg.boundary.beam_width);
        SupervisedReport rep;
        c = retrain_on_pseudo_labels(pseudo, corpus.alphabet_size(), cfg.selftrain.supervised,
                                     cfg.trainer.seed + 100 + static_cast<std::uint64_t>(round), &rep);
        std::printf("round %d best_epoch %d heldout_xent %.6f\n", round + 1, rep.best_epoch,
                    rep.heldout_loss[static_cast<std::size_t>(rep.best_epoch)]);
      }
      save_checkpoint(c, {-1, slf_rounds}, slf_out);
    } else if (*run) {
      if (!run_out.empty()) cfg.output_dir = run_out;
      const RunManifest m = full_run(cfg);
      print_metrics(m.metrics);
    } else if (*swp) {
      std::ifstream in(swp_grid);
      const nlohmann::json g = nlohmann::json::parse(in);
      if (!g.is_object()) throw ConfigError("grid must be a JSON object");
      std::map<std::string, std::vector<nlohmann::json>> grid;
      for (const auto& [k, v] : g.items()) {
        if (!v.is_array()) throw ConfigError("grid axis " + k + " must be a list");
        grid[k] = v.get<std::vector<nlohmann::json>>();
      }
      const auto rows = sweep(to_json(cfg), grid, swp_out);
      std::cout << format_sweep_table(rows);
    } else if (*ver) {
      const RunManifest m = RunManifest::load(ver_manifest);
      m.verify(fs::path(ver_manifest).parent_path());
      std::printf("ok %zu artifacts\n", m.artifacts.size());
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const ShapeError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
