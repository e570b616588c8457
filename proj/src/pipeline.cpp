// src/pipeline.cpp

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

#include "sodm/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <openssl/evp.h>

#include "sodm/decode.hpp"
#include "sodm/error.hpp"
#include "text_io.hpp"

#ifndef SODM_VERSION
#define SODM_VERSION "unknown"
#endif

namespace sodm {

using nlohmann::json;

namespace {

// Reads the keys of one JSON object and rejects anything it was not asked for.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }

  const json* child(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string path(const std::string& key) const { return where_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown config key " + where_ + "." + it.key());
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

void read_supervised(const json& j, const std::string& where, SupervisedConfig& c) {
  ObjectReader r(j, where);
  r.get("window_size", c.window_size);
  r.get("hidden_dim", c.hidden_dim);
  r.get("max_epochs", c.max_epochs);
  r.get("batch_size_frames", c.batch_size_frames);
  r.get("learning_rate", c.learning_rate);
  r.get("momentum", c.momentum);
  r.get("heldout_fraction", c.heldout_fraction);
  r.get("patience", c.patience);
  r.finish();
}

json supervised_json(const SupervisedConfig& c) {
  return {{"window_size", c.window_size},         {"hidden_dim", c.hidden_dim},
          {"max_epochs", c.max_epochs},           {"batch_size_frames", c.batch_size_frames},
          {"learning_rate", c.learning_rate},     {"momentum", c.momentum},
          {"heldout_fraction", c.heldout_fraction}, {"patience", c.patience}};
}

std::string mode_name(ExperimentMode m) { return m == ExperimentMode::kMatchingLm ? "matching_lm" : "non_matching_lm"; }
std::string mode_name(BoundaryMode m) { return m == BoundaryMode::kGold ? "gold" : "estimated"; }

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void add_seg_metrics(std::map<std::string, double>& m, const std::string& prefix, const SegMetrics& s) {
  m[prefix + ".recall"] = s.recall;
  m[prefix + ".precision"] = s.precision;
  m[prefix + ".f_score"] = s.f_score;
  m[prefix + ".r_value"] = s.r_value;
}

std::vector<std::vector<Label>> gold_frame_rows(const Corpus& c) {
  std::vector<std::vector<Label>> rows;
  for (const auto& l : *c.gold_labels) rows.push_back(l.labels);
  return rows;
}

}  // namespace

void RunConfig::validate() const {
  synth.validate();
  if (!(train_fraction > 0 && train_fraction < 1)) throw ConfigError("train_fraction must lie in (0, 1)");
  if (lm.order < 1) throw ConfigError("lm.order must be >= 1");
  if (!(lm.alpha >= 0)) throw ConfigError("lm.alpha must be >= 0");
  if (lm.k_top < 1) throw ConfigError("lm.k_top must be >= 1");
  trainer.validate();
  if (trainer.loss.ngram_order != lm.order || trainer.loss.k_top != lm.k_top) {
    throw ConfigError("loss N-gram order and top-K must match the LM settings");
  }
  if (!(boundary.threshold > 0 && boundary.threshold < 1)) throw ConfigError("boundary.threshold must lie in (0, 1)");
  if (boundary.min_segment_len < 1) throw ConfigError("boundary.min_segment_len must be >= 1");
  if (boundary.detector_half_width < 1) throw ConfigError("boundary.detector_half_width must be >= 1");
  if (boundary.beam_width < 1) throw ConfigError("boundary.beam_width must be >= 1");
  if (boundary.tolerance < 0) throw ConfigError("boundary.tolerance must be >= 0");
  if (decode.beam_width < 1) throw ConfigError("decode.beam_width must be >= 1");
  if (!(decode.lm_weight >= 0)) throw ConfigError("decode.lm_weight must be >= 0");
  if (outer_iterations < 1) throw ConfigError("outer_iterations must be >= 1");
  if (selftrain.rounds < 0) throw ConfigError("selftrain.rounds must be >= 0");
  if (selftrain.rounds > 0) selftrain.supervised.validate();
  if (comparator.enabled) {
    comparator.supervised.validate();
    if (!(comparator.labeled_fraction > 0 && comparator.labeled_fraction <= 1)) {
      throw ConfigError("comparator.labeled_fraction must lie in (0, 1]");
    }
  }
}

RunConfig preset_config(const std::string& name) {
  RunConfig c;
  c.preset = name;
  if (name == "desk") {
    c.synth.emission_noise_std = 2.0;
    c.synth.coarticulation_blend_frames = 2;
    c.trainer.window_size = 5;
    c.trainer.hidden_dim = 64;
    c.trainer.schedule = Schedule::desk();
    c.trainer.loss.lambda = 1e-3;
    c.trainer.loss.fs_sample_size = 2000;
    SupervisedConfig s;
    s.window_size = 5;
    s.hidden_dim = 64;
    s.max_epochs = 30;
    c.selftrain.supervised = s;
    c.comparator.supervised = s;
  } else if (name == "large") {
    c.synth.alphabet_size = 40;
    c.synth.feature_dim = 39;
    c.synth.num_utterances = 3000;
    c.synth.mean_phones_per_utterance = 30;
    c.trainer.window_size = 11;
    c.trainer.hidden_dim = 512;
    c.trainer.schedule = Schedule::large();
    c.trainer.loss.lambda = 1e-5;
    c.trainer.loss.fs_sample_size = 10000;
  } else {
    throw ConfigError("unknown preset '" + name + "' (expected desk or large)");
  }
  c.trainer.loss.ngram_order = c.lm.order;
  c.trainer.loss.k_top = c.lm.k_top;
  return c;
}

RunConfig parse_run_config(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  std::string preset = "desk";
  if (auto it = j.find("preset"); it != j.end()) {
    if (!it->is_string()) throw ConfigError("preset must be a string");
    preset = it->get<std::string>();
  }
  RunConfig c = preset_config(preset);
  ObjectReader r(j, "config");
  r.child("preset");

  if (const json* s = r.child("synth")) {
    ObjectReader sr(*s, "synth");
    sr.get("alphabet_size", c.synth.alphabet_size);
    sr.get("feature_dim", c.synth.feature_dim);
    sr.get("num_utterances", c.synth.num_utterances);
    sr.get("mean_phones_per_utterance", c.synth.mean_phones_per_utterance);
    sr.get("mean_segment_length", c.synth.mean_segment_length);
    sr.get("min_segment_length", c.synth.min_segment_length);
    sr.get("emission_cluster_separation", c.synth.emission_cluster_separation);
    sr.get("emission_noise_std", c.synth.emission_noise_std);
    sr.get("transition_lm_order", c.synth.transition_lm_order);
    sr.get("coarticulation_blend_frames", c.synth.coarticulation_blend_frames);
    sr.get("random_seed", c.synth.random_seed);
    sr.finish();
  }
  if (const json* d = r.child("corpus_dir")) {
    if (!d->is_null()) {
      if (!d->is_string()) throw ConfigError("corpus_dir must be a string");
      c.corpus_dir = d->get<std::string>();
    }
  }
  r.get("train_fraction", c.train_fraction);
  r.get("split_seed", c.split_seed);
  if (const json* l = r.child("lm")) {
    ObjectReader lr(*l, "lm");
    lr.get("order", c.lm.order);
    lr.get("alpha", c.lm.alpha);
    lr.get("k_top", c.lm.k_top);
    lr.get("renormalize", c.lm.renormalize);
    lr.finish();
  }
  if (const json* t = r.child("trainer")) {
    ObjectReader tr(*t, "trainer");
    tr.get("window_size", c.trainer.window_size);
    tr.get("hidden_dim", c.trainer.hidden_dim);
    tr.get("lambda", c.trainer.loss.lambda);
    tr.get("fs_sample_size", c.trainer.loss.fs_sample_size);
    tr.get("seed", c.trainer.seed);
    tr.get("validation_seed", c.trainer.validation_seed);
    if (const json* s = tr.child("schedule")) {
      ObjectReader sr(*s, "trainer.schedule");
      sr.get("learning_rate", c.trainer.schedule.learning_rate);
      sr.get("momentum", c.trainer.schedule.momentum);
      sr.get("lr_decay", c.trainer.schedule.lr_decay);
      if (const json* st = sr.child("stages")) {
        if (!st->is_array()) throw ConfigError("trainer.schedule.stages must be an array");
        c.trainer.schedule.stages.clear();
        for (std::size_t k = 0; k < st->size(); ++k) {
          Stage stage;
          ObjectReader er((*st)[k], "trainer.schedule.stages[" + std::to_string(k) + "]");
          er.get("epochs", stage.epochs);
          er.get("batch_size_segments", stage.batch_size_segments);
          er.get("temperature", stage.temperature);
          er.finish();
          c.trainer.schedule.stages.push_back(stage);
        }
      }
      sr.finish();
    }
    tr.finish();
  }
  if (const json* b = r.child("boundary")) {
    ObjectReader br(*b, "boundary");
    std::string mode = mode_name(c.boundary.mode);
    br.get("mode", mode);
    if (mode == "gold") c.boundary.mode = BoundaryMode::kGold;
    else if (mode == "estimated") c.boundary.mode = BoundaryMode::kEstimated;
    else throw ConfigError("boundary.mode must be gold or estimated");
    br.get("threshold", c.boundary.threshold);
    br.get("min_segment_len", c.boundary.min_segment_len);
    br.get("detector_half_width", c.boundary.detector_half_width);
    br.get("beam_width", c.boundary.beam_width);
    br.get("tolerance", c.boundary.tolerance);
    br.finish();
  }
  if (const json* d = r.child("decode")) {
    ObjectReader dr(*d, "decode");
    dr.get("beam_width", c.decode.beam_width);
    dr.get("lm_weight", c.decode.lm_weight);
    dr.finish();
  }
  r.get("outer_iterations", c.outer_iterations);
  if (const json* s = r.child("selftrain")) {
    ObjectReader sr(*s, "selftrain");
    sr.get("rounds", c.selftrain.rounds);
    if (const json* sup = sr.child("supervised")) read_supervised(*sup, "selftrain.supervised", c.selftrain.supervised);
    sr.finish();
  }
  if (const json* s = r.child("comparator")) {
    ObjectReader cr(*s, "comparator");
    cr.get("enabled", c.comparator.enabled);
    cr.get("labeled_fraction", c.comparator.labeled_fraction);
    if (const json* sup = cr.child("supervised")) read_supervised(*sup, "comparator.supervised", c.comparator.supervised);
    cr.finish();
  }
  {
    std::string mode = mode_name(c.experiment);
    r.get("experiment", mode);
    if (mode == "matching_lm") c.experiment = ExperimentMode::kMatchingLm;
    else if (mode == "non_matching_lm") c.experiment = ExperimentMode::kNonMatchingLm;
    else throw ConfigError("experiment must be matching_lm or non_matching_lm");
  }
  if (const json* o = r.child("output_dir")) {
    if (!o->is_string()) throw ConfigError("output_dir must be a string");
    c.output_dir = o->get<std::string>();
  }
  r.finish();

  c.trainer.loss.ngram_order = c.lm.order;
  c.trainer.loss.k_top = c.lm.k_top;
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_run_config(j);
}

json to_json(const RunConfig& c) {
  json stages = json::array();
  for (const auto& s : c.trainer.schedule.stages) {
    stages.push_back({{"epochs", s.epochs}, {"batch_size_segments", s.batch_size_segments}, {"temperature", s.temperature}});
  }
  json j = {
      {"preset", c.preset},
      {"synth",
       {{"alphabet_size", c.synth.alphabet_size},
        {"feature_dim", c.synth.feature_dim},
        {"num_utterances", c.synth.num_utterances},
        {"mean_phones_per_utterance", c.synth.mean_phones_per_utterance},
        {"mean_segment_length", c.synth.mean_segment_length},
        {"min_segment_length", c.synth.min_segment_length},
        {"emission_cluster_separation", c.synth.emission_cluster_separation},
        {"emission_noise_std", c.synth.emission_noise_std},
        {"transition_lm_order", c.synth.transition_lm_order},
        {"coarticulation_blend_frames", c.synth.coarticulation_blend_frames},
        {"random_seed", c.synth.random_seed}}},
      {"corpus_dir", c.corpus_dir ? json(c.corpus_dir->string()) : json(nullptr)},
      {"train_fraction", c.train_fraction},
      {"split_seed", c.split_seed},
      {"lm", {{"order", c.lm.order}, {"alpha", c.lm.alpha}, {"k_top", c.lm.k_top}, {"renormalize", c.lm.renormalize}}},
      {"trainer",
       {{"window_size", c.trainer.window_size},
        {"hidden_dim", c.trainer.hidden_dim},
        {"lambda", c.trainer.loss.lambda},
        {"fs_sample_size", c.trainer.loss.fs_sample_size},
        {"seed", c.trainer.seed},
        {"validation_seed", c.trainer.validation_seed},
        {"schedule",
         {{"learning_rate", c.trainer.schedule.learning_rate},
          {"momentum", c.trainer.schedule.momentum},
          {"lr_decay", c.trainer.schedule.lr_decay},
          {"stages", stages}}}}},
      {"boundary",
       {{"mode", mode_name(c.boundary.mode)},
        {"threshold", c.boundary.threshold},
        {"min_segment_len", c.boundary.min_segment_len},
        {"detector_half_width", c.boundary.detector_half_width},
        {"beam_width", c.boundary.beam_width},
        {"tolerance", c.boundary.tolerance}}},
      {"decode", {{"beam_width", c.decode.beam_width}, {"lm_weight", c.decode.lm_weight}}},
      {"outer_iterations", c.outer_iterations},
      {"selftrain", {{"rounds", c.selftrain.rounds}, {"supervised", supervised_json(c.selftrain.supervised)}}},
      {"comparator",
       {{"enabled", c.comparator.enabled},
        {"labeled_fraction", c.comparator.labeled_fraction},
        {"supervised", supervised_json(c.comparator.supervised)}}},
      {"experiment", mode_name(c.experiment)},
      {"output_dir", c.output_dir.string()},
  };
  return j;
}

std::string content_hash(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  if (!fs::exists(path)) throw DataError("cannot hash missing path " + path.string());
  std::vector<fs::path> files;
  if (fs::is_directory(path)) {
    for (const auto& e : fs::recursive_directory_iterator(path)) {
      if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(path);
  }

  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw DataError("sha256 init failed");
  std::vector<char> buf(1 << 16);
  for (const auto& f : files) {
    if (fs::is_directory(path)) {
      const std::string rel = fs::relative(f, path).generic_string();
      EVP_DigestUpdate(ctx.get(), rel.data(), rel.size() + 1);
    }
    std::ifstream in(f, std::ios::binary);
    if (!in) throw DataError("cannot read " + f.string());
    while (in) {
      in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
      if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
    }
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_DigestFinal_ex(ctx.get(), md, &len) != 1) throw DataError("sha256 final failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int k = 0; k < len; ++k) {
    out += hex[md[k] >> 4];
    out += hex[md[k] & 15];
  }
  return out;
}

json RunManifest::to_json() const {
  json arts = json::object();
  for (const auto& [name, ph] : artifacts) arts[name] = {{"path", ph.first}, {"sha256", ph.second}};
  return {{"code_version", code_version}, {"started", started}, {"finished", finished},
          {"config", config},             {"artifacts", arts},  {"metrics", metrics}};
}

RunManifest RunManifest::from_json(const json& j) {
  RunManifest m;
  try {
    m.code_version = j.at("code_version").get<std::string>();
    m.started = j.at("started").get<std::string>();
    m.finished = j.at("finished").get<std::string>();
    m.config = j.at("config");
    for (const auto& [name, a] : j.at("artifacts").items()) {
      m.artifacts[name] = {a.at("path").get<std::string>(), a.at("sha256").get<std::string>()};
    }
    m.metrics = j.at("metrics").get<std::map<std::string, double>>();
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

void RunManifest::save(const std::filesystem::path& path) const {
  auto out = detail::open_for_write(path.string());
  out << to_json().dump(2) << "\n";
}

RunManifest RunManifest::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  try {
    return from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void RunManifest::verify(const std::filesystem::path& run_dir) const {
  for (const auto& [name, ph] : artifacts) {
    const auto p = run_dir / ph.first;
    if (!std::filesystem::exists(p)) throw DataError("artifact " + name + " missing at " + p.string());
    if (content_hash(p) != ph.second) throw DataError("artifact " + name + " hash mismatch");
  }
}

FrameScores classifier_frame_scores(const Classifier& classifier, int window_size, const Corpus& corpus) {
  if (!corpus.gold_labels) throw DataError("frame scores need gold labels");
  long long errors = 0, frames = 0, errors_star = 0, frames_star = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const Matrix post = frame_posteriors(classifier, corpus.utterances[i], window_size);
    const auto& gold = (*corpus.gold_labels)[i].labels;
    std::vector<Label> pred(gold.size());
    for (Eigen::Index t = 0; t < post.rows(); ++t) {
      Eigen::Index arg = 0;
      post.row(t).maxCoeff(&arg);
      pred[static_cast<std::size_t>(t)] = static_cast<Label>(arg);
    }
    const auto n = static_cast<long long>(gold.size());
    errors += std::llround(fer(pred, gold) * static_cast<double>(n));
    frames += n;
    std::size_t lo = 0, hi = gold.size();
    while (lo < hi && gold[lo] == kSilence) ++lo;
    while (hi > lo && gold[hi - 1] == kSilence) --hi;
    for (std::size_t t = lo; t < hi; ++t) errors_star += pred[t] != gold[t];
    frames_star += static_cast<long long>(hi - lo);
  }
  FrameScores s;
  s.fer = frames ? static_cast<double>(errors) / static_cast<double>(frames) : 0.0;
  s.fer_star = frames_star ? static_cast<double>(errors_star) / static_cast<double>(frames_star) : 0.0;
  return s;
}

RunManifest full_run(const RunConfig& config) {
  namespace fs = std::filesystem;
  config.validate();
  RunManifest manifest;
  manifest.started = utc_now();
  manifest.code_version = SODM_VERSION;
  manifest.config = to_json(config);
  const fs::path out = config.output_dir;
  fs::create_directories(out);
  auto artifact = [&](const std::string& name, const fs::path& rel) {
    manifest.artifacts[name] = {rel.generic_string(), content_hash(out / rel)};
  };
  auto& metrics = manifest.metrics;

  Corpus corpus;
  if (config.corpus_dir) {
    corpus = load_corpus(*config.corpus_dir);
  } else {
    corpus = generate_corpus(config.synth);
    save_corpus(corpus, out / "corpus");
    artifact("corpus", "corpus");
  }
  if (!corpus.gold_labels) throw DataError("evaluation needs a corpus with gold labels");
  auto [train_pool, eval_set] = split_corpus(corpus, config.train_fraction, config.split_seed);

  // The LM text either comes from the training utterances themselves or from
  // a disjoint half of the training pool whose features are then unused.
  Corpus train_set = train_pool;
  std::vector<std::vector<Label>> lm_text;
  if (config.experiment == ExperimentMode::kMatchingLm) {
    lm_text = train_set.gold_transcriptions();
  } else {
    auto [features_half, text_half] = split_corpus(train_pool, 0.5, config.split_seed + 1);
    train_set = std::move(features_half);
    lm_text = text_half.gold_transcriptions();
  }
  const int Y = corpus.alphabet_size();
  const NGramLM lm = train_lm(lm_text, config.lm.order, Y, config.lm.alpha);
  save_lm(lm, out / "lm.txt");
  artifact("lm", "lm.txt");
  const TopKTable table = topk(lm, config.lm.k_top, config.lm.renormalize);
  metrics["lm.topk_mass"] = std::accumulate(table.probs.begin(), table.probs.end(), 0.0);

  DetectorConfig det;
  det.half_width = config.boundary.detector_half_width;
  std::vector<BoundaryPriorSignal> prior_train, prior_eval;
  for (const auto& u : train_set.utterances) prior_train.push_back(boundary_prior(u, det));
  for (const auto& u : eval_set.utterances) prior_eval.push_back(boundary_prior(u, det));

  std::vector<Segmentation> init_train, init_eval;
  if (config.boundary.mode == BoundaryMode::kGold) {
    if (!train_set.gold_segmentation || !eval_set.gold_segmentation) throw DataError("gold boundary mode needs gold boundaries");
    init_train = *train_set.gold_segmentation;
    init_eval = *eval_set.gold_segmentation;
  } else {
    for (const auto& p : prior_train) {
      init_train.push_back(initial_boundaries(p, config.boundary.threshold, config.boundary.min_segment_len));
    }
    for (const auto& p : prior_eval) {
      init_eval.push_back(initial_boundaries(p, config.boundary.threshold, config.boundary.min_segment_len));
    }
  }
  save_segmentations(out / "init.train.seg", train_set.utterances, init_train);
  artifact("init_train_segmentation", "init.train.seg");
  const int tol = config.boundary.tolerance;
  if (train_set.gold_segmentation) {
    add_seg_metrics(metrics, "init.seg", eval_segmentation(init_train, *train_set.gold_segmentation, tol));
  }

  AlternateConfig ac;
  ac.trainer = config.trainer;
  // Gold boundaries are kept fixed, so there is nothing to alternate.
  ac.outer_iterations = config.boundary.mode == BoundaryMode::kGold ? 1 : config.outer_iterations;
  ac.beam_width = config.boundary.beam_width;
  ac.output_dir = out;
  const int w = config.trainer.window_size;
  const Diagnostic diag = [&](const Classifier& c) { return classifier_frame_scores(c, w, eval_set).fer; };
  const AlternateResult alt =
      alternate(train_set.utterances, eval_set.utterances, lm, table, {prior_train, prior_eval}, init_train, init_eval, ac, diag);
  for (const auto& it : alt.iterations) {
    const std::string p = "iter" + std::to_string(it.iteration + 1);
    const FrameScores fs_ = classifier_frame_scores(it.classifier, w, eval_set);
    metrics[p + ".fer"] = fs_.fer;
    metrics[p + ".fer_star"] = fs_.fer_star;
    metrics[p + ".best_epoch"] = it.train.best_epoch;
    metrics[p + ".self_validation"] = it.train.epochs[static_cast<std::size_t>(it.train.best_epoch)].self_validation;
    if (train_set.gold_segmentation) {
      add_seg_metrics(metrics, p + ".seg", eval_segmentation(it.train_segmentations, *train_set.gold_segmentation, tol));
    }
    for (const char* kind : {".ckpt", ".report", ".train.seg", ".heldout.seg"}) artifact(p + kind, p + kind);
  }

  Classifier final_classifier = alt.classifier;
  int final_window = w;
  Vector frame_prior = alt.iterations.back().frame_prior;
  for (int round = 0; round < config.selftrain.rounds; ++round) {
    const PseudoLabeledCorpus pseudo = pseudo_label(final_classifier, final_window, lm, frame_prior, prior_train,
                                                    train_set.utterances, config.boundary.beam_width);
    final_classifier = retrain_on_pseudo_labels(pseudo, Y, config.selftrain.supervised,
                                                config.trainer.seed + 100 + static_cast<std::uint64_t>(round));
    final_window = config.selftrain.supervised.window_size;
    frame_prior = estimate_frame_prior(final_classifier, final_window, train_set.utterances);
    const std::string p = "selftrain" + std::to_string(round + 1);
    const FrameScores s = classifier_frame_scores(final_classifier, final_window, eval_set);
    metrics[p + ".fer"] = s.fer;
    metrics[p + ".fer_star"] = s.fer_star;
    save_checkpoint(final_classifier, {-1, round}, out / (p + ".ckpt"));
    artifact(p + ".ckpt", p + ".ckpt");
  }
  save_checkpoint(final_classifier, {-1, -1}, out / "final.ckpt");
  artifact("final.ckpt", "final.ckpt");
  const FrameScores final_scores = classifier_frame_scores(final_classifier, final_window, eval_set);
  metrics["final.fer"] = final_scores.fer;
  metrics["final.fer_star"] = final_scores.fer_star;

  std::vector<std::vector<Label>> pred_frames, pred_phonemes;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < eval_set.size(); ++i) {
    Decoded d = decode_utterance(final_classifier, final_window, lm, frame_prior, prior_eval[i], eval_set.utterances[i],
                                 config.decode.beam_width, config.decode.lm_weight);
    pred_frames.push_back(std::move(d.frame_labels));
    pred_phonemes.push_back(std::move(d.phonemes));
    ids.push_back(eval_set.utterances[i].utterance_id);
  }
  save_rows(out / "decode.frames", ids, pred_frames);
  save_rows(out / "decode.phonemes", ids, pred_phonemes);
  artifact("decode.frames", "decode.frames");
  artifact("decode.phonemes", "decode.phonemes");
  const EvalReport report =
      evaluate(pred_frames, gold_frame_rows(eval_set), pred_phonemes, eval_set.gold_transcriptions(), Y, ids);
  {
    auto o = detail::open_for_write((out / "eval.txt").string());
    o << report.text();
  }
  artifact("eval.txt", "eval.txt");
  metrics["decode.fer"] = report.fer;
  metrics["decode.fer_star"] = report.fer_star;
  metrics["decode.per"] = report.per;

  if (config.comparator.enabled) {
    // Gold labels of a leading fraction of the (shuffled) training pool.
    std::vector<std::size_t> order(train_pool.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(config.split_seed + 2);
    std::shuffle(order.begin(), order.end(), rng);
    const auto n = static_cast<std::size_t>(
        std::max(2.0, std::ceil(config.comparator.labeled_fraction * static_cast<double>(order.size()))));
    order.resize(std::min(n, order.size()));
    std::sort(order.begin(), order.end());
    PseudoLabeledCorpus gold;
    for (std::size_t k : order) {
      gold.features.push_back(train_pool.utterances[k]);
      gold.labels.push_back((*train_pool.gold_labels)[k]);
    }
    const Classifier sup = retrain_on_pseudo_labels(gold, Y, config.comparator.supervised, config.trainer.seed + 200);
    save_checkpoint(sup, {-1, -1}, out / "supervised.ckpt");
    artifact("supervised.ckpt", "supervised.ckpt");
    const FrameScores s = classifier_frame_scores(sup, config.comparator.supervised.window_size, eval_set);
    metrics["supervised.fer"] = s.fer;
    metrics["supervised.fer_star"] = s.fer_star;
    metrics["supervised.labeled_utterances"] = static_cast<double>(order.size());
  }

  manifest.finished = utc_now();
  manifest.save(out / "manifest.json");
  return manifest;
}

void set_json_path(json& j, const std::string& dotted, const json& value) {
  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = dotted.find('.', start);
    const std::string key = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("bad key path '" + dotted + "'");
    if (!node->is_object()) *node = json::object();
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

std::vector<SweepRow> sweep(const json& base_config, const std::map<std::string, std::vector<json>>& grid,
                            const std::filesystem::path& output_dir) {
  for (const auto& [key, values] : grid) {
    if (values.empty()) throw ConfigError("sweep axis " + key + " has no values");
  }
  std::vector<std::pair<std::string, std::vector<json>>> axes(grid.begin(), grid.end());
  std::vector<std::size_t> idx(axes.size(), 0);
  std::vector<SweepRow> rows;
  int point = 0;
  while (true) {
    json cfg = base_config;
    SweepRow row;
    for (std::size_t a = 0; a < axes.size(); ++a) {
      set_json_path(cfg, axes[a].first, axes[a].second[idx[a]]);
      row.point[axes[a].first] = axes[a].second[idx[a]];
    }
    cfg["output_dir"] = (output_dir / ("point" + std::to_string(point++))).string();
    row.manifest = full_run(parse_run_config(cfg));
    rows.push_back(std::move(row));

    std::size_t a = 0;
    for (; a < axes.size(); ++a) {
      if (++idx[a] < axes[a].second.size()) break;
      idx[a] = 0;
    }
    if (a == axes.size()) break;
  }
  auto o = detail::open_for_write((output_dir / "results.tsv").string());
  o << format_sweep_table(rows);
  return rows;
}

std::string format_sweep_table(const std::vector<SweepRow>& rows) {
  if (rows.empty()) return "";
  std::set<std::string> metric_names;
  for (const auto& r : rows) {
    for (const auto& [k, v] : r.manifest.metrics) metric_names.insert(k);
  }
  std::ostringstream os;
  bool first = true;
  for (const auto& [k, v] : rows.front().point) {
    os << (first ? "" : "\t") << k;
    first = false;
  }
  for (const auto& m : metric_names) {
    os << (first ? "" : "\t") << m;
    first = false;
  }
  os << "\n";
  for (const auto& r : rows) {
    first = true;
    for (const auto& [k, v] : r.point) {
      os << (first ? "" : "\t") << v.dump();
      first = false;
    }
    for (const auto& m : metric_names) {
      auto it = r.manifest.metrics.find(m);
      os << (first ? "" : "\t") << (it == r.manifest.metrics.end() ? "nan" : detail::format_double(it->second));
      first = false;
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace sodm
