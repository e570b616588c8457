// tests/test_pipeline.cpp

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

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "sodm/error.hpp"
#include "sodm/pipeline.hpp"

using namespace sodm;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("sodm_test_pipeline_" + name);
  fs::remove_all(p);
  return p;
}

// A few seconds end to end.
json quick_config(const fs::path& out) {
  return {{"synth", {{"num_utterances", 40}, {"mean_phones_per_utterance", 5}}},
          {"trainer",
           {{"hidden_dim", 16},
            {"schedule",
             {{"stages", {{{"epochs", 3}, {"batch_size_segments", 100}, {"temperature", 1.0}},
                          {{"epochs", 2}, {"batch_size_segments", 200}, {"temperature", 0.9}}}}}}}},
          {"selftrain", {{"rounds", 0}}},
          {"output_dir", out.string()}};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(SODM_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("config defaults, round trip and unknown keys") {
  const RunConfig desk = parse_run_config(json::object());
  CHECK(desk.preset == "desk");
  CHECK(desk.trainer.hidden_dim == 64);
  const RunConfig large = parse_run_config({{"preset", "large"}});
  CHECK(large.trainer.hidden_dim == 512);
  CHECK(large.trainer.window_size == 11);
  CHECK(large.trainer.schedule.total_epochs() == 1100);
  CHECK(large.trainer.loss.lambda == 1e-5);

  RunConfig c = parse_run_config(quick_config("x"));
  c.experiment = ExperimentMode::kNonMatchingLm;
  c.boundary.mode = BoundaryMode::kGold;
  const json j = to_json(c);
  CHECK(to_json(parse_run_config(j)) == j);

  CHECK_THROWS_AS(parse_run_config({{"bogus", 1}}), ConfigError);
  CHECK_THROWS_AS(parse_run_config({{"trainer", {{"lamda", 0.1}}}}), ConfigError);
  CHECK_THROWS_AS(parse_run_config({{"trainer", {{"lambda", "big"}}}}), ConfigError);
  CHECK_THROWS_AS(parse_run_config({{"trainer", {{"window_size", 4}}}}), ConfigError);
  CHECK_THROWS_AS(parse_run_config({{"preset", "huge"}}), ConfigError);
  CHECK_THROWS_AS(parse_run_config({{"experiment", "sometimes"}}), ConfigError);
  CHECK_THROWS_AS(parse_run_config({{"boundary", {{"threshold", 1.5}}}}), ConfigError);
}

TEST_CASE("dotted key paths") {
  json j = json::object();
  set_json_path(j, "trainer.lambda", 0.5);
  set_json_path(j, "seed", 3);
  CHECK(j["trainer"]["lambda"] == 0.5);
  CHECK(j["seed"] == 3);
  CHECK_THROWS_AS(set_json_path(j, "a..b", 1), ConfigError);
}

TEST_CASE("content hashes") {
  const fs::path d = scratch("hash");
  fs::create_directories(d / "sub");
  std::ofstream(d / "a.txt") << "hello";
  std::ofstream(d / "sub" / "b.txt") << "world";
  // Known SHA-256 of "hello".
  CHECK(content_hash(d / "a.txt") == "2cf24dba5fb0a30e26e83b2ac5b9e29e1b161e5c1fa7425e73043362938b9824");
  const std::string before = content_hash(d);
  std::ofstream(d / "sub" / "b.txt") << "world!";
  CHECK(content_hash(d) != before);
  CHECK_THROWS_AS(content_hash(d / "missing"), DataError);
}

TEST_CASE("gold-boundary run emits frame and phone error rates") {
  json j = quick_config(scratch("gold"));
  j["boundary"] = {{"mode", "gold"}};
  const RunManifest m = full_run(parse_run_config(j));
  for (const char* k : {"iter1.fer", "iter1.fer_star", "decode.fer", "decode.per", "final.fer"}) {
    REQUIRE(m.metrics.count(k));
    CHECK(m.metrics.at(k) >= 0.0);
  }
  CHECK(m.metrics.count("iter2.fer") == 0);
}

TEST_CASE("estimated-boundary run: per-iteration segmentation metrics, determinism, manifest") {
  const fs::path out = scratch("est");
  const RunManifest a = full_run(parse_run_config(quick_config(out)));
  for (const char* k : {"init.seg.f_score", "iter1.seg.f_score", "iter2.seg.f_score", "iter2.seg.r_value",
                        "iter1.fer", "iter2.fer"}) {
    CHECK(a.metrics.count(k) == 1);
  }
  for (const char* k : {"corpus", "lm", "iter1.ckpt", "iter2.train.seg", "final.ckpt", "decode.phonemes"}) {
    CHECK(a.artifacts.count(k) == 1);
  }
  const RunManifest loaded = RunManifest::load(out / "manifest.json");
  CHECK(loaded.metrics == a.metrics);
  CHECK(loaded.config == a.config);
  CHECK_NOTHROW(loaded.verify(out));

  const RunManifest b = full_run(parse_run_config(quick_config(scratch("est2"))));
  CHECK(b.metrics == a.metrics);

  std::ofstream(out / "lm.txt", std::ios::app) << "\n";
  CHECK_THROWS_AS(loaded.verify(out), DataError);
  fs::remove(out / "final.ckpt");
  CHECK_THROWS_AS(loaded.verify(out), DataError);
}

TEST_CASE("non-matching LM and comparator run") {
  json j = quick_config(scratch("nonmatch"));
  j["experiment"] = "non_matching_lm";
  j["comparator"] = {{"enabled", true}, {"labeled_fraction", 0.5}, {"supervised", {{"max_epochs", 3}, {"hidden_dim", 16}}}};
  const RunManifest m = full_run(parse_run_config(j));
  CHECK(m.metrics.count("supervised.fer") == 1);
  CHECK(m.metrics.at("supervised.labeled_utterances") == 16);
}

TEST_CASE("sweep over a grid") {
  const fs::path out = scratch("sweep");
  json base = quick_config(out);
  base["outer_iterations"] = 1;
  const auto rows = sweep(base, {{"trainer.lambda", {0.0, 1e-3}}}, out);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].point.at("trainer.lambda") == 0.0);
  const std::string table = read_file(out / "results.tsv");
  CHECK(std::count(table.begin(), table.end(), '\n') == 3);

  // A one-point grid is the plain run.
  const fs::path single = scratch("sweep1");
  const auto one = sweep(base, {{"trainer.lambda", {1e-3}}}, single);
  json direct = base;
  direct["trainer"]["lambda"] = 1e-3;
  direct["output_dir"] = scratch("sweep1_direct").string();
  CHECK(one.at(0).manifest.metrics == full_run(parse_run_config(direct)).metrics);
  CHECK(one.at(0).manifest.metrics == rows[1].manifest.metrics);
}

TEST_CASE("command line stages and exit codes") {
  const fs::path dir = scratch("cli");
  fs::create_directories(dir);
  json cfg = quick_config(dir / "run");
  std::ofstream(dir / "cfg.json") << cfg.dump();
  const std::string c = "--config " + (dir / "cfg.json").string() + " ";
  const std::string d = dir.string();

  REQUIRE(run_cli(c + "gen-data --out " + d + "/data") == 0);
  REQUIRE(run_cli("train-lm --corpus " + d + "/data/train --out " + d + "/lm.txt --order 2 --alpha 0.01 --topk 50") == 0);
  CHECK(fs::exists(dir / "lm.txt.topk"));
  REQUIRE(run_cli(c + "train --train " + d + "/data/train --heldout " + d + "/data/heldout --lm " + d +
                  "/lm.txt --out " + d + "/model") == 0);
  CHECK(fs::exists(dir / "model" / "final.ckpt"));
  REQUIRE(run_cli(c + "refine --corpus " + d + "/data/heldout --lm " + d + "/lm.txt --checkpoint " + d +
                  "/model/final.ckpt --out " + d + "/ref.seg --beam 2 --tolerance 2") == 0);
  REQUIRE(run_cli(c + "decode --corpus " + d + "/data/heldout --lm " + d + "/lm.txt --checkpoint " + d +
                  "/model/final.ckpt --out " + d + "/dec") == 0);
  REQUIRE(run_cli("eval --corpus " + d + "/data/heldout --frames " + d + "/dec.frames --phonemes " + d +
                  "/dec.phonemes --out " + d + "/eval.txt") == 0);
  REQUIRE(run_cli(c + "selftrain --corpus " + d + "/data/train --lm " + d + "/lm.txt --checkpoint " + d +
                  "/model/final.ckpt --out " + d + "/st.ckpt --rounds 1") == 0);
  CHECK(fs::exists(dir / "st.ckpt"));

  CHECK(run_cli("--config " + d + "/missing.json gen-data --out " + d + "/x") == 2);
  std::ofstream(dir / "bad.json") << R"({"trainer": {"hidden": 3}})";
  CHECK(run_cli("--config " + d + "/bad.json full-run") == 2);
  CHECK(run_cli("train-lm --corpus " + d + "/nowhere --out " + d + "/l.txt") == 3);
  CHECK(run_cli("frobnicate") == 2);
}

TEST_CASE("command line: identical prediction and gold evaluate to zero") {
  const fs::path dir = scratch("cli_eval");
  const std::string d = dir.string();
  REQUIRE(run_cli("gen-data --out " + d) == 0);
  const auto c = load_corpus(dir / "heldout");
  std::vector<std::string> ids;
  std::vector<std::vector<int>> frames;
  for (std::size_t i = 0; i < c.size(); ++i) {
    ids.push_back(c.utterances[i].utterance_id);
    frames.push_back((*c.gold_labels)[i].labels);
  }
  const auto phon = c.gold_transcriptions();
  save_rows(dir / "g.frames", ids, frames);
  save_rows(dir / "g.phonemes", ids, phon);
  const std::string cmd = std::string(SODM_CLI) + " eval --corpus " + d + "/heldout --frames " + d +
                          "/g.frames --phonemes " + d + "/g.phonemes > " + d + "/summary.txt";
  REQUIRE(std::system(cmd.c_str()) == 0);
  const std::string summary = read_file(dir / "summary.txt");
  CHECK(summary.find("fer 0\n") != std::string::npos);
  CHECK(summary.find("fer_star 0\n") != std::string::npos);
  CHECK(summary.find("per 0\n") != std::string::npos);
}

TEST_CASE("command line: wider refinement beams never score lower") {
  const fs::path dir = scratch("cli_beam");
  const std::string d = dir.string();
  fs::create_directories(dir);
  std::ofstream(dir / "cfg.json") << quick_config(dir / "run").dump();
  const std::string c = "--config " + d + "/cfg.json ";
  REQUIRE(run_cli(c + "gen-data --out " + d + "/data") == 0);
  REQUIRE(run_cli("train-lm --corpus " + d + "/data/train --out " + d + "/lm.txt") == 0);
  REQUIRE(run_cli(c + "train --train " + d + "/data/train --heldout " + d + "/data/heldout --lm " + d +
                  "/lm.txt --out " + d + "/model") == 0);
  auto score = [&](int beam) {
    const std::string out = d + "/score" + std::to_string(beam) + ".txt";
    const std::string cmd = std::string(SODM_CLI) + " refine --corpus " + d + "/data/heldout --lm " + d +
                            "/lm.txt --checkpoint " + d + "/model/final.ckpt --out " + d + "/b" +
                            std::to_string(beam) + ".seg --beam " + std::to_string(beam) + " > " + out;
    REQUIRE(std::system(cmd.c_str()) == 0);
    std::istringstream in(read_file(out));
    std::string key;
    double value = 0.0;
    while (in >> key >> value) {
      if (key == "score") return value;
    }
    FAIL("no score line");
    return 0.0;
  };
  CHECK(score(16) >= score(1));
}

TEST_CASE("unsupervised training never reads gold annotations") {
  const fs::path dir = scratch("cli_isolation");
  const std::string d = dir.string();
  fs::create_directories(dir);
  std::ofstream(dir / "cfg.json") << quick_config(dir / "run").dump();
  const std::string c = "--config " + d + "/cfg.json ";
  REQUIRE(run_cli(c + "gen-data --out " + d + "/data") == 0);
  REQUIRE(run_cli("train-lm --corpus " + d + "/data/train --out " + d + "/lm.txt") == 0);
  for (const char* pool : {"train", "heldout"}) {
    Corpus stripped = load_corpus(dir / "data" / pool);
    stripped.gold_labels.reset();
    stripped.gold_segmentation.reset();
    save_corpus(stripped, dir / "bare" / pool);
  }
  REQUIRE(run_cli(c + "train --train " + d + "/data/train --heldout " + d + "/data/heldout --lm " + d +
                  "/lm.txt --out " + d + "/with --iterations 2") == 0);
  REQUIRE(run_cli(c + "train --train " + d + "/bare/train --heldout " + d + "/bare/heldout --lm " + d +
                  "/lm.txt --out " + d + "/without --iterations 2") == 0);
  CHECK(content_hash(dir / "with" / "final.ckpt") == content_hash(dir / "without" / "final.ckpt"));
  CHECK(content_hash(dir / "with" / "iter2.train.seg") == content_hash(dir / "without" / "iter2.train.seg"));
  // Gold boundaries are refused when the corpus carries none.
  CHECK(run_cli(c + "train --train " + d + "/bare/train --heldout " + d + "/bare/heldout --lm " + d +
                "/lm.txt --out " + d + "/gold --boundaries gold") == 3);
}

TEST_CASE("command line: numeric failure exit code") {
  const fs::path dir = scratch("cli_numeric");
  const std::string d = dir.string();
  fs::create_directories(dir);
  json cfg = quick_config(dir / "run");
  cfg["trainer"]["schedule"]["learning_rate"] = 1e300;
  std::ofstream(dir / "cfg.json") << cfg.dump();
  const std::string c = "--config " + d + "/cfg.json ";
  REQUIRE(run_cli(c + "gen-data --out " + d + "/data") == 0);
  REQUIRE(run_cli("train-lm --corpus " + d + "/data/train --out " + d + "/lm.txt") == 0);
  // A step this large overflows the parameters.
  CHECK(run_cli(c + "train --train " + d + "/data/train --heldout " + d + "/data/heldout --lm " + d +
                "/lm.txt --out " + d + "/m --boundaries gold") == 4);
}
