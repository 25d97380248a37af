// phmm/tests/test_cli.cc

// Copyright 2026  The phmm Authors

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

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "phmm/cli.hpp"
#include "phmm/nhmm.hpp"
#include "signals.hpp"

namespace phmm {
namespace {

namespace fs = std::filesystem;

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun phmm(std::vector<std::string> args) {
  args.insert(args.begin(), "phmm");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string l; std::getline(in, l);) ++n;
  return n;
}

fs::path root() {
  static const fs::path r = [] {
    const fs::path p = fs::temp_directory_path() / "phmm_test_cli";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return r;
}

std::string dir(const std::string& name) { return (root() / name).string(); }

const std::vector<std::string> kSmallModel = {"--embedding-dim", "8", "--feature-embed-dim", "8",
                                              "--hidden-dim", "8", "--prenet-dim", "8",
                                              "--fmax", "4000", "--batch-size", "4",
                                              "--learning-rate", "0.03"};

// A 20-utterance toy corpus and a checkpoint trained for a few iterations.
const std::string& toy_dir() {
  static const std::string d = [] {
    const CliRun r = phmm({"gen-toy", "--n-utterances", "20", "--out-dir", dir("toy")});
    EXPECT_EQ(r.code, 0) << r.err;
    return dir("toy");
  }();
  return d;
}

std::vector<std::string> train_args(const std::string& out, int iterations) {
  std::vector<std::string> a = {"train", "--manifest", toy_dir() + "/manifest.jsonl",
                                "--iterations", std::to_string(iterations), "--out-dir", out};
  a.insert(a.end(), kSmallModel.begin(), kSmallModel.end());
  return a;
}

const std::string& trained() {
  static const std::string ckpt = [] {
    const CliRun r = phmm(train_args(dir("m"), 6));
    EXPECT_EQ(r.code, 0) << r.err;
    return dir("m") + "/model.ckpt";
  }();
  return ckpt;
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(phmm({"--help"}).code, cli::kExitOk);
  EXPECT_EQ(phmm({}).code, cli::kExitUsage);
  EXPECT_EQ(phmm({"frobnicate"}).code, cli::kExitUsage);
  EXPECT_EQ(phmm({"gen-toy", "--no-such-flag"}).code, cli::kExitUsage);
  EXPECT_EQ(phmm({"train"}).code, cli::kExitUsage);
  EXPECT_EQ(phmm({"--config", dir("missing.conf"), "gen-toy"}).code, cli::kExitUsage);
}

TEST(Cli, GenToyDeterministic) {
  const CliRun a = phmm({"gen-toy", "--n-utterances", "20", "--out-dir", dir("g1")});
  const CliRun b = phmm({"gen-toy", "--n-utterances", "20", "--out-dir", dir("g2")});
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(b.code, 0);
  EXPECT_EQ(line_count(dir("g1") + "/manifest.jsonl"), 20u);
  EXPECT_EQ(a.out, b.out);
  for (const auto& e : fs::recursive_directory_iterator(dir("g1"))) {
    if (!e.is_regular_file() || e.path().filename() == "resolved.conf") continue;
    const fs::path rel = fs::relative(e.path(), dir("g1"));
    EXPECT_EQ(slurp(e.path()), slurp(fs::path(dir("g2")) / rel)) << rel;
  }
  EXPECT_EQ(phmm({"gen-toy", "--n-utterances", "0", "--out-dir", dir("g0")}).code,
            cli::kExitUsage);
}

void write_prepare_fixture(const fs::path& d, bool with_sidecar) {
  fs::create_directories(d);
  AudioBuffer b = testing::silence(0.2);
  for (double hz : {140.0, 180.0, 120.0}) {
    b = testing::cat({b, testing::bumped_sine(hz, 1.5, 3), testing::silence(0.5)});
  }
  save_wav(b, d / "talk.wav");
  if (with_sidecar) std::ofstream(d / "talk.txt") << "one two\nthree\nfour five\n";
}

TEST(Cli, Prepare) {
  write_prepare_fixture(dir("rec"), true);
  const CliRun a = phmm({"prepare", "--input-dir", dir("rec"), "--heldout-fraction", "0.5",
                      "--out-dir", dir("p1")});
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_NE(a.out.find("groups 3"), std::string::npos) << a.out;
  EXPECT_NE(a.out.find("bigrams 2"), std::string::npos) << a.out;
  EXPECT_NE(a.out.find("dropped 0"), std::string::npos) << a.out;
  EXPECT_EQ(line_count(dir("p1") + "/manifest.jsonl"), 2u);
  EXPECT_TRUE(fs::exists(dir("p1") + "/standardizer.json"));
  const CliRun b = phmm({"prepare", "--input-dir", dir("rec"), "--heldout-fraction", "0.5",
                      "--out-dir", dir("p2")});
  ASSERT_EQ(b.code, 0);
  EXPECT_EQ(slurp(dir("p1") + "/manifest.jsonl"), slurp(dir("p2") + "/manifest.jsonl"));
  EXPECT_EQ(slurp(dir("p1") + "/wavs/corpus_0000.wav"), slurp(dir("p2") + "/wavs/corpus_0000.wav"));

  write_prepare_fixture(dir("rec_nosidecar"), false);
  const CliRun c = phmm({"prepare", "--input-dir", dir("rec_nosidecar"), "--out-dir", dir("p3")});
  EXPECT_EQ(c.code, cli::kExitUsage);
  EXPECT_NE(c.err.find("talk.txt"), std::string::npos) << c.err;
}

TEST(Cli, TrainOutputsAndDeterminism) {
  const CliRun a = phmm(train_args(dir("t1"), 4));
  const CliRun b = phmm(train_args(dir("t2"), 4));
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(b.code, 0);
  EXPECT_EQ(line_count(dir("t1") + "/loss.csv"), 5u);
  for (const char* f : {"model.ckpt", "loss.csv", "train_summary.json"}) {
    EXPECT_EQ(slurp(dir("t1") + "/" + f), slurp(dir("t2") + "/" + f)) << f;
  }
  std::vector<std::string> jobs = train_args(dir("t3"), 4);
  jobs.insert(jobs.end(), {"--jobs", "3"});
  ASSERT_EQ(phmm(jobs).code, 0);
  EXPECT_EQ(slurp(dir("t1") + "/model.ckpt"), slurp(dir("t3") + "/model.ckpt"));
}

TEST(Cli, TrainZeroIterationsIsInit) {
  ASSERT_EQ(phmm(train_args(dir("t0"), 0)).code, 0);
  const NeuralHmmModel m = load_checkpoint(dir("t0") + "/model.ckpt");
  const NeuralHmmModel init = init_model(m.config, m.vocabulary, m.mel_config);
  EXPECT_TRUE(m.params == init.params);
}

TEST(Cli, TrainResume) {
  ASSERT_EQ(phmm(train_args(dir("r1"), 3)).code, 0);
  std::vector<std::string> a = train_args(dir("r2"), 2);
  a.insert(a.end(), {"--init-from", dir("r1") + "/model.ckpt"});
  const CliRun r = phmm(a);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto s1 = nlohmann::json::parse(slurp(dir("r1") + "/train_summary.json"));
  const auto s2 = nlohmann::json::parse(slurp(dir("r2") + "/train_summary.json"));
  EXPECT_NEAR(s2["initial_loss"].get<double>(), s1["final_loss"].get<double>(), 1e-9);
}

TEST(Cli, TrainDivergenceExitsNumerical) {
  std::vector<std::string> a = train_args(dir("nan"), 2);
  *(std::find(a.begin(), a.end(), "--learning-rate") + 1) = "1e300";
  a.insert(a.end(), {"--grad-clip", "1e300"});
  const CliRun r = phmm(a);
  EXPECT_EQ(r.code, cli::kExitNumerical) << r.err;
}

TEST(Cli, ConfigFileAndPrecedence) {
  const fs::path conf = root() / "train.conf";
  std::ofstream(conf) << "# small run\n[train]\niterations = 3\nbatch-size = 2\n"
                      << "embedding-dim = 8\nfeature-embed-dim = 8\nhidden-dim = 8\n"
                      << "prenet-dim = 8\nfmax = 4000\n";
  CliRun r = phmm({"--config", conf.string(), "train", "--manifest", toy_dir() + "/manifest.jsonl",
                "--iterations", "2", "--out-dir", dir("c1")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(line_count(dir("c1") + "/loss.csv"), 3u);
  const std::string resolved = slurp(dir("c1") + "/resolved.conf");
  EXPECT_NE(resolved.find("iterations=2"), std::string::npos) << resolved;
  EXPECT_NE(resolved.find("batch-size=2"), std::string::npos) << resolved;

  // Rerun from the echo into a new directory reproduces the outputs.
  r = phmm({"train", "--config", dir("c1") + "/resolved.conf", "--out-dir", dir("c2")});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"model.ckpt", "loss.csv", "train_summary.json"}) {
    EXPECT_EQ(slurp(dir("c1") + "/" + f), slurp(dir("c2") + "/" + f)) << f;
  }
}

TEST(Cli, Synth) {
  const std::vector<std::string> base = {"synth", "--checkpoint", trained(), "--text", "abc",
                                         "--pitch", "1", "--max-frames", "60", "--gl-iters", "4"};
  std::vector<std::string> a = base, b = base;
  a.insert(a.end(), {"--out-dir", dir("s1")});
  b.insert(b.end(), {"--out-dir", dir("s2")});
  const CliRun ra = phmm(a);
  ASSERT_EQ(ra.code, 0) << ra.err;
  ASSERT_EQ(phmm(b).code, 0);
  for (const char* f : {"synth.wav", "synth.mel", "synth.align.csv"}) {
    EXPECT_EQ(slurp(dir("s1") + "/" + f), slurp(dir("s2") + "/" + f)) << f;
  }
  const FrameMatrix mel = cli::read_mel_binary(dir("s1") + "/synth.mel");
  EXPECT_EQ(line_count(dir("s1") + "/synth.align.csv"), static_cast<std::size_t>(mel.rows()) + 1);
  EXPECT_EQ(mel.cols(), 80);

  CliRun r = phmm({"synth", "--checkpoint", trained(), "--text", "", "--out-dir", dir("s3")});
  EXPECT_EQ(r.code, cli::kExitUsage);
  r = phmm({"synth", "--checkpoint", trained(), "--text", "axq", "--out-dir", dir("s3")});
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_NE(r.err.find("'x'"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("'q'"), std::string::npos) << r.err;
}

TEST(Cli, MelBinaryRoundTrip) {
  MelSpectrogram m;
  m.frames = FrameMatrix::Random(7, 5);
  const fs::path p = root() / "x.mel";
  cli::write_mel_binary(m, p);
  EXPECT_EQ(fs::file_size(p), 16u + 8u * 35u);
  EXPECT_TRUE(cli::read_mel_binary(p) == m.frames);
  std::ofstream(p) << "junk";
  EXPECT_THROW(cli::read_mel_binary(p), FormatError);
}

TEST(Cli, Sweep) {
  const fs::path texts = root() / "texts.txt";
  std::ofstream(texts) << "ab\ncd\nef\nabc\nbcd\ncde\ndef\nfa\nfed\ncab\n";
  const std::vector<std::string> base = {"sweep", "--checkpoint", trained(), "--texts",
                                         texts.string(), "--standardizer",
                                         toy_dir() + "/standardizer.json", "--max-frames", "30",
                                         "--griffin-lim-iters", "0", "--out-dir", dir("sw")};
  std::vector<std::string> a = base;
  a.insert(a.end(), {"--feature", "rate"});
  const CliRun r = phmm(a);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(line_count(dir("sw") + "/sweep_rate.csv"), 71u);
  const auto j = nlohmann::json::parse(slurp(dir("sw") + "/sweep_rate.json"));
  EXPECT_TRUE(j.contains("spearman_rho"));
  EXPECT_EQ(j["rows"], 70);
  std::vector<std::string> bad = base;
  bad.insert(bad.end(), {"--feature", "loudness"});
  EXPECT_EQ(phmm(bad).code, cli::kExitUsage);
}

TEST(Cli, CreakEval) {
  const fs::path texts = root() / "creak_texts.txt";
  std::ofstream(texts) << "abc\ndef\ncab\n";
  const CliRun r = phmm({"creak-eval", "--checkpoint", trained(), "--texts", texts.string(),
                      "--max-frames", "30", "--griffin-lim-iters", "0", "--out-dir", dir("ce")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir("ce") + "/creak.json"));
  EXPECT_NE(r.out.find("modal"), std::string::npos) << r.out;
}

nlohmann::json stats_json(const std::string& flag, const std::string& csv, CliRun* run) {
  const fs::path p = root() / "input.csv";
  std::ofstream(p) << csv;
  *run = phmm({"stats", flag, p.string(), "--out-dir", dir("st")});
  if (run->code != 0) return {};
  return nlohmann::json::parse(slurp(dir("st") + "/stats.json"));
}

TEST(Cli, StatsGroups) {
  CliRun r;
  std::string csv = "group,value\n";
  for (const char* g : {"a", "b", "c"}) {
    for (int v : {1, 2, 3}) csv += std::string(g) + "," + std::to_string(v) + "\n";
  }
  nlohmann::json j = stats_json("--groups", csv, &r);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(j["groups"]["anova"]["f"].get<double>(), 0.0);

  csv = "group,value\n";
  const double modal[] = {10, 12, 11, 9, 13, 10, 12, 11, 10, 12};
  const double style[] = {55, 60, 58, 62, 57, 59, 61, 56, 60, 58};
  const double end[] = {54, 57, 59, 55, 58, 56, 60, 57, 55, 59};
  for (int i = 0; i < 10; ++i) {
    csv += "modal," + std::to_string(modal[i]) + "\nstylistic," + std::to_string(style[i]) +
           "\nend," + std::to_string(end[i]) + "\n";
  }
  j = stats_json("--groups", csv, &r);
  ASSERT_EQ(r.code, 0) << r.err;
  int significant = 0;
  for (const auto& p : j["groups"]["tukey"]) {
    const bool involves_modal = p["a"] == "modal" || p["b"] == "modal";
    EXPECT_EQ(p["significant"].get<bool>(), involves_modal) << p.dump();
    significant += p["significant"].get<bool>();
  }
  EXPECT_EQ(significant, 2);

  stats_json("--groups", "group,value\na,1\nb,oops\n", &r);
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_NE(r.err.find("row 3"), std::string::npos) << r.err;
  stats_json("--groups", "group,value\na,1,2\n", &r);
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_NE(r.err.find("row 2"), std::string::npos) << r.err;
}

TEST(Cli, StatsRatings) {
  CliRun r;
  std::string csv = "system,rater_id,item_id,score\n";
  for (int i = 0; i < 12; ++i) csv += "sys," + std::to_string(i % 3) + "," + std::to_string(i) + ",4\n";
  const nlohmann::json j = stats_json("--ratings", csv, &r);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("4.00   [4.00, 4.00]"), std::string::npos) << r.out;
  EXPECT_EQ(j["ratings"][0]["mean"].get<double>(), 4.0);
  stats_json("--ratings", "system,rater_id,item_id,score\ns,1,1,9\n", &r);
  EXPECT_EQ(r.code, cli::kExitUsage);
}

TEST(Cli, StatsCorpus) {
  const CliRun r = phmm({"stats", "--manifest", toy_dir() + "/manifest.jsonl", "--out-dir", dir("sc")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(slurp(dir("sc") + "/stats.json"));
  EXPECT_EQ(j["corpus"]["utterances"], 20);
  EXPECT_EQ(phmm({"stats", "--out-dir", dir("sc")}).code, cli::kExitUsage);
}

}  // namespace
}  // namespace phmm
