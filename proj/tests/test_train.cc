// phmm/tests/test_train.cc

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

#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>

#include "phmm/error.hpp"
#include "phmm/eval.hpp"
#include "phmm/nhmm.hpp"
#include "phmm/train.hpp"

namespace phmm {
namespace {

namespace fs = std::filesystem;

struct Fixture {
  std::vector<TrainingExample> data;
  NeuralHmmModel model;
};

// 20 toy utterances and a small freshly initialised model.
const Fixture& toy() {
  static const Fixture f = [] {
    ToyCorpusConfig tc;
    tc.n_utterances = 20;
    const fs::path dir = fs::temp_directory_path() / "phmm_test_train_toy";
    fs::remove_all(dir);
    generate_toy_corpus(tc, dir);
    const Manifest m = read_manifest(dir / "manifest.jsonl");
    Fixture out;
    Vocabulary vocab;
    const MelConfig mc = toy_mel_config(tc);
    out.data = load_examples(m, Split::kTrain, mc, &vocab);
    ModelConfig cfg;
    cfg.vocab_size = vocab.size();
    cfg.n_mels = mc.n_mels;
    cfg.embedding_dim = cfg.feature_embed_dim = 8;
    cfg.hidden_dim = 12;
    cfg.prenet_dim = 8;
    out.model = init_model(cfg, vocab, mc);
    fit_normalization(&out.model, out.data);
    return out;
  }();
  return f;
}

TrainConfig quick(int iterations) {
  TrainConfig c;
  c.iterations = iterations;
  c.learning_rate = 0.03;
  c.batch_size = 4;
  return c;
}

TEST(Normalization, StandardisesEveryBand) {
  const Fixture& f = toy();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(f.model.config.n_mels);
  double n = 0;
  for (const auto& ex : f.data) {
    sum += ex.mel.frames.colwise().sum().transpose();
    n += ex.mel.num_frames();
  }
  EXPECT_LT((sum / n - f.model.mel_mean).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_TRUE((f.model.mel_std.array() > 0).all());
}

TEST(BatchGradient, EqualsSumOfUtteranceGradients) {
  const Fixture& f = toy();
  const std::vector<std::size_t> batch = {3, 0, 7};
  Parameters g = Parameters::zeros_like(f.model.params);
  const double total = batch_gradient(f.model, f.data, batch, 1, &g);
  Parameters ref = Parameters::zeros_like(f.model.params);
  double ref_total = 0.0;
  for (std::size_t i : batch) {
    const StateChain chain = encode(f.model, f.data[i].symbols, f.data[i].z);
    ref_total += forward_nll(f.model, chain, f.data[i].mel);
    ref.add_scaled(grad_nll(f.model, chain, f.data[i].mel), 1.0);
  }
  EXPECT_NEAR(total, ref_total, 1e-9 * std::abs(ref_total));
  Parameters diff = g;
  diff.add_scaled(ref, -1.0);
  EXPECT_LE(std::sqrt(diff.squared_norm()), 1e-9 * std::sqrt(ref.squared_norm()));
}

TEST(BatchGradient, IndependentOfJobs) {
  const Fixture& f = toy();
  std::vector<std::size_t> batch(f.data.size());
  std::iota(batch.begin(), batch.end(), std::size_t{0});
  Parameters a = Parameters::zeros_like(f.model.params), b = a;
  const double la = batch_gradient(f.model, f.data, batch, 1, &a);
  const double lb = batch_gradient(f.model, f.data, batch, 3, &b);
  EXPECT_EQ(la, lb);
  EXPECT_TRUE(a == b);
}

TEST(Train, BitReproducibleAndJobsIndependent) {
  const Fixture& f = toy();
  NeuralHmmModel a = f.model, b = f.model, c = f.model;
  TrainConfig cfg = quick(8);
  const TrainResult ra = train(&a, f.data, cfg);
  const TrainResult rb = train(&b, f.data, cfg);
  cfg.jobs = 3;
  const TrainResult rc = train(&c, f.data, cfg);
  EXPECT_EQ(ra.loss_trace, rb.loss_trace);
  EXPECT_EQ(ra.loss_trace, rc.loss_trace);
  EXPECT_TRUE(a.params == b.params);
  EXPECT_TRUE(a.params == c.params);
  EXPECT_EQ(ra.loss_trace.size(), 8u);
  EXPECT_EQ(ra.grad_norm.size(), 8u);
}

TEST(Train, SeedChangesBatchOrder) {
  const Fixture& f = toy();
  NeuralHmmModel a = f.model, b = f.model;
  TrainConfig cfg = quick(3);
  const TrainResult ra = train(&a, f.data, cfg);
  cfg.seed = 99;
  const TrainResult rb = train(&b, f.data, cfg);
  EXPECT_NE(ra.loss_trace, rb.loss_trace);
}

TEST(Train, ZeroLearningRateAndZeroIterationsLeaveParameters) {
  const Fixture& f = toy();
  NeuralHmmModel a = f.model, b = f.model;
  TrainConfig cfg = quick(3);
  cfg.learning_rate = 0.0;
  const TrainResult r = train(&a, f.data, cfg);
  EXPECT_TRUE(a.params == f.model.params);
  EXPECT_EQ(r.initial_loss, r.final_loss);
  const TrainResult r0 = train(&b, f.data, quick(0));
  EXPECT_TRUE(b.params == f.model.params);
  EXPECT_TRUE(r0.loss_trace.empty());
}

TEST(Train, StepRespectsClip) {
  const Fixture& f = toy();
  NeuralHmmModel a = f.model;
  TrainConfig cfg = quick(1);
  cfg.grad_clip = 0.5;
  const TrainResult r = train(&a, f.data, cfg);
  Parameters step = a.params;
  step.add_scaled(f.model.params, -1.0);
  const double expected = cfg.learning_rate * std::min(r.grad_norm[0], cfg.grad_clip);
  EXPECT_NEAR(std::sqrt(step.squared_norm()), expected, 1e-9 * expected);
}

TEST(Train, LossDescends) {
  const Fixture& f = toy();
  NeuralHmmModel a = f.model;
  const TrainResult r = train(&a, f.data, quick(60));
  const double first = std::accumulate(r.loss_trace.begin(), r.loss_trace.begin() + 10, 0.0);
  const double last = std::accumulate(r.loss_trace.end() - 10, r.loss_trace.end(), 0.0);
  EXPECT_LT(last, first);
  EXPECT_LT(r.final_loss, r.initial_loss);
}

TEST(Train, ResumeContinuesExactly) {
  const Fixture& f = toy();
  NeuralHmmModel a = f.model;
  const TrainResult r = train(&a, f.data, quick(5));
  const fs::path p = fs::temp_directory_path() / "phmm_test_train_resume.ckpt";
  save_checkpoint(a, p);
  NeuralHmmModel b = load_checkpoint(p);
  const TrainResult r2 = train(&b, f.data, quick(0));
  EXPECT_NEAR(r2.initial_loss, r.final_loss, 1e-9);
}

TEST(Train, CheckpointHookCadence) {
  const Fixture& f = toy();
  NeuralHmmModel a = f.model;
  TrainConfig cfg = quick(7);
  cfg.checkpoint_interval = 3;
  std::vector<int> seen;
  train(&a, f.data, cfg, [&](int it, const NeuralHmmModel&) { seen.push_back(it); });
  EXPECT_EQ(seen, (std::vector<int>{3, 6}));
}

TEST(Train, NonFiniteNamesUtterance) {
  const Fixture& f = toy();
  std::vector<TrainingExample> data = f.data;
  data[2].mel.frames(1, 1) = std::numeric_limits<double>::quiet_NaN();
  NeuralHmmModel a = f.model;
  try {
    train(&a, data, quick(0));
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find(data[2].id), std::string::npos) << e.what();
  }
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ValidationError);
  c = TrainConfig{};
  c.grad_clip = 0;
  EXPECT_THROW(c.validate(), ValidationError);
  c = TrainConfig{};
  c.learning_rate = -1;
  EXPECT_THROW(c.validate(), ValidationError);
  c = TrainConfig{};
  c.iterations = -1;
  EXPECT_THROW(c.validate(), ValidationError);
}

}  // namespace
}  // namespace phmm
