// phmm/tests/test_prosody.cc

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
#include <vector>

#include "phmm/error.hpp"
#include "phmm/prosody.hpp"
#include "phmm/rng.hpp"
#include "signals.hpp"

namespace phmm {
namespace {

using testing::sine;

AudioBuffer scaled(AudioBuffer b, double k) {
  for (auto& s : b.samples) s *= k;
  return b;
}

TEST(Features, BumpedSine) {
  const ProsodyFeatures f = extract_features(testing::bumped_sine(220.0, 2.0, 4));
  EXPECT_NEAR(f.mean_log_f0, std::log(220.0), 0.01);
  EXPECT_LE(f.f0_std, 0.02);
  EXPECT_NEAR(f.speech_rate, 2.0, 0.2);
}

TEST(Features, TwoPointPitch) {
  const ProsodyFeatures f = extract_features(testing::cat({sine(150, 1.0), sine(300, 1.0)}));
  EXPECT_NEAR(f.mean_log_f0, 0.5 * (std::log(150.0) + std::log(300.0)), 0.02);
  EXPECT_NEAR(f.f0_std, std::log(2.0) / 2, 0.03);
}

TEST(Features, OctaveShiftMovesMeanOnly) {
  const ProsodyFeatures lo = extract_features(testing::cat({sine(100, 1.0), sine(200, 1.0)}));
  const ProsodyFeatures hi = extract_features(testing::cat({sine(200, 1.0), sine(400, 1.0)}));
  EXPECT_NEAR(hi.mean_log_f0 - lo.mean_log_f0, std::log(2.0), 0.02);
  EXPECT_NEAR(hi.f0_std, lo.f0_std, 0.02);
}

TEST(Features, ConstantPitchHasNoSpread) {
  for (double hz : {80.0, 140.0, 260.0, 380.0}) {
    EXPECT_LE(extract_features(sine(hz, 1.0)).f0_std, 0.02) << hz;
  }
}

TEST(Features, AmplitudeInvariance) {
  const AudioBuffer b = testing::bumped_sine(180.0, 2.0, 5);
  const ProsodyFeatures ref = extract_features(b);
  for (double k : {0.1, 0.3, 0.7, 1.0}) {
    const ProsodyFeatures f = extract_features(scaled(b, k));
    EXPECT_NEAR(f.mean_log_f0, ref.mean_log_f0, 0.01) << k;
    EXPECT_NEAR(f.speech_rate, ref.speech_rate, 0.05 * ref.speech_rate) << k;
  }
}

TEST(Features, UnvoicedThrows) {
  EXPECT_THROW(extract_features(testing::silence(1.0)), UnvoicedUtteranceError);
}

TEST(SpeechRate, FiveBursts) {
  AudioBuffer b;
  b.sample_rate = 16000;
  for (int i = 0; i < 5; ++i) {
    const AudioBuffer burst = testing::cat({sine(200, 0.2), testing::silence(0.1)});
    b.samples.insert(b.samples.end(), burst.samples.begin(), burst.samples.end());
  }
  const double rate = estimate_speech_rate(b);
  EXPECT_NEAR(rate, 5.0 / 1.5, 0.1 * 5.0 / 1.5);
  EXPECT_EQ(count_syllable_nuclei(b), 5u);
}

TEST(SpeechRate, SilenceAndSingleTone) {
  EXPECT_EQ(estimate_speech_rate(testing::silence(1.0)), 0.0);
  EXPECT_NEAR(estimate_speech_rate(sine(200, 1.0)), 1.0, 0.1);
}

TEST(SpeechRate, LongPausesExcluded) {
  const AudioBuffer b = testing::cat({sine(200, 0.5), testing::silence(1.0), sine(200, 0.5)});
  EXPECT_NEAR(estimate_speech_rate(b), 2.0, 0.2);
}

TEST(Creak, ImpulseTrainIsCreaky) {
  const CreakReport r = measure_creak(testing::impulse_train(40.0, 1.0));
  EXPECT_GE(r.creak_fraction, 90.0);
}

TEST(Creak, ModalSine) {
  EXPECT_LE(measure_creak(sine(120.0, 1.0)).creak_fraction, 5.0);
}

TEST(Creak, Silence) {
  const CreakReport r = measure_creak(testing::silence(0.5));
  EXPECT_EQ(r.creak_fraction, 0.0);
  EXPECT_EQ(r.voiced_frames, 0u);
}

TEST(Creak, FramesPartition) {
  const AudioBuffer b = testing::cat(
      {sine(150, 0.4), testing::impulse_train(45, 0.4), testing::silence(0.3), sine(90, 0.3)});
  const CreakReport r = measure_creak(b);
  std::size_t counts[3] = {0, 0, 0};
  for (auto c : r.frame_class) ++counts[c];
  EXPECT_EQ(r.frame_class.size(), r.total_frames);
  EXPECT_EQ(counts[0] + counts[1] + counts[2], r.total_frames);
  EXPECT_EQ(counts[2], r.creaky_frames);
  EXPECT_EQ(counts[1] + counts[2], r.voiced_frames);
  EXPECT_LE(r.creaky_frames, r.voiced_frames);
  EXPECT_DOUBLE_EQ(r.creak_fraction, 100.0 * r.creaky_frames / std::max<std::size_t>(r.voiced_frames, 1));
  EXPECT_GT(r.creaky_frames, 0u);
}

TEST(Standardizer, TwoPointClosedForm) {
  const Standardizer s = fit_standardizer(
      {{std::log(200.0), 0.1, 3.0}, {std::log(100.0), 0.3, 5.0}}, "two");
  EXPECT_NEAR(s.means()[0], std::log(200.0 * 100.0) / 2, 1e-12);
  EXPECT_NEAR(s.means()[1], 0.2, 1e-12);
  EXPECT_NEAR(s.means()[2], 4.0, 1e-12);
  EXPECT_NEAR(s.stds()[0], std::log(2.0) / 2, 1e-12);
  EXPECT_NEAR(s.stds()[1], 0.1, 1e-12);
  EXPECT_NEAR(s.stds()[2], 1.0, 1e-12);
}

TEST(Standardizer, DegenerateNamesDimension) {
  try {
    fit_standardizer({{4.0, 0.1, 3.0}, {5.0, 0.1, 4.0}}, "x");
    FAIL() << "expected an error";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("f0_std"), std::string::npos) << e.what();
  }
  EXPECT_THROW(fit_standardizer({{4.0, 0.1, 3.0}}, "x"), ValidationError);
}

TEST(Standardizer, SelfConsistency) {
  Rng rng(21);
  std::vector<ProsodyFeatures> f(1000);
  for (auto& x : f) x = {5.0 + 0.2 * rng.normal(), 0.1 + 0.03 * rng.normal(), 4.0 + rng.normal()};
  const Standardizer s = fit_standardizer(f, "rand");
  for (int d = 0; d < 3; ++d) {
    double m = 0.0, v = 0.0;
    for (const auto& x : f) m += standardize(x, s).as_array()[d];
    m /= f.size();
    for (const auto& x : f) v += std::pow(standardize(x, s).as_array()[d] - m, 2);
    EXPECT_LE(std::abs(m), 1e-9);
    EXPECT_NEAR(std::sqrt(v / f.size()), 1.0, 1e-9);
  }
}

TEST(Standardizer, AffineMaps) {
  const Standardizer s({5.0, 0.2, 4.0}, {0.3, 0.05, 1.5}, "c");
  const StandardizedFeatures z0 = standardize({5.0, 0.2, 4.0}, s);
  EXPECT_EQ(z0, (StandardizedFeatures{0, 0, 0}));
  const StandardizedFeatures z2 = standardize({5.6, 0.3, 7.0}, s);
  for (double v : z2.as_array()) EXPECT_NEAR(v, 2.0, 1e-12);
  const ProsodyFeatures m = destandardize({0, 0, 0}, s);
  EXPECT_EQ(m.as_array(), s.means());
  EXPECT_NEAR(destandardize({3, 0, 0}, s).mean_log_f0, 5.9, 1e-12);
}

TEST(Standardizer, RoundTrips) {
  const Standardizer s({4.8, 0.12, 3.3}, {0.21, 0.07, 0.9}, "c");
  Rng rng(4);
  for (int i = 0; i < 1000; ++i) {
    const ProsodyFeatures x{rng.uniform(3, 7), rng.uniform(0, 1), rng.uniform(0, 10)};
    const ProsodyFeatures y = destandardize(standardize(x, s), s);
    for (int d = 0; d < 3; ++d) EXPECT_NEAR(y.as_array()[d], x.as_array()[d], 1e-12);
    const StandardizedFeatures z{rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)};
    const StandardizedFeatures w = standardize(destandardize(z, s), s);
    for (int d = 0; d < 3; ++d) EXPECT_NEAR(w.as_array()[d], z.as_array()[d], 1e-12);
  }
}

TEST(Standardizer, JsonRoundTrip) {
  const Standardizer s({4.812345678901234, 0.1, 3.3}, {0.2100000000000001, 0.07, 0.9}, "corp");
  const auto p = std::filesystem::temp_directory_path() / "phmm_std.json";
  s.save(p);
  const Standardizer t = Standardizer::load(p);
  EXPECT_EQ(t.means(), s.means());
  EXPECT_EQ(t.stds(), s.stds());
  EXPECT_EQ(t.corpus_id(), "corp");
  EXPECT_EQ(s.to_json()["version"], Standardizer::kVersion);
  EXPECT_THROW(Standardizer({1, 2, 3}, {1, 0, 1}, "bad"), ValidationError);
}

}  // namespace
}  // namespace phmm
