// phmm/tests/test_dsp.cc

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
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>

#include "phmm/audio.hpp"
#include "phmm/dsp.hpp"
#include "phmm/error.hpp"
#include "phmm/rng.hpp"
#include "signals.hpp"

namespace phmm {
namespace {

namespace fs = std::filesystem;
using testing::sine;

fs::path temp_path(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "phmm_test_dsp";
  fs::create_directories(dir);
  return dir / name;
}

void put(std::string* s, std::uint32_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) s->push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

// Hand-built RIFF file with the given format tag and payload.
void write_riff(const fs::path& path, int format, int channels, int sr, int bits,
                const std::string& data) {
  std::string fmt;
  put(&fmt, format, 2);
  put(&fmt, channels, 2);
  put(&fmt, sr, 4);
  put(&fmt, sr * channels * bits / 8, 4);
  put(&fmt, channels * bits / 8, 2);
  put(&fmt, bits, 2);
  std::string body = "WAVE";
  body += "fmt ";
  put(&body, static_cast<std::uint32_t>(fmt.size()), 4);
  body += fmt;
  body += "data";
  put(&body, static_cast<std::uint32_t>(data.size()), 4);
  body += data;
  std::string file = "RIFF";
  put(&file, static_cast<std::uint32_t>(body.size()), 4);
  file += body;
  std::ofstream(path, std::ios::binary) << file;
}

std::vector<std::int16_t> read_pcm16(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::size_t pos = blob.find("data") + 8;
  std::vector<std::int16_t> out;
  for (std::size_t i = pos; i + 1 < blob.size(); i += 2) {
    out.push_back(static_cast<std::int16_t>(static_cast<unsigned char>(blob[i]) |
                                            (static_cast<unsigned char>(blob[i + 1]) << 8)));
  }
  return out;
}

TEST(Wav, ConstantPcm16ScalesLinearly) {
  std::string data;
  for (int i = 0; i < 100; ++i) put(&data, 16384, 2);
  const fs::path p = temp_path("const.wav");
  write_riff(p, 1, 1, 22050, 16, data);
  const AudioBuffer b = load_wav(p);
  EXPECT_EQ(b.sample_rate, 22050);
  ASSERT_EQ(b.size(), 100u);
  for (double s : b.samples) EXPECT_NEAR(s, 0.5, 1e-4);
}

TEST(Wav, EmptyDataChunkKeepsRate) {
  const fs::path p = temp_path("empty.wav");
  write_riff(p, 1, 1, 8000, 16, "");
  const AudioBuffer b = load_wav(p);
  EXPECT_TRUE(b.empty());
  EXPECT_EQ(b.sample_rate, 8000);
}

TEST(Wav, StereoIsAveraged) {
  std::string data;
  for (int i = 0; i < 10; ++i) {
    put(&data, 16384, 2);
    put(&data, 0, 2);
  }
  const fs::path p = temp_path("stereo.wav");
  write_riff(p, 1, 2, 16000, 16, data);
  const AudioBuffer b = load_wav(p);
  ASSERT_EQ(b.size(), 10u);
  for (double s : b.samples) EXPECT_NEAR(s, 0.25, 1e-4);
}

TEST(Wav, Float32IsRead) {
  std::string data;
  const float v = -0.375f;
  for (int i = 0; i < 5; ++i) put(&data, std::bit_cast<std::uint32_t>(v), 4);
  const fs::path p = temp_path("float.wav");
  write_riff(p, 3, 1, 16000, 32, data);
  const AudioBuffer b = load_wav(p);
  ASSERT_EQ(b.size(), 5u);
  for (double s : b.samples) EXPECT_DOUBLE_EQ(s, -0.375);
}

TEST(Wav, ErrorsAreDistinct) {
  EXPECT_THROW(load_wav(temp_path("does_not_exist.wav")), IoError);
  const fs::path bad = temp_path("bad.wav");
  std::ofstream(bad, std::ios::binary) << "RIFX this is not a wave file";
  EXPECT_THROW(load_wav(bad), FormatError);
  const fs::path alaw = temp_path("alaw.wav");
  write_riff(alaw, 6, 1, 8000, 8, std::string(10, '\0'));
  EXPECT_THROW(load_wav(alaw), UnsupportedFormatError);
}

TEST(Wav, SaveWritesExpectedCodes) {
  const fs::path p = temp_path("save.wav");
  save_wav(testing::constant(0.5, 0.01), p);
  for (auto v : read_pcm16(p)) EXPECT_EQ(v, 16384);
  save_wav(testing::constant(2.0, 0.01), p);
  for (auto v : read_pcm16(p)) EXPECT_EQ(v, 32767);
  save_wav(testing::constant(-2.0, 0.01), p);
  for (auto v : read_pcm16(p)) EXPECT_LE(v, -32767);
}

TEST(Wav, RoundTripWithinOneLsb) {
  const fs::path p = temp_path("rt.wav");
  const AudioBuffer a = sine(220.0, 0.5, 22050, 0.9);
  save_wav(a, p);
  const AudioBuffer b = load_wav(p);
  ASSERT_EQ(a.size(), b.size());
  EXPECT_EQ(b.sample_rate, 22050);
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a.samples[i] - b.samples[i]));
  EXPECT_LE(worst, std::ldexp(1.0, -15));
}

TEST(Wav, SaveRejectsEmptyAndUnwritable) {
  EXPECT_THROW(save_wav(AudioBuffer{}, temp_path("x.wav")), ValidationError);
  EXPECT_THROW(save_wav(sine(100, 0.1), "/nonexistent_dir/x.wav"), IoError);
}

TEST(Framing, CountFormula) {
  Rng rng(3);
  for (int i = 0; i < 500; ++i) {
    const std::size_t frame = 1 + rng.index(2048);
    const std::size_t hop = 1 + rng.index(frame);
    const std::size_t len = frame + rng.index(10000);
    EXPECT_EQ(frame_count(len, frame, hop), 1 + (len - frame) / hop);
  }
}

MelConfig mel16k() {
  MelConfig c;
  c.sample_rate = 16000;
  c.fmax = 8000;
  return c;
}

TEST(Mel, SilenceIsFloor) {
  const MelSpectrogram m = mel_spectrogram(testing::silence(0.3), mel16k());
  EXPECT_TRUE((m.frames.array() == std::log(1e-5)).all());
}

TEST(Mel, SingleFrame) {
  const MelConfig c = mel16k();
  AudioBuffer b = sine(440, 1.0);
  b.samples.resize(c.frame_length);
  EXPECT_EQ(mel_spectrogram(b, c).num_frames(), 1);
  b.samples.resize(c.frame_length + 3 * c.hop_length + 7);
  EXPECT_EQ(mel_spectrogram(b, c).num_frames(), 4);
}

TEST(Mel, SineLandsInNearestBand) {
  const MelConfig c = mel16k();
  const MelSpectrogram m = mel_spectrogram(sine(1000.0, 1.0), c);
  const std::vector<double> centers = mel_band_centers(c);
  int nearest = 0;
  for (int k = 0; k < c.n_mels; ++k) {
    if (std::abs(centers[k] - 1000.0) < std::abs(centers[nearest] - 1000.0)) nearest = k;
  }
  for (int t = 1; t + 1 < m.num_frames(); ++t) {
    Eigen::Index arg;
    m.frames.row(t).maxCoeff(&arg);
    EXPECT_EQ(arg, nearest) << "frame " << t;
  }
}

TEST(Mel, FilterbankTrianglesHaveUnitArea) {
  const MelConfig c = mel16k();
  const Eigen::MatrixXd fb = mel_filterbank(c);
  ASSERT_EQ(fb.rows(), c.n_mels);
  ASSERT_EQ(fb.cols(), c.n_bins());
  EXPECT_TRUE((fb.array() >= 0.0).all());
  const double bin_hz = static_cast<double>(c.sample_rate) / c.frame_length;
  for (int k = 5; k < c.n_mels; ++k) EXPECT_NEAR(fb.row(k).sum() * bin_hz, 1.0, 0.05) << k;
}

TEST(Mel, HtkScale) {
  EXPECT_NEAR(hz_to_mel(700.0), 2595.0 * std::log10(2.0), 1e-9);
  for (double hz : {0.0, 123.0, 4000.0}) EXPECT_NEAR(mel_to_hz(hz_to_mel(hz)), hz, 1e-9);
}

TEST(Mel, DeterministicAndErrors) {
  const AudioBuffer b = testing::white_noise(0.5, 0.3, 9);
  const MelSpectrogram a = mel_spectrogram(b, mel16k());
  const MelSpectrogram c = mel_spectrogram(b, mel16k());
  EXPECT_TRUE(a.frames == c.frames);
  EXPECT_THROW(mel_spectrogram(sine(100, 0.01), mel16k()), ValidationError);
  MelConfig wrong = mel16k();
  wrong.sample_rate = 22050;
  EXPECT_THROW(mel_spectrogram(b, wrong), ValidationError);
  MelConfig bad = mel16k();
  bad.fmax = 9000;
  EXPECT_THROW(bad.validate(), ValidationError);
  bad = mel16k();
  bad.hop_length = 2048;
  EXPECT_THROW(bad.validate(), ValidationError);
}

std::vector<double> interior_voiced(const F0Track& t) {
  std::vector<double> out;
  for (std::size_t i = 2; i + 2 < t.size(); ++i) {
    if (t.voiced[i]) out.push_back(t.f0_hz[i]);
  }
  return out;
}

TEST(F0, Sine220) {
  const F0Track t = estimate_f0(sine(220.0, 1.0), F0Config{});
  std::size_t interior = t.size() - 4, voiced = 0;
  for (std::size_t i = 2; i + 2 < t.size(); ++i) {
    EXPECT_TRUE(t.voiced[i]) << i;
    if (t.voiced[i]) {
      ++voiced;
      EXPECT_NEAR(t.f0_hz[i], 220.0, 2.0);
    }
  }
  EXPECT_EQ(voiced, interior);
}

TEST(F0, TrackInvariants) {
  const F0Config cfg;
  const F0Track t = estimate_f0(testing::cat({sine(150, 0.3), testing::silence(0.2), sine(90, 0.3)}), cfg);
  ASSERT_EQ(t.times.size(), t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    EXPECT_EQ(t.f0_hz[i] > 0.0, static_cast<bool>(t.voiced[i]));
    if (t.voiced[i]) {
      EXPECT_GE(t.f0_hz[i], cfg.fmin);
      EXPECT_LE(t.f0_hz[i], cfg.fmax);
    }
    EXPECT_GE(t.periodicity[i], 0.0);
    EXPECT_LE(t.periodicity[i], 1.0);
  }
}

TEST(F0, NoiseMostlyUnvoiced) {
  const F0Track t = estimate_f0(testing::white_noise(1.0, 0.1, 11), F0Config{});
  EXPECT_GE(static_cast<double>(t.size() - t.num_voiced()), 0.9 * t.size());
}

TEST(F0, SilenceUnvoiced) {
  const F0Track t = estimate_f0(testing::silence(0.5), F0Config{});
  EXPECT_EQ(t.num_voiced(), 0u);
  for (double f : t.f0_hz) EXPECT_EQ(f, 0.0);
}

TEST(F0, ImpulseTrain40Hz) {
  const std::vector<double> f = interior_voiced(estimate_f0(testing::impulse_train(40.0, 1.0), F0Config{}));
  ASSERT_GT(f.size(), 50u);
  for (double v : f) EXPECT_NEAR(v, 40.0, 1.0);
}

TEST(F0, SineSweepWithinOnePercentNoOctaveErrors) {
  Rng rng(5);
  for (int trial = 0; trial < 25; ++trial) {
    const double g = rng.uniform(60.0, 400.0);
    const F0Track t = estimate_f0(sine(g, 0.6), F0Config{});
    std::size_t interior = 0, good = 0, octave = 0, voiced = 0;
    for (std::size_t i = 2; i + 2 < t.size(); ++i) {
      ++interior;
      if (!t.voiced[i]) continue;
      ++voiced;
      good += std::abs(t.f0_hz[i] - g) <= 0.01 * g;
      octave += std::abs(t.f0_hz[i] - 2 * g) < 0.05 * g || std::abs(t.f0_hz[i] - g / 2) < 0.05 * g;
    }
    EXPECT_GE(good, 0.95 * interior) << g;
    EXPECT_LE(octave, 0.02 * voiced) << g;
  }
}

TEST(F0, Errors) {
  EXPECT_THROW(estimate_f0(AudioBuffer{}, F0Config{}), ValidationError);
  F0Config c;
  c.frame_length = 0.03;  // shorter than two periods at 40 Hz
  EXPECT_THROW(c.validate(), ValidationError);
}

TEST(Energy, ConstantClosedForm) {
  const double frame = 0.025, hop = 0.01;
  const std::vector<double> e = energy_contour(testing::constant(0.5, 0.5), frame, hop);
  const std::vector<double> w = hann_window(static_cast<int>(std::lround(frame * 16000)));
  double mean_sq = 0.0;
  for (double v : w) mean_sq += v * v;
  mean_sq /= static_cast<double>(w.size());
  for (double v : e) EXPECT_NEAR(v, 0.5 * std::sqrt(mean_sq), 1e-6);
}

TEST(Energy, SilenceAndStep) {
  for (double v : energy_contour(testing::silence(0.3), 0.025, 0.01)) EXPECT_EQ(v, 0.0);
  const std::vector<double> e =
      energy_contour(testing::cat({testing::silence(0.5), sine(300, 0.5)}), 0.025, 0.01);
  // Frame i covers [0.01 i, 0.01 i + 0.025).
  for (std::size_t i = 0; i < e.size(); ++i) {
    const double start = 0.01 * static_cast<double>(i);
    if (start + 0.025 <= 0.5 - 0.01) EXPECT_LT(e[i], 1e-9) << i;
    if (start >= 0.5 + 0.01) EXPECT_GT(e[i], 0.1) << i;
  }
  EXPECT_THROW(energy_contour(AudioBuffer{}, 0.025, 0.01), ValidationError);
}

MelSpectrogram mel_of(const AudioBuffer& b) {
  MelConfig c = mel16k();
  c.fmax = 4000;
  return mel_spectrogram(b, c);
}

TEST(GriffinLim, SineRoundTrip) {
  const AudioBuffer out = griffin_lim(mel_of(sine(220.0, 1.0)), 60, 1);
  EXPECT_EQ(out.sample_rate, 16000);
  const std::vector<double> f = interior_voiced(estimate_f0(out, F0Config{}));
  ASSERT_GT(f.size(), 50u);
  std::size_t good = 0;
  for (double v : f) good += std::abs(v - 220.0) <= 5.0;
  EXPECT_GE(good, 0.95 * f.size());
  double peak = 0.0;
  for (double s : out.samples) peak = std::max(peak, std::abs(s));
  EXPECT_NEAR(peak, 0.95, 1e-12);
}

TEST(GriffinLim, ZeroIterationsDeterministic) {
  const MelSpectrogram m = mel_of(sine(300.0, 0.4));
  EXPECT_EQ(griffin_lim(m, 0, 7).samples, griffin_lim(m, 0, 7).samples);
  EXPECT_NE(griffin_lim(m, 0, 7).samples, griffin_lim(m, 0, 8).samples);
}

TEST(GriffinLim, FloorInputStaysQuiet) {
  const MelSpectrogram m = mel_of(testing::silence(0.4));
  const GriffinLimTrace tr = griffin_lim_trace(m, 8, 1);
  EXPECT_LT(rms(tr.audio.samples), 1e-3);
  const AudioBuffer out = griffin_lim(m, 8, 1);
  EXPECT_EQ(out.samples, tr.audio.samples);
}

TEST(GriffinLim, ConvergenceNonIncreasingOnHarmonics) {
  for (double f0 : {110.0, 180.0, 260.0}) {
    AudioBuffer b = sine(f0, 0.5, 16000, 0.3);
    for (int h = 2; h <= 4; ++h) {
      const AudioBuffer p = sine(h * f0, 0.5, 16000, 0.3 / h);
      for (std::size_t i = 0; i < b.size(); ++i) b.samples[i] += p.samples[i];
    }
    const GriffinLimTrace tr = griffin_lim_trace(mel_of(b), 30, 3);
    ASSERT_EQ(tr.spectral_convergence.size(), 31u);
    for (std::size_t i = 1; i < tr.spectral_convergence.size(); ++i) {
      EXPECT_LE(tr.spectral_convergence[i], tr.spectral_convergence[i - 1] + 1e-12) << f0 << " " << i;
    }
  }
}

}  // namespace
}  // namespace phmm
