// phmm/dsp.hpp

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

#ifndef PHMM_DSP_HPP_
#define PHMM_DSP_HPP_

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "phmm/audio.hpp"

namespace phmm {

using FrameMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct MelConfig {
  int sample_rate = 22050;
  int frame_length = 1024;  // samples; also the FFT size
  int hop_length = 256;
  int n_mels = 80;
  double fmin = 0.0;
  double fmax = 8000.0;
  double log_floor = 1e-5;

  int n_bins() const { return frame_length / 2 + 1; }
  void validate() const;
  bool operator==(const MelConfig&) const = default;
};

/// T x n_mels matrix of log-mel magnitudes.
struct MelSpectrogram {
  FrameMatrix frames;
  MelConfig config;

  int num_frames() const { return static_cast<int>(frames.rows()); }
};

struct F0Config {
  double fmin = 40.0;
  double fmax = 500.0;
  double frame_length = 0.05;  // seconds
  double hop = 0.01;           // seconds
  double voicing_threshold = 0.45;
  double silence_rms = 1e-4;
  // Continuity check: a voiced frame whose log f0 is further than max_jump
  // from the median of the voiced frames within +-continuity_frames, or
  // that has fewer than two such neighbours, is set unvoiced. 0 disables.
  int continuity_frames = 3;
  double max_jump = 0.15;

  void validate() const;
};

struct F0Track {
  std::vector<double> times;  // frame centres, seconds
  std::vector<double> f0_hz;  // 0 when unvoiced
  std::vector<bool> voiced;
  std::vector<double> periodicity;

  std::size_t size() const { return f0_hz.size(); }
  std::size_t num_voiced() const;
};

/// 1 + floor((len - frame) / hop) for len >= frame, else 0.
std::size_t frame_count(std::size_t len, std::size_t frame, std::size_t hop);

/// HTK mel scale.
double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Periodic Hann window of length n.
std::vector<double> hann_window(int n);

/// Triangular area-normalised filterbank, n_mels x n_bins.
Eigen::MatrixXd mel_filterbank(const MelConfig& config);

/// Centre frequency (Hz) of each mel band.
std::vector<double> mel_band_centers(const MelConfig& config);

/// |STFT| with a Hann window, T x (frame/2 + 1).
FrameMatrix stft_magnitude(const AudioBuffer& buffer, int frame_length,
                           int hop_length);

MelSpectrogram mel_spectrogram(const AudioBuffer& buffer,
                               const MelConfig& config);

/// Normalised-autocorrelation pitch tracker with parabolic peak
/// interpolation. Frames quieter than silence_rms are always unvoiced.
F0Track estimate_f0(const AudioBuffer& buffer, const F0Config& config);

/// RMS of each Hann-windowed frame.
std::vector<double> energy_contour(const AudioBuffer& buffer, double frame_s,
                                   double hop_s);

struct GriffinLimTrace {
  AudioBuffer audio;  // before peak normalisation
  // Entry i is || |STFT(x_i)| - S || / ||S|| for the signal after i
  // projections; size iterations + 1.
  std::vector<double> spectral_convergence;
};

/// Mel -> linear magnitude through the filterbank pseudo-inverse, then
/// phase recovery by iterative STFT projection from a seeded random phase.
/// Output is peak-normalised to 0.95 unless its peak is below 1e-6.
AudioBuffer griffin_lim(const MelSpectrogram& mel, int iterations,
                        std::uint64_t seed);

GriffinLimTrace griffin_lim_trace(const MelSpectrogram& mel, int iterations,
                                  std::uint64_t seed);

/// Linear magnitude (T x bins) implied by a mel spectrogram.
FrameMatrix mel_to_linear(const MelSpectrogram& mel);

}  // namespace phmm

#endif  // PHMM_DSP_HPP_
