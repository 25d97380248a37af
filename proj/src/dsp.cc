// phmm/dsp.cc

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

#include "phmm/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <unsupported/Eigen/FFT>

#include "phmm/error.hpp"
#include "phmm/rng.hpp"

namespace phmm {

namespace {

using Complex = std::complex<double>;

int next_pow2(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

class RealFft {
 public:
  explicit RealFft(int n) : n_(n), in_(n), out_(n / 2 + 1) {
    fft_.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  }
  int size() const { return n_; }

  const std::vector<Complex>& forward(const std::vector<double>& x) {
    fft_.fwd(out_, x);
    return out_;
  }
  const std::vector<double>& inverse(const std::vector<Complex>& spec) {
    fft_.inv(in_, spec, n_);
    return in_;
  }

 private:
  int n_;
  Eigen::FFT<double> fft_;
  std::vector<double> in_;
  std::vector<Complex> out_;
};

// Overlap-add inverse STFT: least-squares signal for the given frame spectra.
std::vector<double> istft(const std::vector<std::vector<Complex>>& spectra,
                          const std::vector<double>& window, int hop,
                          RealFft* fft) {
  const int n = static_cast<int>(window.size());
  const std::size_t frames = spectra.size();
  const std::size_t len = n + (frames - 1) * hop;
  std::vector<double> out(len, 0.0), norm(len, 0.0);
  for (std::size_t t = 0; t < frames; ++t) {
    const std::vector<double>& y = fft->inverse(spectra[t]);
    const std::size_t off = t * hop;
    for (int i = 0; i < n; ++i) {
      out[off + i] += window[i] * y[i];
      norm[off + i] += window[i] * window[i];
    }
  }
  // Near the ends only window tails overlap; flooring the normaliser keeps
  // those samples from being amplified by 1 / w^2.
  const double floor = 0.1 * *std::max_element(norm.begin(), norm.end());
  for (std::size_t i = 0; i < len; ++i) {
    out[i] = floor > 0.0 ? out[i] / std::max(norm[i], floor) : 0.0;
  }
  return out;
}

void stft(const std::vector<double>& x, const std::vector<double>& window,
          int hop, RealFft* fft, std::vector<std::vector<Complex>>* spectra) {
  const int n = static_cast<int>(window.size());
  const std::size_t frames = frame_count(x.size(), n, hop);
  spectra->resize(frames);
  std::vector<double> buf(n);
  for (std::size_t t = 0; t < frames; ++t) {
    const std::size_t off = t * hop;
    for (int i = 0; i < n; ++i) buf[i] = x[off + i] * window[i];
    (*spectra)[t] = fft->forward(buf);
  }
}

}  // namespace

void MelConfig::validate() const {
  if (sample_rate <= 0) throw ValidationError("mel: sample_rate must be positive");
  if (frame_length < 2) throw ValidationError("mel: frame_length must be >= 2");
  if (hop_length < 1 || hop_length > frame_length) {
    throw ValidationError("mel: need 1 <= hop_length <= frame_length");
  }
  if (n_mels < 1) throw ValidationError("mel: n_mels must be >= 1");
  if (!(fmin >= 0.0 && fmin < fmax && fmax <= sample_rate / 2.0)) {
    throw ValidationError("mel: need 0 <= fmin < fmax <= sample_rate/2");
  }
  if (!(log_floor > 0.0)) throw ValidationError("mel: log_floor must be positive");
}

void F0Config::validate() const {
  if (!(fmin > 0.0 && fmin < fmax)) throw ValidationError("f0: need 0 < fmin < fmax");
  if (frame_length < 2.0 / fmin - 1e-12) {
    throw ValidationError("f0: frame_length must hold two periods of fmin");
  }
  if (!(hop > 0.0)) throw ValidationError("f0: hop must be positive");
  if (voicing_threshold < 0.0 || voicing_threshold > 1.0) {
    throw ValidationError("f0: voicing_threshold must lie in [0, 1]");
  }
  if (continuity_frames < 0 || !(max_jump > 0.0)) {
    throw ValidationError("f0: need continuity_frames >= 0 and max_jump > 0");
  }
}

std::size_t F0Track::num_voiced() const {
  return static_cast<std::size_t>(std::count(voiced.begin(), voiced.end(), true));
}

std::size_t frame_count(std::size_t len, std::size_t frame, std::size_t hop) {
  if (frame == 0 || hop == 0 || len < frame) return 0;
  return 1 + (len - frame) / hop;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

std::vector<double> hann_window(int n) {
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
  }
  return w;
}

std::vector<double> mel_band_centers(const MelConfig& config) {
  const double lo = hz_to_mel(config.fmin);
  const double hi = hz_to_mel(config.fmax);
  std::vector<double> centers(config.n_mels);
  for (int m = 0; m < config.n_mels; ++m) {
    centers[m] = mel_to_hz(lo + (hi - lo) * (m + 1) / (config.n_mels + 1));
  }
  return centers;
}

Eigen::MatrixXd mel_filterbank(const MelConfig& config) {
  config.validate();
  const int bins = config.n_bins();
  const double lo = hz_to_mel(config.fmin);
  const double hi = hz_to_mel(config.fmax);
  std::vector<double> edges(config.n_mels + 2);
  for (int i = 0; i < config.n_mels + 2; ++i) {
    edges[i] = mel_to_hz(lo + (hi - lo) * i / (config.n_mels + 1));
  }
  Eigen::MatrixXd fb = Eigen::MatrixXd::Zero(config.n_mels, bins);
  for (int m = 0; m < config.n_mels; ++m) {
    const double l = edges[m], c = edges[m + 1], r = edges[m + 2];
    const double area_norm = 2.0 / (r - l);
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * config.sample_rate /
                       config.frame_length;
      const double w = std::min((f - l) / (c - l), (r - f) / (r - c));
      if (w > 0.0) fb(m, k) = w * area_norm;
    }
  }
  return fb;
}

FrameMatrix stft_magnitude(const AudioBuffer& buffer, int frame_length,
                           int hop_length) {
  const std::vector<double> window = hann_window(frame_length);
  RealFft fft(frame_length);
  std::vector<std::vector<Complex>> spectra;
  stft(buffer.samples, window, hop_length, &fft, &spectra);
  const int bins = frame_length / 2 + 1;
  FrameMatrix mag(static_cast<Eigen::Index>(spectra.size()), bins);
  for (std::size_t t = 0; t < spectra.size(); ++t) {
    for (int k = 0; k < bins; ++k) mag(t, k) = std::abs(spectra[t][k]);
  }
  return mag;
}

MelSpectrogram mel_spectrogram(const AudioBuffer& buffer,
                               const MelConfig& config) {
  config.validate();
  if (buffer.sample_rate != config.sample_rate) {
    throw ValidationError("mel_spectrogram: buffer sample rate " +
                          std::to_string(buffer.sample_rate) +
                          " != configured " + std::to_string(config.sample_rate));
  }
  if (buffer.size() < static_cast<std::size_t>(config.frame_length)) {
    throw ValidationError("mel_spectrogram: buffer shorter than one frame");
  }
  const Eigen::MatrixXd fb = mel_filterbank(config);
  const FrameMatrix mag =
      stft_magnitude(buffer, config.frame_length, config.hop_length);
  MelSpectrogram mel;
  mel.config = config;
  mel.frames = mag * fb.transpose();
  const double floor = config.log_floor;
  mel.frames = mel.frames.unaryExpr(
      [floor](double v) { return std::log(std::max(v, floor)); });
  return mel;
}

namespace {

// Frames straddling a burst edge give spurious high-periodicity peaks.
void remove_f0_outliers(const F0Config& config, F0Track* track) {
  const std::size_t n = track->size();
  const std::size_t w = static_cast<std::size_t>(config.continuity_frames);
  std::vector<bool> keep(track->voiced);
  std::vector<double> near;
  for (std::size_t t = 0; t < n; ++t) {
    if (!track->voiced[t]) continue;
    near.clear();
    const std::size_t lo = t >= w ? t - w : 0;
    const std::size_t hi = std::min(n - 1, t + w);
    for (std::size_t u = lo; u <= hi; ++u) {
      if (u != t && track->voiced[u]) near.push_back(std::log(track->f0_hz[u]));
    }
    if (near.size() < 2) {
      keep[t] = false;
      continue;
    }
    std::sort(near.begin(), near.end());
    const std::size_t m = near.size();
    const double med = m % 2 ? near[m / 2] : 0.5 * (near[m / 2 - 1] + near[m / 2]);
    if (std::abs(std::log(track->f0_hz[t]) - med) > config.max_jump) keep[t] = false;
  }
  for (std::size_t t = 0; t < n; ++t) {
    if (track->voiced[t] && !keep[t]) {
      track->voiced[t] = false;
      track->f0_hz[t] = 0.0;
    }
  }
}

}  // namespace

F0Track estimate_f0(const AudioBuffer& buffer, const F0Config& config) {
  config.validate();
  if (buffer.empty()) throw ValidationError("estimate_f0: empty buffer");
  const double sr = buffer.sample_rate;
  const int frame = static_cast<int>(std::lround(config.frame_length * sr));
  const int hop = std::max(1, static_cast<int>(std::lround(config.hop * sr)));
  if (buffer.size() < static_cast<std::size_t>(frame)) {
    throw ValidationError("estimate_f0: buffer shorter than one analysis frame");
  }
  const int lag_min = std::max(2, static_cast<int>(std::floor(sr / config.fmax)));
  const int lag_max =
      std::min(frame - 2, static_cast<int>(std::ceil(sr / config.fmin)));

  const std::size_t frames = frame_count(buffer.size(), frame, hop);
  F0Track track;
  track.times.resize(frames);
  track.f0_hz.assign(frames, 0.0);
  track.voiced.assign(frames, false);
  track.periodicity.assign(frames, 0.0);

  const int nfft = next_pow2(2 * frame);
  RealFft fft(nfft);
  std::vector<double> padded(nfft, 0.0);
  std::vector<Complex> power(nfft / 2 + 1);
  std::vector<double> prefix(frame + 1);
  std::vector<double> r(lag_max + 2, 0.0);

  for (std::size_t t = 0; t < frames; ++t) {
    const std::size_t off = t * hop;
    track.times[t] = (off + frame / 2.0) / sr;
    const double* x = buffer.samples.data() + off;
    prefix[0] = 0.0;
    for (int i = 0; i < frame; ++i) prefix[i + 1] = prefix[i] + x[i] * x[i];
    const double frame_rms = std::sqrt(prefix[frame] / frame);
    if (frame_rms < config.silence_rms) continue;

    // Autocorrelation via |FFT|^2 of the zero-padded frame.
    std::fill(padded.begin(), padded.end(), 0.0);
    std::copy(x, x + frame, padded.begin());
    const std::vector<Complex>& spec = fft.forward(padded);
    for (std::size_t k = 0; k < power.size(); ++k) power[k] = std::norm(spec[k]);
    const std::vector<double>& ac = fft.inverse(power);

    for (int lag = lag_min - 1; lag <= lag_max + 1; ++lag) {
      const double e1 = prefix[frame - lag];
      const double e2 = prefix[frame] - prefix[lag];
      const double denom = std::sqrt(e1 * e2);
      r[lag] = denom > 1e-20 ? ac[lag] / denom : 0.0;
    }

    double best = -1.0;
    for (int lag = lag_min; lag <= lag_max; ++lag) {
      if (r[lag] >= r[lag - 1] && r[lag] > r[lag + 1]) best = std::max(best, r[lag]);
    }
    if (best <= 0.0) continue;
    // Earliest strong peak: later peaks at multiples of the period are
    // sub-octave candidates.
    int pick = -1;
    for (int lag = lag_min; lag <= lag_max; ++lag) {
      if (r[lag] >= r[lag - 1] && r[lag] > r[lag + 1] && r[lag] >= 0.9 * best) {
        pick = lag;
        break;
      }
    }
    const double a = r[pick - 1], b = r[pick], c = r[pick + 1];
    const double curvature = a - 2.0 * b + c;
    double delta = curvature < 0.0 ? 0.5 * (a - c) / curvature : 0.0;
    delta = std::clamp(delta, -0.5, 0.5);
    const double peak = b - 0.25 * (a - c) * delta;
    const double periodicity = std::clamp(peak, 0.0, 1.0);
    track.periodicity[t] = periodicity;
    if (periodicity >= config.voicing_threshold) {
      const double f0 = sr / (pick + delta);
      track.f0_hz[t] = std::clamp(f0, config.fmin, config.fmax);
      track.voiced[t] = true;
    }
  }
  if (config.continuity_frames > 0) remove_f0_outliers(config, &track);
  return track;
}

std::vector<double> energy_contour(const AudioBuffer& buffer, double frame_s,
                                   double hop_s) {
  if (buffer.empty()) throw ValidationError("energy_contour: empty buffer");
  const int frame =
      std::max(1, static_cast<int>(std::lround(frame_s * buffer.sample_rate)));
  const int hop =
      std::max(1, static_cast<int>(std::lround(hop_s * buffer.sample_rate)));
  if (buffer.size() < static_cast<std::size_t>(frame)) {
    throw ValidationError("energy_contour: buffer shorter than one frame");
  }
  const std::vector<double> w = hann_window(frame);
  const std::size_t frames = frame_count(buffer.size(), frame, hop);
  std::vector<double> out(frames);
  for (std::size_t t = 0; t < frames; ++t) {
    const double* x = buffer.samples.data() + t * hop;
    double acc = 0.0;
    for (int i = 0; i < frame; ++i) {
      const double v = w[i] * x[i];
      acc += v * v;
    }
    out[t] = std::sqrt(acc / frame);
  }
  return out;
}

FrameMatrix mel_to_linear(const MelSpectrogram& mel) {
  const Eigen::MatrixXd fb = mel_filterbank(mel.config);
  const Eigen::MatrixXd pinv =
      fb.completeOrthogonalDecomposition().pseudoInverse();  // bins x mels
  const double floor = mel.config.log_floor;
  // Subtracting the floor maps an all-floor frame to exact silence.
  const FrameMatrix energy = mel.frames.unaryExpr(
      [floor](double v) { return std::max(std::exp(v) - floor, 0.0); });
  FrameMatrix lin = energy * pinv.transpose();
  return lin.cwiseMax(0.0);
}

GriffinLimTrace griffin_lim_trace(const MelSpectrogram& mel, int iterations,
                                  std::uint64_t seed) {
  if (iterations < 0) throw ValidationError("griffin_lim: iterations must be >= 0");
  mel.config.validate();
  if (mel.frames.cols() != mel.config.n_mels) {
    throw ValidationError("griffin_lim: mel width does not match config");
  }
  GriffinLimTrace result;
  result.audio.sample_rate = mel.config.sample_rate;
  const int frames = mel.num_frames();
  if (frames == 0) return result;

  const int n = mel.config.frame_length;
  const int hop = mel.config.hop_length;
  const int bins = mel.config.n_bins();
  const FrameMatrix target = mel_to_linear(mel);
  const double target_norm = std::max(target.norm(), 1e-300);
  const std::vector<double> window = hann_window(n);
  RealFft fft(n);

  Rng rng(seed);
  std::vector<std::vector<Complex>> spectra(frames, std::vector<Complex>(bins));
  for (int t = 0; t < frames; ++t) {
    for (int k = 0; k < bins; ++k) {
      spectra[t][k] = std::polar(target(t, k), 2.0 * std::numbers::pi * rng.uniform());
    }
  }

  std::vector<std::vector<Complex>> rebuilt;
  auto project = [&](std::vector<double>* signal) {
    *signal = istft(spectra, window, hop, &fft);
    stft(*signal, window, hop, &fft, &rebuilt);
    double err = 0.0;
    for (int t = 0; t < frames; ++t) {
      for (int k = 0; k < bins; ++k) {
        const double d = std::abs(rebuilt[t][k]) - target(t, k);
        err += d * d;
      }
    }
    return std::sqrt(err) / target_norm;
  };

  std::vector<double> signal;
  result.spectral_convergence.push_back(project(&signal));
  for (int it = 0; it < iterations; ++it) {
    for (int t = 0; t < frames; ++t) {
      for (int k = 0; k < bins; ++k) {
        const Complex z = rebuilt[t][k];
        const double mag = std::abs(z);
        const Complex phase = mag > 1e-300 ? z / mag : Complex(1.0, 0.0);
        spectra[t][k] = target(t, k) * phase;
      }
    }
    result.spectral_convergence.push_back(project(&signal));
  }
  result.audio.samples = std::move(signal);
  return result;
}

AudioBuffer griffin_lim(const MelSpectrogram& mel, int iterations,
                        std::uint64_t seed) {
  AudioBuffer out = griffin_lim_trace(mel, iterations, seed).audio;
  double peak = 0.0;
  for (double v : out.samples) peak = std::max(peak, std::abs(v));
  if (peak >= 1e-6) {
    const double g = 0.95 / peak;
    for (double& v : out.samples) v *= g;
  }
  return out;
}

}  // namespace phmm
