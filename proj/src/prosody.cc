// phmm/prosody.cc

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

#include "phmm/prosody.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace phmm {

namespace {

std::vector<double> moving_average(const std::vector<double>& x, int width) {
  const int n = static_cast<int>(x.size());
  const int half = width / 2;
  std::vector<double> prefix(n + 1, 0.0);
  for (int i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + x[i];
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) {
    const int lo = std::max(0, i - half);
    const int hi = std::min(n, i - half + width);
    // Zero padding beyond the edges: divide by the full width.
    out[i] = (prefix[hi] - prefix[lo]) / width;
  }
  return out;
}

// Local maxima, flat tops reported at their midpoint.
std::vector<int> local_maxima(const std::vector<double>& y) {
  std::vector<int> peaks;
  const int n = static_cast<int>(y.size());
  int i = 1;
  while (i < n - 1) {
    if (y[i - 1] < y[i]) {
      int j = i;
      while (j + 1 < n && y[j + 1] == y[i]) ++j;
      if (j + 1 < n && y[j + 1] < y[i]) {
        peaks.push_back((i + j) / 2);
        i = j;
      }
    }
    ++i;
  }
  return peaks;
}

double prominence(const std::vector<double>& y, int p) {
  const int n = static_cast<int>(y.size());
  double left_min = y[p];
  for (int i = p - 1; i >= 0 && y[i] <= y[p]; --i) left_min = std::min(left_min, y[i]);
  double right_min = y[p];
  for (int i = p + 1; i < n && y[i] <= y[p]; ++i) right_min = std::min(right_min, y[i]);
  return y[p] - std::max(left_min, right_min);
}

// Greedy by height: drop any peak closer than `distance` to a taller kept one.
std::vector<int> enforce_spacing(const std::vector<double>& y,
                                 const std::vector<int>& peaks, int distance) {
  std::vector<int> order(peaks.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return y[peaks[a]] > y[peaks[b]]; });
  std::vector<bool> keep(peaks.size(), true);
  for (int a : order) {
    if (!keep[a]) continue;
    for (std::size_t b = 0; b < peaks.size(); ++b) {
      if (static_cast<int>(b) != a && keep[b] &&
          std::abs(peaks[b] - peaks[a]) < distance) {
        keep[b] = false;
      }
    }
  }
  std::vector<int> out;
  for (std::size_t i = 0; i < peaks.size(); ++i) {
    if (keep[i]) out.push_back(peaks[i]);
  }
  return out;
}

struct NucleiResult {
  std::size_t nuclei = 0;
  double speech_seconds = 0.0;
};

NucleiResult find_nuclei(const AudioBuffer& buffer, const SpeechRateConfig& cfg) {
  if (buffer.empty()) throw ValidationError("speech rate: empty buffer");
  NucleiResult result;
  const int frame = static_cast<int>(std::lround(cfg.frame_s * buffer.sample_rate));
  if (buffer.size() < static_cast<std::size_t>(std::max(frame, 1))) return result;
  const std::vector<double> energy =
      energy_contour(buffer, cfg.frame_s, cfg.hop_s);
  if (energy.empty()) return result;

  // Speech duration: everything except long silent runs.
  double silent = 0.0;
  std::size_t run = 0;
  auto close_run = [&]() {
    if (run * cfg.hop_s >= cfg.min_pause_s - 1e-9) silent += run * cfg.hop_s;
    run = 0;
  };
  for (double e : energy) {
    if (e < cfg.silence_rms) {
      ++run;
    } else {
      close_run();
    }
  }
  close_run();
  result.speech_seconds = std::max(0.0, buffer.duration() - silent);

  const double top = *std::max_element(energy.begin(), energy.end());
  if (top < cfg.silence_rms) return result;

  const int width =
      std::max(1, static_cast<int>(std::lround(cfg.smoothing_s / cfg.hop_s)));
  const std::vector<double> smooth = moving_average(energy, width);
  const double smooth_max = *std::max_element(smooth.begin(), smooth.end());
  std::vector<int> peaks;
  for (int p : local_maxima(smooth)) {
    if (energy[p] < cfg.silence_rms) continue;
    if (prominence(smooth, p) < cfg.prominence * smooth_max) continue;
    peaks.push_back(p);
  }
  const int distance =
      std::max(1, static_cast<int>(std::lround(cfg.min_spacing_s / cfg.hop_s)));
  result.nuclei = enforce_spacing(smooth, peaks, distance).size();
  return result;
}

}  // namespace

Standardizer::Standardizer(std::array<double, 3> means,
                           std::array<double, 3> stds, std::string corpus_id)
    : means_(means), stds_(stds), corpus_id_(std::move(corpus_id)) {
  for (int i = 0; i < 3; ++i) {
    if (!std::isfinite(means_[i])) {
      throw ValidationError(std::string("standardizer: non-finite mean for ") +
                            kFeatureNames[i]);
    }
    if (!(stds_[i] > 0.0) || !std::isfinite(stds_[i])) {
      throw ValidationError(std::string("standardizer: std must be positive for ") +
                            kFeatureNames[i]);
    }
  }
}

nlohmann::json Standardizer::to_json() const {
  return nlohmann::json{{"corpus_id", corpus_id_},
                        {"means", means_},
                        {"stds", stds_},
                        {"version", kVersion}};
}

Standardizer Standardizer::from_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<int>() != kVersion) {
      throw FormatError("standardizer: unsupported version");
    }
    return Standardizer(j.at("means").get<std::array<double, 3>>(),
                        j.at("stds").get<std::array<double, 3>>(),
                        j.at("corpus_id").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("standardizer: ") + e.what());
  }
}

void Standardizer::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_json().dump(2) << "\n";
}

Standardizer Standardizer::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open standardizer " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("standardizer " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

double estimate_speech_rate(const AudioBuffer& buffer,
                            const SpeechRateConfig& config) {
  const NucleiResult r = find_nuclei(buffer, config);
  if (r.nuclei == 0 || r.speech_seconds <= 0.0) return 0.0;
  return static_cast<double>(r.nuclei) / r.speech_seconds;
}

std::size_t count_syllable_nuclei(const AudioBuffer& buffer,
                                  const SpeechRateConfig& config) {
  return find_nuclei(buffer, config).nuclei;
}

ProsodyFeatures extract_features(const AudioBuffer& buffer,
                                 const F0Config& f0_config,
                                 const SpeechRateConfig& rate_config) {
  const F0Track track = estimate_f0(buffer, f0_config);
  std::vector<double> logs;
  for (std::size_t t = 0; t < track.size(); ++t) {
    if (track.voiced[t]) logs.push_back(std::log(track.f0_hz[t]));
  }
  if (logs.size() < 3) {
    throw UnvoicedUtteranceError("unvoiced utterance: " +
                                 std::to_string(logs.size()) + " voiced frames");
  }
  const double n = static_cast<double>(logs.size());
  const double mean = std::accumulate(logs.begin(), logs.end(), 0.0) / n;
  double var = 0.0;
  for (double v : logs) var += (v - mean) * (v - mean);
  ProsodyFeatures f;
  f.mean_log_f0 = mean;
  f.f0_std = std::sqrt(var / n);
  f.speech_rate = estimate_speech_rate(buffer, rate_config);
  return f;
}

CreakReport measure_creak(const AudioBuffer& buffer, const F0Config& f0_config,
                          double creak_f0_ceiling) {
  if (buffer.empty()) throw ValidationError("measure_creak: empty buffer");
  CreakReport report;
  const std::size_t frame =
      static_cast<std::size_t>(std::lround(f0_config.frame_length * buffer.sample_rate));
  if (buffer.size() < frame) return report;
  const F0Track track = estimate_f0(buffer, f0_config);
  report.total_frames = track.size();
  report.frame_class.assign(track.size(), 0);
  for (std::size_t t = 0; t < track.size(); ++t) {
    if (!track.voiced[t]) continue;
    ++report.voiced_frames;
    if (track.f0_hz[t] < creak_f0_ceiling) {
      ++report.creaky_frames;
      report.frame_class[t] = 2;
    } else {
      report.frame_class[t] = 1;
    }
  }
  report.creak_fraction = 100.0 * static_cast<double>(report.creaky_frames) /
                          static_cast<double>(std::max<std::size_t>(report.voiced_frames, 1));
  return report;
}

Standardizer fit_standardizer(const std::vector<ProsodyFeatures>& features,
                              const std::string& corpus_id) {
  if (features.size() < 2) {
    throw ValidationError("fit_standardizer: need at least two utterances");
  }
  const double n = static_cast<double>(features.size());
  std::array<double, 3> means{}, stds{};
  for (int d = 0; d < 3; ++d) {
    double sum = 0.0;
    for (const auto& f : features) sum += f.as_array()[d];
    means[d] = sum / n;
    double var = 0.0;
    for (const auto& f : features) {
      const double dv = f.as_array()[d] - means[d];
      var += dv * dv;
    }
    stds[d] = std::sqrt(var / n);
    if (stds[d] < 1e-9) {
      throw ValidationError(std::string("fit_standardizer: degenerate dimension ") +
                            kFeatureNames[d] + " (zero variance)");
    }
  }
  return Standardizer(means, stds, corpus_id);
}

StandardizedFeatures standardize(const ProsodyFeatures& features,
                                 const Standardizer& s) {
  const auto x = features.as_array();
  std::array<double, 3> z{};
  for (int d = 0; d < 3; ++d) z[d] = (x[d] - s.means()[d]) / s.stds()[d];
  return StandardizedFeatures::from_array(z);
}

ProsodyFeatures destandardize(const StandardizedFeatures& z,
                              const Standardizer& s) {
  const auto v = z.as_array();
  std::array<double, 3> x{};
  for (int d = 0; d < 3; ++d) x[d] = v[d] * s.stds()[d] + s.means()[d];
  return ProsodyFeatures::from_array(x);
}

}  // namespace phmm
