// phmm/prosody.hpp

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

// Utterance-level prosodic controls: mean log-f0, log-f0 variability and
// speech rate, their corpus z-standardisation, and a low-f0 creak proxy.

#ifndef PHMM_PROSODY_HPP_
#define PHMM_PROSODY_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "phmm/audio.hpp"
#include "phmm/dsp.hpp"
#include "phmm/error.hpp"

namespace phmm {

/// Raw controls. Both f0 statistics live on the natural-log scale.
struct ProsodyFeatures {
  double mean_log_f0 = 0.0;
  double f0_std = 0.0;
  double speech_rate = 0.0;  // syllables per second

  std::array<double, 3> as_array() const {
    return {mean_log_f0, f0_std, speech_rate};
  }
  static ProsodyFeatures from_array(const std::array<double, 3>& a) {
    return {a[0], a[1], a[2]};
  }
};

/// Controls in corpus standard-deviation units. Component order matches
/// ProsodyFeatures: pitch, f0 variability, rate.
struct StandardizedFeatures {
  double pitch = 0.0;
  double f0_std = 0.0;
  double rate = 0.0;

  std::array<double, 3> as_array() const { return {pitch, f0_std, rate}; }
  static StandardizedFeatures from_array(const std::array<double, 3>& a) {
    return {a[0], a[1], a[2]};
  }
  bool operator==(const StandardizedFeatures&) const = default;
};

inline constexpr std::array<const char*, 3> kFeatureNames = {
    "mean_log_f0", "f0_std", "speech_rate"};

/// Per-dimension corpus mean and population standard deviation.
class Standardizer {
 public:
  static constexpr int kVersion = 1;

  Standardizer(std::array<double, 3> means, std::array<double, 3> stds,
               std::string corpus_id);

  const std::array<double, 3>& means() const { return means_; }
  const std::array<double, 3>& stds() const { return stds_; }
  const std::string& corpus_id() const { return corpus_id_; }

  nlohmann::json to_json() const;
  static Standardizer from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static Standardizer load(const std::filesystem::path& path);

 private:
  std::array<double, 3> means_;
  std::array<double, 3> stds_;
  std::string corpus_id_;
};

/// Thrown when an utterance has too few voiced frames to summarise.
class UnvoicedUtteranceError : public Error {
 public:
  using Error::Error;
};

struct SpeechRateConfig {
  double frame_s = 0.025;
  double hop_s = 0.010;
  double smoothing_s = 0.100;   // moving-average width
  double prominence = 0.3;      // relative to the contour maximum
  double min_spacing_s = 0.120;
  double min_pause_s = 0.300;   // silent runs at least this long are not speech
  double silence_rms = 1e-4;
};

struct CreakReport {
  double creak_fraction = 0.0;  // percent of voiced frames
  std::size_t creaky_frames = 0;
  std::size_t voiced_frames = 0;
  std::size_t total_frames = 0;
  // Per f0 frame: 0 unvoiced, 1 modal voiced, 2 creaky.
  std::vector<std::uint8_t> frame_class;
};

/// Syllable nuclei per second of speech. Nuclei are prominent peaks of the
/// smoothed energy contour; silent runs of min_pause_s or more are excluded
/// from the speech duration.
double estimate_speech_rate(const AudioBuffer& buffer,
                            const SpeechRateConfig& config = {});

/// Number of nuclei found by estimate_speech_rate.
std::size_t count_syllable_nuclei(const AudioBuffer& buffer,
                                  const SpeechRateConfig& config = {});

ProsodyFeatures extract_features(const AudioBuffer& buffer,
                                 const F0Config& f0_config = {},
                                 const SpeechRateConfig& rate_config = {});

/// Voiced frames with f0 below creak_f0_ceiling count as creaky.
CreakReport measure_creak(const AudioBuffer& buffer,
                          const F0Config& f0_config = {},
                          double creak_f0_ceiling = 70.0);

Standardizer fit_standardizer(const std::vector<ProsodyFeatures>& features,
                              const std::string& corpus_id);

StandardizedFeatures standardize(const ProsodyFeatures& features,
                                 const Standardizer& s);

ProsodyFeatures destandardize(const StandardizedFeatures& z,
                              const Standardizer& s);

}  // namespace phmm

#endif  // PHMM_PROSODY_HPP_
