// phmm/audio.hpp

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

#ifndef PHMM_AUDIO_HPP_
#define PHMM_AUDIO_HPP_

#include <filesystem>
#include <span>
#include <vector>

namespace phmm {

/// Mono signal with amplitudes nominally in [-1, 1].
struct AudioBuffer {
  std::vector<double> samples;
  int sample_rate = 22050;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  double duration() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }

  /// Copy of samples [begin, end), clipped to the buffer.
  AudioBuffer slice(std::size_t begin, std::size_t end) const;

  /// Throws ValidationError if the sample rate is not positive or any
  /// sample is non-finite.
  void validate() const;
};

/// Reads a RIFF/WAVE file holding 16-bit integer PCM or 32-bit float
/// samples. Stereo is averaged down to mono.
///
/// Throws IoError for a missing/unreadable file, FormatError for a broken
/// RIFF structure and UnsupportedFormatError for any other codec.
AudioBuffer load_wav(const std::filesystem::path& path);

/// Writes 16-bit mono PCM; samples are clamped to [-1, 1] first.
void save_wav(const AudioBuffer& buffer, const std::filesystem::path& path);

/// Appends b to a. Sample rates must agree.
AudioBuffer concatenate(const AudioBuffer& a, const AudioBuffer& b);

double rms(std::span<const double> x);

}  // namespace phmm

#endif  // PHMM_AUDIO_HPP_
