// phmm/audio.cc

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

#include "phmm/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "phmm/error.hpp"

namespace phmm {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_u16(std::string* out, std::uint16_t v) {
  out->push_back(static_cast<char>(v & 0xFF));
  out->push_back(static_cast<char>((v >> 8) & 0xFF));
}

void put_u32(std::string* out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out->push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

}  // namespace

AudioBuffer AudioBuffer::slice(std::size_t begin, std::size_t end) const {
  end = std::min(end, samples.size());
  begin = std::min(begin, end);
  AudioBuffer out;
  out.sample_rate = sample_rate;
  out.samples.assign(samples.begin() + static_cast<std::ptrdiff_t>(begin),
                     samples.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

void AudioBuffer::validate() const {
  if (sample_rate <= 0) throw ValidationError("sample_rate must be positive");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!std::isfinite(samples[i])) {
      throw ValidationError("non-finite sample at index " + std::to_string(i));
    }
  }
}

AudioBuffer load_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open wav file: " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  const std::string where = " in " + path.string();
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw FormatError("missing RIFF/WAVE header" + where);
  }

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  bool have_data = false;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) {
      // Tolerate a truncated data chunk from writers that never patched the
      // size field, but nothing else.
      if (std::memcmp(chunk, "data", 4) != 0) {
        throw FormatError("chunk overruns end of file" + where);
      }
    }
    const std::size_t avail = std::min<std::size_t>(size, bytes.size() - body);
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (avail < 16) throw FormatError("fmt chunk too short" + where);
      format = read_u16(chunk + 8);
      channels = read_u16(chunk + 10);
      rate = read_u32(chunk + 12);
      bits = read_u16(chunk + 22);
      if (format == kFormatExtensible && avail >= 26) {
        format = read_u16(chunk + 8 + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      data_size = avail;
      have_data = true;
    }
    pos = body + size + (size & 1);
  }
  if (!have_fmt) throw FormatError("no fmt chunk" + where);
  if (!have_data) throw FormatError("no data chunk" + where);
  if (rate == 0) throw FormatError("zero sample rate" + where);
  if (channels != 1 && channels != 2) {
    throw UnsupportedFormatError("unsupported channel count " +
                                 std::to_string(channels) + where);
  }
  const bool pcm16 = format == kFormatPcm && bits == 16;
  const bool float32 = format == kFormatFloat && bits == 32;
  if (!pcm16 && !float32) {
    throw UnsupportedFormatError("unsupported codec (format " +
                                 std::to_string(format) + ", " +
                                 std::to_string(bits) + " bits)" + where);
  }

  const std::size_t bytes_per_sample = bits / 8;
  const std::size_t frame_bytes = bytes_per_sample * channels;
  const std::size_t n = data_size / frame_bytes;

  AudioBuffer out;
  out.sample_rate = static_cast<int>(rate);
  out.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const unsigned char* p = data + i * frame_bytes + c * bytes_per_sample;
      if (pcm16) {
        acc += static_cast<std::int16_t>(read_u16(p)) / 32768.0;
      } else {
        const std::uint32_t raw = read_u32(p);
        float f;
        std::memcpy(&f, &raw, sizeof(f));
        acc += f;
      }
    }
    out.samples[i] = acc / channels;
  }
  return out;
}

void save_wav(const AudioBuffer& buffer, const std::filesystem::path& path) {
  if (buffer.empty()) throw ValidationError("save_wav: empty buffer");
  if (buffer.sample_rate <= 0) throw ValidationError("save_wav: bad sample rate");
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(buffer.size() * 2);

  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  put_u32(&out, 36 + data_bytes);
  out += "WAVE";
  out += "fmt ";
  put_u32(&out, 16);
  put_u16(&out, kFormatPcm);
  put_u16(&out, 1);
  put_u32(&out, static_cast<std::uint32_t>(buffer.sample_rate));
  put_u32(&out, static_cast<std::uint32_t>(buffer.sample_rate) * 2);
  put_u16(&out, 2);
  put_u16(&out, 16);
  out += "data";
  put_u32(&out, data_bytes);
  for (double x : buffer.samples) {
    if (std::isnan(x)) x = 0.0;
    x = std::clamp(x, -1.0, 1.0);
    const long q = std::clamp(std::lround(x * 32768.0), -32768L, 32767L);
    put_u16(&out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write wav file: " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write failed: " + path.string());
}

AudioBuffer concatenate(const AudioBuffer& a, const AudioBuffer& b) {
  if (a.sample_rate != b.sample_rate) {
    throw ValidationError("concatenate: sample rates differ");
  }
  AudioBuffer out = a;
  out.samples.insert(out.samples.end(), b.samples.begin(), b.samples.end());
  return out;
}

double rms(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return std::sqrt(acc / static_cast<double>(x.size()));
}

}  // namespace phmm
