// phmm/corpus.hpp

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

// Corpus preparation: breath-group segmentation of long recordings,
// overlapping bigram utterances, character tokenisation and the JSONL
// training manifest.

#ifndef PHMM_CORPUS_HPP_
#define PHMM_CORPUS_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "phmm/audio.hpp"
#include "phmm/dsp.hpp"
#include "phmm/prosody.hpp"

namespace phmm {

/// Symbol table. Ids 0 and 1 are always the BOS and EOS sentinels.
class Vocabulary {
 public:
  static constexpr int kBos = 0;
  static constexpr int kEos = 1;

  Vocabulary();
  explicit Vocabulary(std::vector<std::string> symbols);

  int size() const { return static_cast<int>(symbols_.size()); }
  const std::string& symbol(int id) const { return symbols_.at(id); }
  const std::vector<std::string>& symbols() const { return symbols_; }
  std::optional<int> find(std::string_view symbol) const;
  int add(const std::string& symbol);

  /// Once frozen, tokenize() rejects symbols missing from the table.
  void freeze() { frozen_ = true; }
  bool frozen() const { return frozen_; }

  bool operator==(const Vocabulary& o) const { return symbols_ == o.symbols_; }

 private:
  std::vector<std::string> symbols_;
  std::map<std::string, int, std::less<>> index_;
  bool frozen_ = false;
};

struct SymbolSequence {
  std::vector<int> ids;  // includes the leading BOS and trailing EOS

  std::size_t size() const { return ids.size(); }
};

/// Thrown by tokenize() against a frozen vocabulary; lists the offenders.
class UnknownSymbolError : public ValidationError {
 public:
  UnknownSymbolError(std::vector<std::string> symbols);
  const std::vector<std::string>& symbols() const { return symbols_; }

 private:
  std::vector<std::string> symbols_;
};

/// Text normalisation applied by tokenize(), returned as symbol strings:
/// lowercase, only [a-z '.,?] and bracketed tags such as "[uh]", single
/// spaces, trimmed.
std::vector<std::string> text_symbols(std::string_view text);

/// BOS + text_symbols(text) + EOS. Grows the vocabulary unless it is frozen.
SymbolSequence tokenize(std::string_view text, Vocabulary* vocabulary);

/// Inverse of tokenize on its own output alphabet (sentinels dropped).
std::string detokenize(const SymbolSequence& seq, const Vocabulary& vocabulary);

struct BreathGroup {
  double start_s = 0.0;
  double end_s = 0.0;
  std::string text;

  double duration() const { return end_s - start_s; }
};

struct SegConfig {
  double pause_threshold_s = 0.25;
  double silence_rms = 1e-3;
  double min_group_s = 0.4;
  double max_duration_s = 11.0;
  double frame_s = 0.025;
  double hop_s = 0.010;

  void validate() const;
};

/// Splits a recording at silent runs of at least pause_threshold_s. Groups
/// whose speech extent is shorter than min_group_s are merged into the
/// following group (the preceding one for the last).
std::vector<BreathGroup> segment_breath_groups(const AudioBuffer& buffer,
                                               const SegConfig& config);

/// Overlapping pairs of consecutive groups, falling back to singletons when a
/// pair would exceed max_duration_s. Groups that are themselves longer than
/// the cap are dropped.
std::vector<BreathGroup> build_bigrams(const std::vector<BreathGroup>& groups,
                                       const SegConfig& config);

enum class Split { kTrain, kHeldout };

struct UtteranceRecord {
  std::string id;
  std::string audio_path;  // relative to the manifest directory
  std::string text;
  double duration_s = 0.0;
  ProsodyFeatures features;
  StandardizedFeatures z;
  Split split = Split::kTrain;
};

nlohmann::json to_json(const UtteranceRecord& r);
UtteranceRecord record_from_json(const nlohmann::json& j);

struct Manifest {
  std::vector<UtteranceRecord> records;
  std::filesystem::path directory;  // base for relative audio paths

  std::filesystem::path audio_path(const UtteranceRecord& r) const {
    return directory / r.audio_path;
  }
  std::vector<const UtteranceRecord*> with_split(Split split) const;
};

void write_manifest(const std::vector<UtteranceRecord>& records,
                    const std::filesystem::path& path);
Manifest read_manifest(const std::filesystem::path& path);

struct SourceRecording {
  std::filesystem::path audio;
  std::filesystem::path transcript;  // one line per breath group
};

struct PipelineConfig {
  SegConfig seg;
  F0Config f0;
  SpeechRateConfig rate;
  std::string corpus_id = "corpus";
};

struct ManifestBuild {
  std::vector<UtteranceRecord> records;
  Standardizer standardizer;
  std::size_t groups = 0;
  std::size_t bigrams = 0;
  std::size_t dropped = 0;
  std::vector<std::string> log;
};

/// Reads each transcript sidecar; line count must equal the group count.
std::vector<std::string> read_transcript(const std::filesystem::path& path);

/// Segments, pairs, writes one WAV per utterance under out_dir/wavs,
/// extracts and standardises features, then writes out_dir/manifest.jsonl
/// and out_dir/standardizer.json. Utterances without enough voicing are
/// dropped and logged.
ManifestBuild build_manifest(const std::vector<SourceRecording>& sources,
                             const PipelineConfig& config,
                             const std::filesystem::path& out_dir);

/// Seeded shuffle; floor(n * fraction) records become held-out.
void split_train_heldout(std::vector<UtteranceRecord>* records,
                         double heldout_fraction, std::uint64_t seed);

}  // namespace phmm

#endif  // PHMM_CORPUS_HPP_
