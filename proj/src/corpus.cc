// phmm/corpus.cc

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

#include "phmm/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "phmm/error.hpp"
#include "phmm/rng.hpp"

namespace phmm {

namespace {

bool is_plain_symbol(char c) {
  return (c >= 'a' && c <= 'z') || c == '\'' || c == ',' || c == '.' || c == '?';
}

std::string join_text(const std::string& a, const std::string& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  return a + " " + b;
}

}  // namespace

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{"<bos>", "<eos>"}) {}

Vocabulary::Vocabulary(std::vector<std::string> symbols)
    : symbols_(std::move(symbols)) {
  if (symbols_.size() < 2 || symbols_[kBos] != "<bos>" || symbols_[kEos] != "<eos>") {
    throw ValidationError("vocabulary must start with <bos>, <eos>");
  }
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    if (!index_.emplace(symbols_[i], static_cast<int>(i)).second) {
      throw ValidationError("duplicate vocabulary symbol '" + symbols_[i] + "'");
    }
  }
}

std::optional<int> Vocabulary::find(std::string_view symbol) const {
  auto it = index_.find(symbol);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

int Vocabulary::add(const std::string& symbol) {
  if (auto id = find(symbol)) return *id;
  const int id = size();
  symbols_.push_back(symbol);
  index_.emplace(symbol, id);
  return id;
}

static std::string describe_unknown(const std::vector<std::string>& symbols) {
  std::string msg = "unknown symbols:";
  for (const auto& s : symbols) msg += " '" + s + "'";
  return msg;
}

UnknownSymbolError::UnknownSymbolError(std::vector<std::string> symbols)
    : ValidationError(describe_unknown(symbols)), symbols_(std::move(symbols)) {}

std::vector<std::string> text_symbols(std::string_view text) {
  std::string s(text);
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  std::vector<std::string> out;
  bool pending_space = false;
  auto emit = [&](std::string tok) {
    if (pending_space && !out.empty()) out.emplace_back(" ");
    pending_space = false;
    out.push_back(std::move(tok));
  };
  std::size_t i = 0;
  while (i < s.size()) {
    const char c = s[i];
    if (c == '[') {
      const std::size_t close = s.find(']', i + 1);
      if (close != std::string::npos && close > i + 1) {
        const std::string inner = s.substr(i + 1, close - i - 1);
        const bool ok = std::all_of(inner.begin(), inner.end(), [](char ch) {
          return (ch >= 'a' && ch <= 'z') || ch == '_';
        });
        if (ok) {
          emit("[" + inner + "]");
          i = close + 1;
          continue;
        }
      }
      ++i;
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = true;
    } else if (is_plain_symbol(c)) {
      emit(std::string(1, c));
    }
    ++i;
  }
  return out;
}

SymbolSequence tokenize(std::string_view text, Vocabulary* vocabulary) {
  const std::vector<std::string> symbols = text_symbols(text);
  if (symbols.empty()) throw ValidationError("empty symbol sequence");
  SymbolSequence seq;
  seq.ids.reserve(symbols.size() + 2);
  seq.ids.push_back(Vocabulary::kBos);
  std::vector<std::string> unknown;
  for (const auto& sym : symbols) {
    if (auto id = vocabulary->find(sym)) {
      seq.ids.push_back(*id);
    } else if (vocabulary->frozen()) {
      if (std::find(unknown.begin(), unknown.end(), sym) == unknown.end()) {
        unknown.push_back(sym);
      }
    } else {
      seq.ids.push_back(vocabulary->add(sym));
    }
  }
  if (!unknown.empty()) throw UnknownSymbolError(std::move(unknown));
  seq.ids.push_back(Vocabulary::kEos);
  return seq;
}

std::string detokenize(const SymbolSequence& seq, const Vocabulary& vocabulary) {
  std::string out;
  for (int id : seq.ids) {
    if (id == Vocabulary::kBos || id == Vocabulary::kEos) continue;
    out += vocabulary.symbol(id);
  }
  return out;
}

void SegConfig::validate() const {
  if (!(pause_threshold_s > 0 && silence_rms > 0 && min_group_s > 0 &&
        max_duration_s > 0 && frame_s > 0 && hop_s > 0)) {
    throw ValidationError("segmentation: all settings must be positive");
  }
  if (min_group_s >= max_duration_s) {
    throw ValidationError("segmentation: min_group_s must be < max_duration_s");
  }
}

std::vector<BreathGroup> segment_breath_groups(const AudioBuffer& buffer,
                                               const SegConfig& config) {
  config.validate();
  if (buffer.empty()) throw ValidationError("segment_breath_groups: empty buffer");
  const double sr = buffer.sample_rate;
  const int frame = std::max(1, static_cast<int>(std::lround(config.frame_s * sr)));
  const int hop = std::max(1, static_cast<int>(std::lround(config.hop_s * sr)));
  const double total = buffer.duration();

  if (buffer.size() < static_cast<std::size_t>(frame)) {
    if (rms(buffer.samples) < config.silence_rms) return {};
    return {BreathGroup{0.0, total, ""}};
  }
  const std::vector<double> energy = energy_contour(buffer, config.frame_s, config.hop_s);
  const int n = static_cast<int>(energy.size());
  auto start_of = [&](int i) { return static_cast<double>(i) * hop / sr; };
  auto end_of = [&](int i) { return std::min(total, (static_cast<double>(i) * hop + frame) / sr); };
  auto center_of = [&](int i) { return (static_cast<double>(i) * hop + frame / 2.0) / sr; };

  struct Region {
    int first, last;          // speech frames
    double start, end;        // group boundaries
  };
  std::vector<Region> regions;
  int i = 0;
  double pending_start = 0.0;
  while (i < n) {
    if (energy[i] < config.silence_rms) {
      int j = i;
      while (j + 1 < n && energy[j + 1] < config.silence_rms) ++j;
      const bool long_run = (j - i + 1) * config.hop_s >= config.pause_threshold_s - 1e-9;
      const double mid = 0.5 * (center_of(i) + center_of(j));
      if (i == 0) {
        pending_start = long_run ? mid : 0.0;
      } else if (j == n - 1) {
        if (!regions.empty()) regions.back().end = long_run ? mid : total;
      } else if (long_run) {
        regions.back().end = mid;
        pending_start = mid;
      }
      i = j + 1;
      continue;
    }
    int j = i;
    while (j + 1 < n && energy[j + 1] >= config.silence_rms) ++j;
    // Short pauses do not split a group; extend the open region.
    if (!regions.empty() && regions.back().end < 0.0) {
      regions.back().last = j;
    } else {
      regions.push_back(Region{i, j, pending_start, -1.0});
    }
    if (j == n - 1) regions.back().end = total;
    i = j + 1;
  }
  if (regions.empty()) return {};
  for (auto& r : regions) {
    if (r.end < 0.0) r.end = total;
  }

  // Merge groups whose speech extent is too short.
  auto extent = [&](const Region& r) { return end_of(r.last) - start_of(r.first); };
  std::size_t k = 0;
  while (k < regions.size() && regions.size() > 1) {
    if (extent(regions[k]) >= config.min_group_s) {
      ++k;
      continue;
    }
    if (k + 1 < regions.size()) {
      regions[k + 1].first = regions[k].first;
      regions[k + 1].start = regions[k].start;
      regions.erase(regions.begin() + static_cast<std::ptrdiff_t>(k));
    } else {
      regions[k - 1].last = regions[k].last;
      regions[k - 1].end = regions[k].end;
      regions.erase(regions.begin() + static_cast<std::ptrdiff_t>(k));
      break;
    }
  }

  std::vector<BreathGroup> groups;
  for (const auto& r : regions) groups.push_back(BreathGroup{r.start, r.end, ""});
  return groups;
}

std::vector<BreathGroup> build_bigrams(const std::vector<BreathGroup>& groups,
                                       const SegConfig& config) {
  std::vector<BreathGroup> out;
  const double cap = config.max_duration_s + 1e-9;
  std::vector<bool> covered(groups.size(), false);
  for (std::size_t i = 0; i + 1 < groups.size(); ++i) {
    const BreathGroup pair{groups[i].start_s, groups[i + 1].end_s,
                           join_text(groups[i].text, groups[i + 1].text)};
    if (pair.duration() <= cap) {
      out.push_back(pair);
      covered[i] = covered[i + 1] = true;
    }
  }
  for (std::size_t i = 0; i < groups.size(); ++i) {
    if (!covered[i] && groups[i].duration() <= cap) out.push_back(groups[i]);
  }
  std::sort(out.begin(), out.end(), [](const BreathGroup& a, const BreathGroup& b) {
    return a.start_s != b.start_s ? a.start_s < b.start_s : a.end_s < b.end_s;
  });
  return out;
}

nlohmann::json to_json(const UtteranceRecord& r) {
  return nlohmann::json{
      {"id", r.id},
      {"audio_path", r.audio_path},
      {"text", r.text},
      {"duration_s", r.duration_s},
      {"features",
       {{"mean_log_f0", r.features.mean_log_f0},
        {"f0_std", r.features.f0_std},
        {"speech_rate", r.features.speech_rate}}},
      {"z", {{"pitch", r.z.pitch}, {"f0_std", r.z.f0_std}, {"rate", r.z.rate}}},
      {"split", r.split == Split::kTrain ? "train" : "heldout"}};
}

UtteranceRecord record_from_json(const nlohmann::json& j) {
  UtteranceRecord r;
  r.id = j.at("id").get<std::string>();
  r.audio_path = j.at("audio_path").get<std::string>();
  r.text = j.at("text").get<std::string>();
  r.duration_s = j.at("duration_s").get<double>();
  const auto& f = j.at("features");
  r.features = {f.at("mean_log_f0").get<double>(), f.at("f0_std").get<double>(),
                f.at("speech_rate").get<double>()};
  const auto& z = j.at("z");
  r.z = {z.at("pitch").get<double>(), z.at("f0_std").get<double>(),
         z.at("rate").get<double>()};
  const std::string split = j.at("split").get<std::string>();
  if (split == "train") {
    r.split = Split::kTrain;
  } else if (split == "heldout") {
    r.split = Split::kHeldout;
  } else {
    throw FormatError("unknown split '" + split + "'");
  }
  return r;
}

std::vector<const UtteranceRecord*> Manifest::with_split(Split split) const {
  std::vector<const UtteranceRecord*> out;
  for (const auto& r : records) {
    if (r.split == split) out.push_back(&r);
  }
  return out;
}

void write_manifest(const std::vector<UtteranceRecord>& records,
                    const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path.string());
  for (const auto& r : records) out << to_json(r).dump() << "\n";
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  Manifest m;
  m.directory = path.parent_path();
  std::string line;
  int lineno = 0;
  std::set<std::string> ids;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      m.records.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const FormatError& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (!ids.insert(m.records.back().id).second) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) +
                        ": duplicate id " + m.records.back().id);
    }
  }
  return m;
}

std::vector<std::string> read_transcript(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("missing transcript sidecar: " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  // A trailing blank line is an artefact of the final newline convention.
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

ManifestBuild build_manifest(const std::vector<SourceRecording>& sources,
                             const PipelineConfig& config,
                             const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "wavs", ec);
  if (ec) throw IoError("cannot create " + (out_dir / "wavs").string());

  std::vector<UtteranceRecord> records;
  std::vector<ProsodyFeatures> features;
  std::size_t n_groups = 0, n_bigrams = 0, dropped = 0;
  std::vector<std::string> log;

  for (const auto& src : sources) {
    const AudioBuffer audio = load_wav(src.audio);
    std::vector<BreathGroup> groups = segment_breath_groups(audio, config.seg);
    const std::vector<std::string> lines = read_transcript(src.transcript);
    if (lines.size() != groups.size()) {
      throw ValidationError(src.transcript.string() + ": transcript has " +
                            std::to_string(lines.size()) + " lines but " +
                            std::to_string(groups.size()) +
                            " breath groups were detected in " + src.audio.string());
    }
    for (std::size_t g = 0; g < groups.size(); ++g) groups[g].text = lines[g];
    n_groups += groups.size();
    const std::vector<BreathGroup> spans = build_bigrams(groups, config.seg);
    n_bigrams += spans.size();

    const std::string stem = src.audio.stem().string();
    for (std::size_t u = 0; u < spans.size(); ++u) {
      char suffix[16];
      std::snprintf(suffix, sizeof(suffix), "_%04zu", u);
      const std::string id = stem + suffix;
      const auto begin = static_cast<std::size_t>(std::lround(spans[u].start_s * audio.sample_rate));
      const auto end = static_cast<std::size_t>(std::lround(spans[u].end_s * audio.sample_rate));
      const AudioBuffer clip = audio.slice(begin, end);
      ProsodyFeatures f;
      try {
        f = extract_features(clip, config.f0, config.rate);
      } catch (const UnvoicedUtteranceError& e) {
        ++dropped;
        log.push_back("dropped " + id + ": " + e.what());
        continue;
      } catch (const ValidationError& e) {
        ++dropped;
        log.push_back("dropped " + id + ": " + e.what());
        continue;
      }
      UtteranceRecord r;
      r.id = id;
      r.audio_path = "wavs/" + id + ".wav";
      r.text = spans[u].text;
      r.duration_s = clip.duration();
      r.features = f;
      save_wav(clip, out_dir / r.audio_path);
      records.push_back(std::move(r));
      features.push_back(f);
    }
  }
  if (records.empty()) throw ValidationError("zero surviving utterances");
  Standardizer standardizer = fit_standardizer(features, config.corpus_id);
  for (auto& r : records) r.z = standardize(r.features, standardizer);
  write_manifest(records, out_dir / "manifest.jsonl");
  standardizer.save(out_dir / "standardizer.json");
  return ManifestBuild{std::move(records), std::move(standardizer), n_groups,
                       n_bigrams, dropped, std::move(log)};
}

void split_train_heldout(std::vector<UtteranceRecord>* records,
                         double heldout_fraction, std::uint64_t seed) {
  if (!(heldout_fraction > 0.0 && heldout_fraction < 1.0)) {
    throw ValidationError("heldout_fraction must lie in (0, 1)");
  }
  const std::size_t n = records->size();
  const auto n_heldout = static_cast<std::size_t>(std::floor(n * heldout_fraction));
  if (n_heldout == 0 || n_heldout == n) {
    throw ValidationError("heldout_fraction " + std::to_string(heldout_fraction) +
                          " leaves an empty split for " + std::to_string(n) +
                          " utterances");
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(&order);
  for (auto& r : *records) r.split = Split::kTrain;
  for (std::size_t i = 0; i < n_heldout; ++i) (*records)[order[i]].split = Split::kHeldout;
}

}  // namespace phmm
