// phmm/eval.hpp

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

// Evaluation harness: a synthetic corpus with known prosodic latents, corpus
// distribution statistics, control sweeps with re-measurement, and the
// creak-style listening-test substitute.

#ifndef PHMM_EVAL_HPP_
#define PHMM_EVAL_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "phmm/audio.hpp"
#include "phmm/corpus.hpp"
#include "phmm/dsp.hpp"
#include "phmm/nhmm.hpp"
#include "phmm/prosody.hpp"
#include "phmm/stats.hpp"

namespace phmm {

// ---------------------------------------------------------------------------
// Toy corpus

/// Formant pattern giving one symbol its timbre.
struct ToyTimbre {
  double f1 = 500.0;
  double f2 = 1500.0;
  double bandwidth = 150.0;
};

/// The six built-in timbres, indexed by symbol_templates values.
const std::vector<ToyTimbre>& toy_timbres();

struct ToyCorpusConfig {
  std::size_t n_utterances = 100;
  std::uint64_t seed = 1;
  double base_f0 = 120.0;        // Hz at latent pitch 0
  double pitch_span = 0.15;      // octaves per latent sd
  double rate_base = 3.0;        // syllables per second at latent rate 0
  double vibrato_per_sd = 0.05;  // log-f0 modulation depth per latent sd
  std::map<char, int> symbol_templates = {{'a', 0}, {'b', 1}, {'c', 2},
                                          {'d', 3}, {'e', 4}, {'f', 5}};
  int sample_rate = 16000;
  int min_syllables = 3;
  int max_syllables = 7;
  double heldout_fraction = 0.1;
  int align_samples = 256;       // periods and edges rounded to this (0: exact)
  double edge_silence_s = 0.03;  // before the first and after the last syllable
  double gap_s = 0.06;           // silence closing each syllable period
  double decay_nats = 4.0;       // log-amplitude drop across each burst
  // Creak: below creak_onset (latent pitch units) the tail of every burst is
  // phonated at creak_f0, covering a fraction growing by creak_slope per sd.
  double creak_onset = -1.0;
  double creak_slope = 0.45;
  double creak_max = 0.9;
  double creak_f0 = 45.0;
  double creak_low_boost = 3.0;  // added to the first four creak harmonics
  double amplitude = 0.5;

  void validate() const;
};

struct ToyLatents {
  double pitch = 0.0;
  double variability = 0.0;
  double rate = 0.0;
};

/// Renders one utterance. Each character of `text` is a syllable.
AudioBuffer render_toy_utterance(const ToyCorpusConfig& config, const std::string& text,
                                 const ToyLatents& latents);

/// Seeded random symbol strings of min..max syllables.
std::vector<std::string> toy_texts(const ToyCorpusConfig& config, std::size_t count,
                                   std::uint64_t seed);

/// Mel settings used for toy audio.
MelConfig toy_mel_config(const ToyCorpusConfig& config);

struct ToyCorpus {
  std::vector<UtteranceRecord> records;
  std::vector<ToyLatents> latents;
  Standardizer standardizer;
  std::filesystem::path manifest_path;
};

/// Writes out_dir/wavs/*.wav, manifest.jsonl, standardizer.json and
/// latents.csv. Features are measured from the rendered audio.
ToyCorpus generate_toy_corpus(const ToyCorpusConfig& config,
                              const std::filesystem::path& out_dir,
                              const F0Config& f0 = {}, const SpeechRateConfig& rate = {});

// ---------------------------------------------------------------------------
// Corpus statistics

struct CorpusStats {
  std::vector<std::string> ids;
  std::vector<double> centered_log_f0;
  std::vector<double> centered_rate;
  std::array<double, 3> means{};
  std::array<double, 3> stds{};  // population
  std::array<std::array<double, 5>, 3> quantiles{};  // min, q25, median, q75, max
};

CorpusStats corpus_stats(const std::vector<UtteranceRecord>& records);

// ---------------------------------------------------------------------------
// Control sweeps

enum class ControlFeature { kPitch, kF0Std, kRate };

ControlFeature parse_control_feature(const std::string& name);
std::string control_feature_name(ControlFeature f);

struct SweepItem {
  double control = 0.0;
  std::size_t text_index = 0;
  std::optional<ProsodyFeatures> measured;  // empty when unvoiced
  CreakReport creak;
  bool truncated = false;
  int frames = 0;
};

struct SweepConfig {
  std::vector<double> grid = {-3, -2, -1, 0, 1, 2, 3};
  int griffin_lim_iters = 32;
  int max_frames = 2000;
  std::uint64_t seed = 1;
  F0Config f0;
  SpeechRateConfig rate;
  int jobs = 1;
};

struct SweepReport {
  ControlFeature feature = ControlFeature::kPitch;
  std::vector<double> grid;
  std::size_t texts = 0;
  std::vector<SweepItem> items;  // grid-major, then text index

  /// Measured values of the swept feature at grid point i.
  std::vector<double> measured_at(std::size_t i) const;
  /// Same for any feature index (0 mean log f0, 1 f0 std, 2 rate).
  std::vector<double> measured_at(std::size_t i, int feature_index) const;
};

SweepReport run_feature_sweep(const NeuralHmmModel& model, const std::vector<std::string>& texts,
                              ControlFeature feature, const SweepConfig& config);

/// Synthesises text at z and returns the Griffin-Lim waveform.
AudioBuffer synthesize_audio(const NeuralHmmModel& model, const std::string& text,
                             const StandardizedFeatures& z, int max_frames,
                             int griffin_lim_iters, std::uint64_t seed,
                             bool* truncated = nullptr);

struct ControlAccuracy {
  Correlation spearman;
  std::vector<double> medians;
  std::vector<double> slopes;  // OLS slope between adjacent grid points
};

/// Restricted to grid points within [lo, hi].
ControlAccuracy control_accuracy(const SweepReport& report, double lo = -1e300,
                                 double hi = 1e300);

/// Measured swept-feature medians converted to control units.
std::vector<double> medians_in_control_units(const SweepReport& report,
                                             const Standardizer& standardizer,
                                             int feature_index);

void write_sweep_csv(const SweepReport& report, const std::filesystem::path& path);
/// Plot-ready per-grid rows: control, median, q25, q75 of each feature.
void write_sweep_summary_csv(const SweepReport& report, const std::filesystem::path& path);
nlohmann::json sweep_summary_json(const SweepReport& report, const Standardizer& standardizer);

// ---------------------------------------------------------------------------
// Creak styles

/// A style is a z-vector for the whole utterance, optionally followed by a
/// second z-vector applied to the final tail_fraction of the symbols.
struct StylePreset {
  std::string name;
  StandardizedFeatures z;
  std::optional<StandardizedFeatures> tail_z;
  double tail_fraction = 0.3;
};

std::vector<StylePreset> default_creak_presets();

struct CreakStyleResult {
  std::vector<std::string> styles;
  std::vector<std::vector<CreakReport>> reports;  // style x text
  GroupSamples fractions;
  AnovaResult anova;
  std::vector<TukeyPair> tukey;
  std::vector<MeanCi> ci;
};

CreakStyleResult creak_style_eval(const NeuralHmmModel& model,
                                  const std::vector<std::string>& texts,
                                  const std::vector<StylePreset>& presets,
                                  const SweepConfig& config);

/// Two-segment render of a preset: head and tail synthesised separately and
/// concatenated.
AudioBuffer render_style(const NeuralHmmModel& model, const std::string& text,
                         const StylePreset& preset, const SweepConfig& config);

std::string format_creak_table(const CreakStyleResult& result);
nlohmann::json creak_result_json(const CreakStyleResult& result);

}  // namespace phmm

#endif  // PHMM_EVAL_HPP_
