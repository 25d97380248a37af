// phmm/eval.cc

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

#include "phmm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <sstream>
#include <thread>

#include "phmm/error.hpp"
#include "phmm/rng.hpp"

namespace phmm {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kHarmonicCeiling = 3800.0;

template <typename Fn>
void run_parallel(std::size_t n, int jobs, Fn fn) {
  const std::size_t workers =
      std::min<std::size_t>(n, static_cast<std::size_t>(std::max(jobs, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      for (std::size_t i = w; i < n; i += workers) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

double spectral_envelope(const ToyTimbre& t, double f) {
  auto bump = [&](double centre) {
    const double d = (f - centre) / t.bandwidth;
    return std::exp(-0.5 * d * d);
  };
  return bump(t.f1) + 0.6 * bump(t.f2) + 0.25 * 300.0 / (f + 300.0);
}

// Harmonic amplitudes for f0 normalised to unit power.
std::vector<double> harmonic_amplitudes(const ToyTimbre& t, double f0) {
  std::vector<double> amps;
  for (int h = 1; h * f0 < kHarmonicCeiling; ++h) amps.push_back(spectral_envelope(t, h * f0));
  double power = 0.0;
  for (double a : amps) power += 0.5 * a * a;
  const double g = power > 0.0 ? 1.0 / std::sqrt(power) : 0.0;
  for (double& a : amps) a *= g;
  return amps;
}

// Creaky pulses carry strong low harmonics so the sub-70 Hz period survives
// mel smoothing and phase reconstruction.
std::vector<double> creak_amplitudes(const ToyTimbre& t, double f0, double boost) {
  std::vector<double> amps;
  for (int h = 1; h * f0 < kHarmonicCeiling; ++h) {
    amps.push_back(spectral_envelope(t, h * f0) + (h <= 4 ? boost : 0.0));
  }
  double power = 0.0;
  for (double a : amps) power += 0.5 * a * a;
  for (double& a : amps) a /= std::sqrt(power);
  return amps;
}

// sum_h a_h sin(h phi) by the Chebyshev recurrence.
double harmonic_sum(const std::vector<double>& amps, double phi) {
  const double c2 = 2.0 * std::cos(phi);
  double s_prev = 0.0, s = std::sin(phi), out = 0.0;
  for (double a : amps) {
    out += a * s;
    const double next = c2 * s - s_prev;
    s_prev = s;
    s = next;
  }
  return out;
}

std::vector<double> group_medians(const SweepReport& r, int feature_index,
                                  std::vector<std::size_t>* kept) {
  std::vector<double> medians;
  for (std::size_t i = 0; i < r.grid.size(); ++i) {
    const std::vector<double> v = r.measured_at(i, feature_index);
    if (v.empty()) continue;
    medians.push_back(median(v));
    if (kept) kept->push_back(i);
  }
  return medians;
}

int feature_index_of(ControlFeature f) {
  switch (f) {
    case ControlFeature::kPitch: return 0;
    case ControlFeature::kF0Std: return 1;
    case ControlFeature::kRate: return 2;
  }
  return 0;
}

StandardizedFeatures z_for(ControlFeature f, double g) {
  std::array<double, 3> z{0.0, 0.0, 0.0};
  z[feature_index_of(f)] = g;
  return StandardizedFeatures::from_array(z);
}

}  // namespace

const std::vector<ToyTimbre>& toy_timbres() {
  static const std::vector<ToyTimbre> timbres = {
      {700.0, 1200.0, 140.0}, {300.0, 2200.0, 120.0}, {500.0, 900.0, 120.0},
      {400.0, 1700.0, 150.0}, {600.0, 2600.0, 160.0}, {250.0, 700.0, 100.0},
  };
  return timbres;
}

void ToyCorpusConfig::validate() const {
  if (n_utterances < 20) throw ValidationError("toy corpus: n_utterances must be >= 20");
  if (!(base_f0 > 0.0)) throw ValidationError("toy corpus: base_f0 must be positive");
  if (!(pitch_span > 0.0)) throw ValidationError("toy corpus: pitch_span must be positive");
  if (!(rate_base > 0.0)) throw ValidationError("toy corpus: rate_base must be positive");
  if (!(vibrato_per_sd > 0.0)) throw ValidationError("toy corpus: vibrato_per_sd must be positive");
  if (symbol_templates.empty()) throw ValidationError("toy corpus: no symbols");
  for (const auto& [sym, idx] : symbol_templates) {
    if (sym < 'a' || sym > 'z') throw ValidationError("toy corpus: symbols must be a-z");
    if (idx < 0 || idx >= static_cast<int>(toy_timbres().size())) {
      throw ValidationError(std::string("toy corpus: bad timbre index for '") + sym + "'");
    }
  }
  if (min_syllables < 1 || max_syllables < min_syllables) {
    throw ValidationError("toy corpus: bad syllable count range");
  }
  if (!(gap_s >= 0.0) || gap_s >= 0.5 / (rate_base * 1.6)) {
    throw ValidationError("toy corpus: gap_s must be non-negative and well below the period");
  }
  if (!(decay_nats > 0.0)) throw ValidationError("toy corpus: decay_nats must be positive");
  if (align_samples < 0) throw ValidationError("toy corpus: align_samples must be >= 0");
  if (!(creak_f0 > 0.0) || creak_max < 0.0 || creak_max > 1.0 || creak_slope < 0.0 ||
      creak_low_boost < 0.0) {
    throw ValidationError("toy corpus: bad creak settings");
  }
  if (sample_rate < 2 * static_cast<int>(kHarmonicCeiling) + 1) {
    throw ValidationError("toy corpus: sample_rate too low for the harmonic ceiling");
  }
}

MelConfig toy_mel_config(const ToyCorpusConfig& config) {
  MelConfig m;
  m.sample_rate = config.sample_rate;
  m.frame_length = 1024;
  m.hop_length = 256;
  m.n_mels = 80;
  m.fmin = 0.0;
  m.fmax = 4000.0;
  return m;
}

AudioBuffer render_toy_utterance(const ToyCorpusConfig& config, const std::string& text,
                                 const ToyLatents& latents) {
  if (text.empty()) throw ValidationError("toy utterance: empty text");
  const double sr = config.sample_rate;
  const double rate = config.rate_base * std::max(0.2, 1.0 + 0.15 * latents.rate);
  auto to_samples = [&](double seconds) {
    const double n = seconds * sr;
    if (config.align_samples <= 0) return static_cast<std::size_t>(std::lround(n));
    const double unit = config.align_samples;
    return static_cast<std::size_t>(std::max(1.0, std::round(n / unit)) * unit);
  };
  const std::size_t edge = to_samples(config.edge_silence_s);
  const std::size_t period_n = to_samples(1.0 / rate);
  const double period = period_n / sr;
  const double voiced = std::max(period - config.gap_s, 0.5 * period);
  const std::size_t voiced_n = static_cast<std::size_t>(std::lround(voiced * sr));
  const double f0_centre = config.base_f0 * std::exp2(config.pitch_span * latents.pitch);
  // Sinusoidal modulation of amplitude A has standard deviation A / sqrt(2).
  const double depth = std::numbers::sqrt2 * config.vibrato_per_sd * std::abs(latents.variability);
  const double creak = std::clamp((config.creak_onset - latents.pitch) * config.creak_slope,
                                  0.0, config.creak_max);
  const double attack = 0.015, release = 0.010;

  AudioBuffer out;
  out.sample_rate = config.sample_rate;
  out.samples.assign(2 * edge + text.size() * period_n, 0.0);

  double phase = 0.0;
  for (std::size_t k = 0; k < text.size(); ++k) {
    const auto it = config.symbol_templates.find(text[k]);
    if (it == config.symbol_templates.end()) {
      throw ValidationError(std::string("toy utterance: unknown symbol '") + text[k] + "'");
    }
    const ToyTimbre& timbre = toy_timbres()[it->second];
    const std::vector<double> creak_amps = creak_amplitudes(timbre, config.creak_f0, config.creak_low_boost);
    const std::size_t creak_start =
        static_cast<std::size_t>(std::lround((1.0 - creak) * voiced_n));
    const std::size_t offset = edge + k * period_n;
    std::vector<double> amps;
    double amps_f0 = -1.0;
    for (std::size_t i = 0; i < voiced_n; ++i) {
      const double t = i / sr;
      double env = std::exp(-config.decay_nats * t / voiced);
      if (t < attack) env *= 0.5 - 0.5 * std::cos(std::numbers::pi * t / attack);
      const double left = voiced - t;
      if (left < release) env *= 0.5 - 0.5 * std::cos(std::numbers::pi * std::max(left, 0.0) / release);
      double sample;
      if (creak > 0.0 && i >= creak_start) {
        phase += kTwoPi * config.creak_f0 / sr;
        sample = harmonic_sum(creak_amps, phase);
      } else {
        const double u = t / period;
        const double f0 = f0_centre * std::exp(depth * std::sin(kTwoPi * u));
        phase += kTwoPi * f0 / sr;
        // Refresh the amplitudes when f0 has moved by more than half a percent.
        if (amps_f0 < 0.0 || std::abs(f0 / amps_f0 - 1.0) > 0.005) {
          amps = harmonic_amplitudes(timbre, f0);
          amps_f0 = f0;
        }
        sample = harmonic_sum(amps, phase);
      }
      phase = std::fmod(phase, kTwoPi);
      out.samples[offset + i] = config.amplitude * env * sample / std::numbers::sqrt2;
    }
  }
  for (double& s : out.samples) s = std::clamp(s, -1.0, 1.0);
  return out;
}

std::vector<std::string> toy_texts(const ToyCorpusConfig& config, std::size_t count,
                                   std::uint64_t seed) {
  std::vector<char> alphabet;
  for (const auto& [sym, idx] : config.symbol_templates) alphabet.push_back(sym);
  Rng rng(seed);
  std::vector<std::string> texts;
  for (std::size_t i = 0; i < count; ++i) {
    const int n = config.min_syllables +
                  static_cast<int>(rng.index(config.max_syllables - config.min_syllables + 1));
    std::string s;
    for (int k = 0; k < n; ++k) s.push_back(alphabet[rng.index(alphabet.size())]);
    texts.push_back(s);
  }
  return texts;
}

ToyCorpus generate_toy_corpus(const ToyCorpusConfig& config, const std::filesystem::path& out_dir,
                              const F0Config& f0, const SpeechRateConfig& rate) {
  config.validate();
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "wavs");
  Rng rng(config.seed);
  const std::vector<std::string> texts = toy_texts(config, config.n_utterances, config.seed + 1);
  std::vector<UtteranceRecord> records;
  std::vector<ToyLatents> latents;
  std::vector<ProsodyFeatures> features;
  for (std::size_t i = 0; i < config.n_utterances; ++i) {
    ToyLatents lat;
    lat.pitch = rng.normal();
    lat.variability = rng.normal();
    lat.rate = rng.normal();
    const AudioBuffer audio = render_toy_utterance(config, texts[i], lat);
    char name[32];
    std::snprintf(name, sizeof(name), "toy_%04zu", i);
    UtteranceRecord r;
    r.id = name;
    r.audio_path = std::string("wavs/") + name + ".wav";
    r.text = texts[i];
    r.duration_s = audio.duration();
    save_wav(audio, out_dir / r.audio_path);
    // Measure from what was written so the manifest matches the files.
    r.features = extract_features(load_wav(out_dir / r.audio_path), f0, rate);
    records.push_back(r);
    latents.push_back(lat);
    features.push_back(r.features);
  }
  const Standardizer standardizer = fit_standardizer(features, "toy");
  for (auto& r : records) r.z = standardize(r.features, standardizer);
  split_train_heldout(&records, config.heldout_fraction, config.seed + 2);

  ToyCorpus corpus{records, latents, standardizer, out_dir / "manifest.jsonl"};
  write_manifest(records, corpus.manifest_path);
  standardizer.save(out_dir / "standardizer.json");
  std::ofstream lat_out(out_dir / "latents.csv", std::ios::trunc);
  if (!lat_out) throw IoError("cannot write " + (out_dir / "latents.csv").string());
  lat_out << "id,pitch,variability,rate\n" << std::setprecision(17);
  for (std::size_t i = 0; i < records.size(); ++i) {
    lat_out << records[i].id << "," << latents[i].pitch << "," << latents[i].variability << ","
            << latents[i].rate << "\n";
  }
  return corpus;
}

CorpusStats corpus_stats(const std::vector<UtteranceRecord>& records) {
  if (records.empty()) throw ValidationError("corpus_stats: empty manifest");
  CorpusStats s;
  const double n = static_cast<double>(records.size());
  std::array<std::vector<double>, 3> cols;
  for (const auto& r : records) {
    const auto a = r.features.as_array();
    for (int d = 0; d < 3; ++d) cols[d].push_back(a[d]);
    s.ids.push_back(r.id);
  }
  for (int d = 0; d < 3; ++d) {
    s.means[d] = std::accumulate(cols[d].begin(), cols[d].end(), 0.0) / n;
    double var = 0.0;
    for (double v : cols[d]) var += (v - s.means[d]) * (v - s.means[d]);
    s.stds[d] = std::sqrt(var / n);
    s.quantiles[d] = {quantile(cols[d], 0.0), quantile(cols[d], 0.25), quantile(cols[d], 0.5),
                      quantile(cols[d], 0.75), quantile(cols[d], 1.0)};
  }
  for (std::size_t i = 0; i < records.size(); ++i) {
    s.centered_log_f0.push_back(cols[0][i] - s.means[0]);
    s.centered_rate.push_back(cols[2][i] - s.means[2]);
  }
  return s;
}

ControlFeature parse_control_feature(const std::string& name) {
  if (name == "pitch") return ControlFeature::kPitch;
  if (name == "f0_std") return ControlFeature::kF0Std;
  if (name == "rate") return ControlFeature::kRate;
  throw ValidationError("unknown feature '" + name + "' (expected pitch, f0_std or rate)");
}

std::string control_feature_name(ControlFeature f) {
  switch (f) {
    case ControlFeature::kPitch: return "pitch";
    case ControlFeature::kF0Std: return "f0_std";
    case ControlFeature::kRate: return "rate";
  }
  return "pitch";
}

std::vector<double> SweepReport::measured_at(std::size_t i) const {
  return measured_at(i, feature_index_of(feature));
}

std::vector<double> SweepReport::measured_at(std::size_t i, int feature_index) const {
  std::vector<double> out;
  for (std::size_t t = 0; t < texts; ++t) {
    const SweepItem& item = items[i * texts + t];
    if (item.measured) out.push_back(item.measured->as_array()[feature_index]);
  }
  return out;
}

AudioBuffer synthesize_audio(const NeuralHmmModel& model, const std::string& text,
                             const StandardizedFeatures& z, int max_frames,
                             int griffin_lim_iters, std::uint64_t seed, bool* truncated) {
  Vocabulary vocab = model.vocabulary;
  vocab.freeze();
  const SymbolSequence symbols = tokenize(text, &vocab);
  const SynthesisResult r = synthesize(model, symbols, z, max_frames);
  if (truncated) *truncated = r.truncated;
  return griffin_lim(r.mel, griffin_lim_iters, seed);
}

SweepReport run_feature_sweep(const NeuralHmmModel& model, const std::vector<std::string>& texts,
                              ControlFeature feature, const SweepConfig& config) {
  if (texts.empty()) throw ValidationError("sweep: no texts");
  if (config.grid.empty()) throw ValidationError("sweep: empty grid");
  for (std::size_t i = 1; i < config.grid.size(); ++i) {
    if (!(config.grid[i] > config.grid[i - 1])) {
      throw ValidationError("sweep: grid must be strictly increasing");
    }
  }
  SweepReport report;
  report.feature = feature;
  report.grid = config.grid;
  report.texts = texts.size();
  report.items.resize(config.grid.size() * texts.size());
  run_parallel(report.items.size(), config.jobs, [&](std::size_t idx) {
    const std::size_t gi = idx / texts.size();
    const std::size_t ti = idx % texts.size();
    SweepItem& item = report.items[idx];
    item.control = config.grid[gi];
    item.text_index = ti;
    const AudioBuffer audio =
        synthesize_audio(model, texts[ti], z_for(feature, item.control), config.max_frames,
                         config.griffin_lim_iters, config.seed, &item.truncated);
    item.frames = static_cast<int>(std::lround(audio.duration() * model.mel_config.sample_rate /
                                               model.mel_config.hop_length));
    try {
      item.measured = extract_features(audio, config.f0, config.rate);
    } catch (const UnvoicedUtteranceError&) {
      item.measured.reset();
    }
    item.creak = measure_creak(audio, config.f0);
  });
  return report;
}

ControlAccuracy control_accuracy(const SweepReport& report, double lo, double hi) {
  SweepReport sub;
  sub.feature = report.feature;
  sub.texts = report.texts;
  for (std::size_t i = 0; i < report.grid.size(); ++i) {
    if (report.grid[i] < lo || report.grid[i] > hi) continue;
    sub.grid.push_back(report.grid[i]);
    for (std::size_t t = 0; t < report.texts; ++t) {
      sub.items.push_back(report.items[i * report.texts + t]);
    }
  }
  if (sub.grid.size() < 3) throw ValidationError("control_accuracy: need at least 3 grid points");
  ControlAccuracy acc;
  std::vector<std::size_t> kept;
  acc.medians = group_medians(sub, feature_index_of(sub.feature), &kept);
  std::vector<double> controls;
  for (std::size_t i : kept) controls.push_back(sub.grid[i]);
  if (acc.medians.size() >= 2) {
    acc.spearman = spearman(controls, acc.medians);
  } else {
    acc.spearman.degenerate = true;
  }
  for (std::size_t i = 0; i + 1 < sub.grid.size(); ++i) {
    const std::vector<double> a = sub.measured_at(i), b = sub.measured_at(i + 1);
    if (a.empty() || b.empty()) {
      acc.slopes.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / a.size();
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / b.size();
    acc.slopes.push_back((mb - ma) / (sub.grid[i + 1] - sub.grid[i]));
  }
  return acc;
}

std::vector<double> medians_in_control_units(const SweepReport& report,
                                             const Standardizer& standardizer,
                                             int feature_index) {
  std::vector<double> out;
  for (std::size_t i = 0; i < report.grid.size(); ++i) {
    const std::vector<double> v = report.measured_at(i, feature_index);
    if (v.empty()) {
      out.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    out.push_back((median(v) - standardizer.means()[feature_index]) /
                  standardizer.stds()[feature_index]);
  }
  return out;
}

void write_sweep_csv(const SweepReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "feature,control,text_index,voiced,mean_log_f0,f0_std,speech_rate,creak_fraction,"
         "truncated,frames\n";
  out << std::setprecision(10);
  for (const SweepItem& item : report.items) {
    out << control_feature_name(report.feature) << "," << item.control << "," << item.text_index
        << "," << (item.measured ? 1 : 0) << ",";
    if (item.measured) {
      out << item.measured->mean_log_f0 << "," << item.measured->f0_std << ","
          << item.measured->speech_rate;
    } else {
      out << ",,";
    }
    out << "," << item.creak.creak_fraction << "," << (item.truncated ? 1 : 0) << ","
        << item.frames << "\n";
  }
}

void write_sweep_summary_csv(const SweepReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "control";
  for (const char* name : kFeatureNames) {
    out << "," << name << "_median," << name << "_q25," << name << "_q75";
  }
  out << ",creak_median\n" << std::setprecision(10);
  for (std::size_t i = 0; i < report.grid.size(); ++i) {
    out << report.grid[i];
    for (int d = 0; d < 3; ++d) {
      const std::vector<double> v = report.measured_at(i, d);
      if (v.empty()) {
        out << ",,,";
      } else {
        out << "," << median(v) << "," << quantile(v, 0.25) << "," << quantile(v, 0.75);
      }
    }
    std::vector<double> creak;
    for (std::size_t t = 0; t < report.texts; ++t) {
      creak.push_back(report.items[i * report.texts + t].creak.creak_fraction);
    }
    out << "," << median(creak) << "\n";
  }
}

nlohmann::json sweep_summary_json(const SweepReport& report, const Standardizer& standardizer) {
  const ControlAccuracy acc = control_accuracy(report);
  nlohmann::json j;
  j["feature"] = control_feature_name(report.feature);
  j["grid"] = report.grid;
  j["texts"] = report.texts;
  j["rows"] = report.items.size();
  j["spearman_rho"] = acc.spearman.rho;
  j["degenerate"] = acc.spearman.degenerate;
  j["medians"] = acc.medians;
  nlohmann::json slopes = nlohmann::json::array();
  for (double s : acc.slopes) {
    if (std::isfinite(s)) {
      slopes.push_back(s);
    } else {
      slopes.push_back(nullptr);
    }
  }
  j["interval_slopes"] = slopes;
  const int fi = feature_index_of(report.feature);
  nlohmann::json units = nlohmann::json::array();
  for (double v : medians_in_control_units(report, standardizer, fi)) {
    if (std::isfinite(v)) {
      units.push_back(v);
    } else {
      units.push_back(nullptr);
    }
  }
  j["medians_control_units"] = units;
  std::size_t truncated = 0, unvoiced = 0;
  for (const auto& item : report.items) {
    truncated += item.truncated ? 1 : 0;
    unvoiced += item.measured ? 0 : 1;
  }
  j["truncated"] = truncated;
  j["unvoiced"] = unvoiced;
  return j;
}

std::vector<StylePreset> default_creak_presets() {
  return {
      {"modal", {0.0, 0.0, 0.0}, std::nullopt, 0.3},
      {"stylistic", {-3.0, -1.0, 0.0}, std::nullopt, 0.3},
      {"end-of-turn", {0.0, 0.0, 0.0}, StandardizedFeatures{-3.0, -1.0, 0.0}, 0.3},
  };
}

AudioBuffer render_style(const NeuralHmmModel& model, const std::string& text,
                         const StylePreset& preset, const SweepConfig& config) {
  const std::vector<std::string> symbols = text_symbols(text);
  if (!preset.tail_z || symbols.size() < 2) {
    return synthesize_audio(model, text, preset.tail_z && symbols.size() < 2 ? *preset.tail_z
                                                                             : preset.z,
                            config.max_frames, config.griffin_lim_iters, config.seed);
  }
  const std::size_t n = symbols.size();
  const std::size_t tail = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::lround(preset.tail_fraction * static_cast<double>(n))), 1,
      n - 1);
  std::string head_text, tail_text;
  for (std::size_t i = 0; i < n; ++i) (i < n - tail ? head_text : tail_text) += symbols[i];
  const AudioBuffer head = synthesize_audio(model, head_text, preset.z, config.max_frames,
                                            config.griffin_lim_iters, config.seed);
  const AudioBuffer end = synthesize_audio(model, tail_text, *preset.tail_z, config.max_frames,
                                           config.griffin_lim_iters, config.seed);
  return concatenate(head, end);
}

CreakStyleResult creak_style_eval(const NeuralHmmModel& model,
                                  const std::vector<std::string>& texts,
                                  const std::vector<StylePreset>& presets,
                                  const SweepConfig& config) {
  if (texts.empty()) throw ValidationError("creak eval: no texts");
  if (presets.size() < 2) throw ValidationError("creak eval: need at least two styles");
  CreakStyleResult result;
  result.reports.assign(presets.size(), std::vector<CreakReport>(texts.size()));
  run_parallel(presets.size() * texts.size(), config.jobs, [&](std::size_t idx) {
    const std::size_t s = idx / texts.size();
    const std::size_t t = idx % texts.size();
    const AudioBuffer audio = render_style(model, texts[t], presets[s], config);
    result.reports[s][t] = measure_creak(audio, config.f0);
  });
  for (std::size_t s = 0; s < presets.size(); ++s) {
    result.styles.push_back(presets[s].name);
    std::vector<double> v;
    for (const auto& r : result.reports[s]) v.push_back(r.creak_fraction);
    result.fractions.add(presets[s].name, v);
    result.ci.push_back(texts.size() >= 2 ? mean_ci(v)
                                          : MeanCi{v[0], v[0], v[0]});
  }
  result.anova = one_way_anova(result.fractions);
  result.tukey = tukey_hsd(result.fractions);
  return result;
}

std::string format_creak_table(const CreakStyleResult& r) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(1);
  ss << std::left << std::setw(14) << "style" << std::right << std::setw(12) << "creak %"
     << std::setw(20) << "95% CI" << "\n";
  for (std::size_t s = 0; s < r.styles.size(); ++s) {
    std::ostringstream ci;
    ci << std::fixed << std::setprecision(1) << "[" << r.ci[s].lo << ", " << r.ci[s].hi << "]";
    ss << std::left << std::setw(14) << r.styles[s] << std::right << std::setw(12)
       << r.ci[s].mean << std::setw(20) << ci.str() << "\n";
  }
  ss << std::setprecision(3) << "ANOVA F(" << r.anova.df_between << ", " << r.anova.df_within
     << ") = " << r.anova.f << ", p = " << std::scientific << std::setprecision(3) << r.anova.p
     << "\n";
  for (const auto& pr : r.tukey) {
    ss << std::defaultfloat << std::setprecision(4) << "Tukey " << r.styles[pr.a] << " vs "
       << r.styles[pr.b] << ": diff = " << pr.difference << ", q = " << pr.q
       << ", p = " << pr.p << (pr.significant ? " *" : "") << "\n";
  }
  return ss.str();
}

nlohmann::json creak_result_json(const CreakStyleResult& r) {
  nlohmann::json j;
  nlohmann::json styles = nlohmann::json::array();
  for (std::size_t s = 0; s < r.styles.size(); ++s) {
    styles.push_back({{"style", r.styles[s]},
                      {"creak_fractions", r.fractions.values[s]},
                      {"mean", r.ci[s].mean},
                      {"ci_lo", r.ci[s].lo},
                      {"ci_hi", r.ci[s].hi}});
  }
  j["styles"] = styles;
  j["anova"] = {{"F", std::isfinite(r.anova.f) ? nlohmann::json(r.anova.f) : nlohmann::json("inf")},
                {"df_between", r.anova.df_between},
                {"df_within", r.anova.df_within},
                {"p", r.anova.p}};
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& pr : r.tukey) {
    pairs.push_back({{"a", r.styles[pr.a]},
                     {"b", r.styles[pr.b]},
                     {"difference", pr.difference},
                     {"q", std::isfinite(pr.q) ? nlohmann::json(pr.q) : nlohmann::json("inf")},
                     {"p", pr.p},
                     {"significant", pr.significant}});
  }
  j["tukey"] = pairs;
  return j;
}

}  // namespace phmm
