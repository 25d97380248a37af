// phmm/cli.cc

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

#include "phmm/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>

#include "phmm/audio.hpp"
#include "phmm/corpus.hpp"
#include "phmm/error.hpp"
#include "phmm/eval.hpp"
#include "phmm/nhmm.hpp"
#include "phmm/stats.hpp"
#include "phmm/train.hpp"

namespace phmm::cli {

namespace fs = std::filesystem;

namespace {

constexpr char kMelMagic[8] = {'P', 'H', 'M', 'M', 'M', 'E', 'L', '1'};

void put_u32(std::string* s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s->push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string* s, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) s->push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_le(const std::string& s, std::size_t pos, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[pos + i])) << (8 * i);
  }
  return v;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("short write to " + path.string());
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t");
    const auto e = cell.find_last_not_of(" \t\r");
    cells.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

double parse_number(const std::string& cell, const fs::path& path, std::size_t row) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(cell, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != cell.size() || !std::isfinite(v)) {
    throw ValidationError(path.string() + ": row " + std::to_string(row) + ": '" + cell +
                          "' is not a finite number");
  }
  return v;
}

// Rows of a headed CSV with exactly the given columns. Row numbers in errors
// count the header as row 1.
std::vector<std::vector<std::string>> read_csv(const fs::path& path,
                                               const std::vector<std::string>& header) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::vector<std::vector<std::string>> rows;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells = split_csv_line(line);
    if (row == 1) {
      if (cells != header) {
        std::string want;
        for (const auto& h : header) want += (want.empty() ? "" : ",") + h;
        throw ValidationError(path.string() + ": row 1: expected header '" + want + "'");
      }
      continue;
    }
    if (cells.size() != header.size()) {
      throw ValidationError(path.string() + ": row " + std::to_string(row) + ": expected " +
                            std::to_string(header.size()) + " columns, found " +
                            std::to_string(cells.size()));
    }
    cells.push_back(std::to_string(row));
    rows.push_back(std::move(cells));
  }
  if (row == 0) throw ValidationError(path.string() + ": empty file");
  return rows;
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(precision) << v;
  return s.str();
}

// Settings shared by every subcommand.
struct Common {
  std::uint64_t seed = 1;
  std::string out_dir = ".";
  int jobs = 1;
};

void add_common(CLI::App* app, Common* c) {
  app->add_option("--seed", c->seed, "Random seed")->capture_default_str();
  app->add_option("--out-dir", c->out_dir, "Output directory")->capture_default_str();
  app->add_option("--jobs", c->jobs, "Worker threads")->capture_default_str()->check(
      CLI::PositiveNumber);
}

void echo_config(const CLI::App& sub, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  write_text(out_dir / "resolved.conf",
             "[" + sub.get_name() + "]\n" + sub.config_to_str(true, false));
}

// --------------------------------------------------------------------------
// prepare

struct PrepareArgs {
  Common common;
  std::string input_dir;
  std::string corpus_id = "corpus";
  double heldout_fraction = 0.1;
  SegConfig seg;
};

int cmd_prepare(const PrepareArgs& a, const CLI::App& sub, std::ostream& out) {
  const fs::path in_dir(a.input_dir);
  if (!fs::is_directory(in_dir)) throw ValidationError("input directory not found: " + a.input_dir);
  std::vector<fs::path> wavs;
  for (const auto& e : fs::directory_iterator(in_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".wav") wavs.push_back(e.path());
  }
  std::sort(wavs.begin(), wavs.end());
  if (wavs.empty()) throw ValidationError("no .wav files in " + a.input_dir);
  std::vector<SourceRecording> sources;
  for (const auto& w : wavs) {
    fs::path txt = w;
    txt.replace_extension(".txt");
    if (!fs::exists(txt)) throw ValidationError("missing transcript sidecar: " + txt.string());
    sources.push_back({w, txt});
  }
  PipelineConfig pc;
  pc.seg = a.seg;
  pc.corpus_id = a.corpus_id;
  const fs::path out_dir(a.common.out_dir);
  echo_config(sub, out_dir);
  ManifestBuild build = build_manifest(sources, pc, out_dir);
  split_train_heldout(&build.records, a.heldout_fraction, a.common.seed);
  write_manifest(build.records, out_dir / "manifest.jsonl");
  std::size_t heldout = 0;
  for (const auto& r : build.records) heldout += r.split == Split::kHeldout ? 1 : 0;
  for (const auto& line : build.log) out << line << "\n";
  out << "groups " << build.groups << "  bigrams " << build.bigrams << "  dropped "
      << build.dropped << "  utterances " << build.records.size() << " (train "
      << build.records.size() - heldout << ", heldout " << heldout << ")\n";
  return kExitOk;
}

// --------------------------------------------------------------------------
// gen-toy

struct GenToyArgs {
  Common common;
  ToyCorpusConfig toy;
};

int cmd_gen_toy(GenToyArgs a, const CLI::App& sub, std::ostream& out) {
  a.toy.seed = a.common.seed;
  a.toy.validate();
  const fs::path out_dir(a.common.out_dir);
  echo_config(sub, out_dir);
  const ToyCorpus corpus = generate_toy_corpus(a.toy, out_dir);
  const CorpusStats s = corpus_stats(corpus.records);
  std::size_t heldout = 0;
  for (const auto& r : corpus.records) heldout += r.split == Split::kHeldout ? 1 : 0;
  out << "utterances " << corpus.records.size() << " (train " << corpus.records.size() - heldout
      << ", heldout " << heldout << ")\n";
  for (int d = 0; d < 3; ++d) {
    out << std::left << std::setw(12) << kFeatureNames[d] << " mean " << fmt(s.means[d])
        << "  sd " << fmt(s.stds[d]) << "\n";
  }
  return kExitOk;
}

// --------------------------------------------------------------------------
// train

struct TrainArgs {
  Common common;
  std::string manifest;
  std::string init_from;
  int iterations = 500;
  int batch_size = 8;
  double learning_rate = 1e-3;
  double grad_clip = 5.0;
  int checkpoint_interval = 0;
  ModelConfig model;
  int n_mels = 80;
  int frame_length = 1024;
  int hop_length = 256;
  double fmax = 8000.0;
};

void write_loss_csv(const TrainResult& r, const fs::path& path) {
  std::ostringstream s;
  s << "iteration,loss,grad_norm\n" << std::setprecision(17);
  for (std::size_t i = 0; i < r.loss_trace.size(); ++i) {
    s << i + 1 << "," << r.loss_trace[i] << "," << r.grad_norm[i] << "\n";
  }
  write_text(path, s.str());
}

int cmd_train(const TrainArgs& a, const CLI::App& sub, std::ostream& out) {
  const Manifest manifest = read_manifest(a.manifest);
  const auto train_records = manifest.with_split(Split::kTrain);
  if (train_records.empty()) throw ValidationError(a.manifest + ": no training utterances");
  const fs::path out_dir(a.common.out_dir);
  echo_config(sub, out_dir);

  NeuralHmmModel model;
  std::vector<TrainingExample> data;
  if (!a.init_from.empty()) {
    model = load_checkpoint(a.init_from);
    Vocabulary vocab = model.vocabulary;
    vocab.freeze();
    data = load_examples(manifest, Split::kTrain, model.mel_config, &vocab);
  } else {
    const AudioBuffer first = load_wav(manifest.audio_path(*train_records.front()));
    MelConfig mc;
    mc.sample_rate = first.sample_rate;
    mc.n_mels = a.n_mels;
    mc.frame_length = a.frame_length;
    mc.hop_length = a.hop_length;
    mc.fmax = std::min(a.fmax, 0.5 * first.sample_rate);
    mc.validate();
    Vocabulary vocab;
    data = load_examples(manifest, Split::kTrain, mc, &vocab);
    ModelConfig cfg = a.model;
    cfg.vocab_size = vocab.size();
    cfg.n_mels = mc.n_mels;
    cfg.seed = a.common.seed;
    model = init_model(cfg, vocab, mc);
    fit_normalization(&model, data);
  }

  TrainConfig tc;
  tc.learning_rate = a.learning_rate;
  tc.iterations = a.iterations;
  tc.batch_size = a.batch_size;
  tc.grad_clip = a.grad_clip;
  tc.seed = a.common.seed;
  tc.jobs = a.common.jobs;
  tc.checkpoint_interval = a.checkpoint_interval;
  if (!a.init_from.empty()) tc.init_from = fs::path(a.init_from);
  const CheckpointHook hook = [&](int it, const NeuralHmmModel& m) {
    save_checkpoint(m, out_dir / ("model_iter" + std::to_string(it) + ".ckpt"));
  };
  const TrainResult r = train(&model, data, tc, hook);
  save_checkpoint(model, out_dir / "model.ckpt");
  write_loss_csv(r, out_dir / "loss.csv");
  const nlohmann::json summary{{"utterances", data.size()},
                               {"iterations", a.iterations},
                               {"parameters", model.params.count()},
                               {"initial_loss", r.initial_loss},
                               {"final_loss", r.final_loss}};
  write_text(out_dir / "train_summary.json", summary.dump(2) + "\n");
  out << "utterances " << data.size() << "  parameters " << model.params.count() << "\n"
      << "mean NLL per frame: " << std::setprecision(10) << r.initial_loss << " -> "
      << r.final_loss << "\n";
  return kExitOk;
}

// --------------------------------------------------------------------------
// synth

struct SynthArgs {
  Common common;
  std::string checkpoint;
  std::string text;
  double pitch = 0.0;
  double f0_std = 0.0;
  double rate = 0.0;
  std::string out = "synth.wav";
  int max_frames = 2000;
  int griffin_lim_iters = 32;
};

int cmd_synth(const SynthArgs& a, const CLI::App& sub, std::ostream& out, std::ostream& err) {
  if (text_symbols(a.text).empty()) throw ValidationError("--text is empty");
  const NeuralHmmModel model = load_checkpoint(a.checkpoint);
  Vocabulary vocab = model.vocabulary;
  vocab.freeze();
  const SymbolSequence symbols = tokenize(a.text, &vocab);
  const StandardizedFeatures z{a.pitch, a.f0_std, a.rate};
  const SynthesisResult r = synthesize(model, symbols, z, a.max_frames);
  if (!r.path.is_legal()) throw NumericalError("synthesis produced an illegal alignment");
  const AudioBuffer audio = griffin_lim(r.mel, a.griffin_lim_iters, a.common.seed);

  const fs::path wav_path = fs::path(a.common.out_dir) / a.out;
  if (wav_path.has_parent_path()) fs::create_directories(wav_path.parent_path());
  echo_config(sub, a.common.out_dir);
  save_wav(audio, wav_path);
  fs::path mel_path = wav_path;
  mel_path.replace_extension(".mel");
  write_mel_binary(r.mel, mel_path);
  fs::path align_path = wav_path;
  align_path.replace_extension(".align.csv");
  const StateChain chain = encode(model, symbols, z);
  std::ostringstream s;
  s << "frame,state,symbol\n";
  for (std::size_t t = 0; t < r.path.states.size(); ++t) {
    const int n = r.path.states[t];
    s << t + 1 << "," << n + 1 << ","
      << model.vocabulary.symbol(symbols.ids[chain.symbol_of_state[n]]) << "\n";
  }
  write_text(align_path, s.str());
  if (r.truncated) {
    err << "warning: reached --max-frames " << a.max_frames << " before the last state\n";
  }
  out << "frames " << r.mel.num_frames() << "  seconds " << fmt(audio.duration(), 3)
      << (r.truncated ? "  (truncated)" : "") << "\n"
      << "wrote " << wav_path.string() << ", " << mel_path.string() << ", "
      << align_path.string() << "\n";
  return kExitOk;
}

// --------------------------------------------------------------------------
// sweep and creak-eval

struct EvalArgs {
  Common common;
  std::string checkpoint;
  std::string texts;     // one text per line
  std::string manifest;  // held-out texts when --texts is absent
  int max_frames = 2000;
  int griffin_lim_iters = 32;
};

void add_eval_options(CLI::App* sub, EvalArgs* a) {
  add_common(sub, &a->common);
  sub->add_option("--checkpoint", a->checkpoint, "Model checkpoint")->required();
  auto* texts = sub->add_option("--texts", a->texts, "File with one text per line");
  auto* manifest =
      sub->add_option("--manifest", a->manifest, "Use the held-out texts of this manifest");
  texts->excludes(manifest);
  sub->add_option("--max-frames", a->max_frames, "Synthesis frame limit")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  sub->add_option("--griffin-lim-iters", a->griffin_lim_iters, "Phase recovery iterations")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
}

std::vector<std::string> eval_texts(const EvalArgs& a) {
  std::vector<std::string> texts;
  if (!a.texts.empty()) {
    texts = read_lines(a.texts);
  } else if (!a.manifest.empty()) {
    for (const auto* r : read_manifest(a.manifest).with_split(Split::kHeldout)) {
      texts.push_back(r->text);
    }
  } else {
    throw ValidationError("one of --texts or --manifest is required");
  }
  if (texts.empty()) throw ValidationError("no texts to synthesise");
  return texts;
}

SweepConfig sweep_config(const EvalArgs& a) {
  SweepConfig sc;
  sc.max_frames = a.max_frames;
  sc.griffin_lim_iters = a.griffin_lim_iters;
  sc.seed = a.common.seed;
  sc.jobs = a.common.jobs;
  return sc;
}

struct SweepArgs {
  EvalArgs eval;
  std::string feature;
  std::string standardizer;
  std::vector<double> grid = {-3, -2, -1, 0, 1, 2, 3};
};

int cmd_sweep(const SweepArgs& a, const CLI::App& sub, std::ostream& out) {
  const ControlFeature feature = parse_control_feature(a.feature);
  const Standardizer standardizer = Standardizer::load(a.standardizer);
  const std::vector<std::string> texts = eval_texts(a.eval);
  const NeuralHmmModel model = load_checkpoint(a.eval.checkpoint);
  SweepConfig sc = sweep_config(a.eval);
  sc.grid = a.grid;
  const fs::path out_dir(a.eval.common.out_dir);
  echo_config(sub, out_dir);
  const SweepReport report = run_feature_sweep(model, texts, feature, sc);
  const std::string stem = "sweep_" + a.feature;
  write_sweep_csv(report, out_dir / (stem + ".csv"));
  write_sweep_summary_csv(report, out_dir / (stem + "_summary.csv"));
  nlohmann::json j = sweep_summary_json(report, standardizer);
  write_text(out_dir / (stem + ".json"), j.dump(2) + "\n");
  out << "feature " << a.feature << "  rows " << report.items.size() << "  truncated "
      << j["truncated"].get<std::size_t>() << "  unvoiced " << j["unvoiced"].get<std::size_t>()
      << "\n"
      << "spearman rho " << fmt(j["spearman_rho"].get<double>())
      << (j["degenerate"].get<bool>() ? " (degenerate)" : "") << "\n";
  out << std::left << std::setw(10) << "control" << "median\n";
  const auto& medians = j["medians"];
  for (std::size_t i = 0; i < report.grid.size() && i < medians.size(); ++i) {
    out << std::setw(10) << fmt(report.grid[i], 2)
        << (medians[i].is_number() ? fmt(medians[i].get<double>()) : "n/a") << "\n";
  }
  return kExitOk;
}

int cmd_creak_eval(const EvalArgs& a, const CLI::App& sub, std::ostream& out) {
  const std::vector<std::string> texts = eval_texts(a);
  const NeuralHmmModel model = load_checkpoint(a.checkpoint);
  const fs::path out_dir(a.common.out_dir);
  echo_config(sub, out_dir);
  const CreakStyleResult r =
      creak_style_eval(model, texts, default_creak_presets(), sweep_config(a));
  write_text(out_dir / "creak.json", creak_result_json(r).dump(2) + "\n");
  out << format_creak_table(r);
  return kExitOk;
}

// --------------------------------------------------------------------------
// stats

struct StatsArgs {
  Common common;
  std::string manifest;
  std::string groups;
  std::string ratings;
};

nlohmann::json stats_groups(const fs::path& path, std::ostream& out) {
  GroupSamples g;
  std::map<std::string, std::size_t> index;
  for (const auto& row : read_csv(path, {"group", "value"})) {
    const std::size_t r = std::stoul(row[2]);
    if (row[0].empty()) throw ValidationError(path.string() + ": row " + row[2] + ": empty group");
    const double v = parse_number(row[1], path, r);
    auto [it, fresh] = index.emplace(row[0], g.names.size());
    if (fresh) g.add(row[0], {});
    g.values[it->second].push_back(v);
  }
  const AnovaResult an = one_way_anova(g);
  const auto pairs = tukey_hsd(g);
  nlohmann::json j;
  j["anova"] = {{"f", std::isfinite(an.f) ? nlohmann::json(an.f) : nlohmann::json("inf")},
                {"p", an.p},
                {"df_between", an.df_between},
                {"df_within", an.df_within}};
  nlohmann::json tj = nlohmann::json::array();
  out << "ANOVA F(" << an.df_between << ", " << an.df_within << ") = " << fmt(an.f)
      << ", p = " << std::setprecision(4) << an.p << "\n";
  out << std::left << std::setw(30) << "pair" << std::setw(12) << "diff" << std::setw(10) << "q"
      << std::setw(12) << "p" << "significant\n";
  for (const auto& pr : pairs) {
    const std::string name = g.names[pr.a] + " vs " + g.names[pr.b];
    tj.push_back({{"a", g.names[pr.a]},
                  {"b", g.names[pr.b]},
                  {"difference", pr.difference},
                  {"q", std::isfinite(pr.q) ? nlohmann::json(pr.q) : nlohmann::json("inf")},
                  {"p", pr.p},
                  {"significant", pr.significant}});
    std::ostringstream p;
    p << std::setprecision(4) << pr.p;
    out << std::setw(30) << name << std::setw(12) << fmt(pr.difference) << std::setw(10)
        << fmt(pr.q, 3) << std::setw(12) << p.str() << (pr.significant ? "yes" : "no") << "\n";
  }
  j["tukey"] = tj;
  return j;
}

nlohmann::json stats_ratings(const fs::path& path, std::ostream& out) {
  std::vector<std::string> systems;
  std::map<std::string, std::vector<double>> scores;
  for (const auto& row : read_csv(path, {"system", "rater_id", "item_id", "score"})) {
    const std::size_t r = std::stoul(row[4]);
    const double v = parse_number(row[3], path, r);
    if (v < 1.0 || v > 5.0) {
      throw ValidationError(path.string() + ": row " + row[4] + ": score must be in 1..5");
    }
    if (!scores.count(row[0])) systems.push_back(row[0]);
    scores[row[0]].push_back(v);
  }
  nlohmann::json j = nlohmann::json::array();
  out << std::left << std::setw(20) << "system" << std::setw(8) << "n" << "mean   95% CI\n";
  for (const auto& s : systems) {
    const MeanCi ci = mean_ci(scores[s]);
    j.push_back({{"system", s}, {"n", scores[s].size()}, {"mean", ci.mean}, {"lo", ci.lo},
                 {"hi", ci.hi}});
    out << std::setw(20) << s << std::setw(8) << scores[s].size() << fmt(ci.mean, 2) << "   ["
        << fmt(ci.lo, 2) << ", " << fmt(ci.hi, 2) << "]\n";
  }
  return j;
}

nlohmann::json stats_corpus(const fs::path& path, std::ostream& out) {
  const CorpusStats s = corpus_stats(read_manifest(path).records);
  nlohmann::json j;
  j["utterances"] = s.ids.size();
  out << "utterances " << s.ids.size() << "\n"
      << std::left << std::setw(14) << "feature" << std::setw(10) << "mean" << std::setw(10)
      << "sd" << std::setw(10) << "min" << std::setw(10) << "q25" << std::setw(10) << "median"
      << std::setw(10) << "q75" << "max\n";
  for (int d = 0; d < 3; ++d) {
    j["features"][kFeatureNames[d]] = {{"mean", s.means[d]}, {"sd", s.stds[d]},
                                       {"quantiles", s.quantiles[d]}};
    out << std::setw(14) << kFeatureNames[d] << std::setw(10) << fmt(s.means[d])
        << std::setw(10) << fmt(s.stds[d]);
    for (int q = 0; q < 5; ++q) out << std::setw(q < 4 ? 10 : 0) << fmt(s.quantiles[d][q]);
    out << "\n";
  }
  j["centered_log_f0"] = s.centered_log_f0;
  j["centered_rate"] = s.centered_rate;
  return j;
}

int cmd_stats(const StatsArgs& a, const CLI::App& sub, std::ostream& out) {
  const int chosen = !a.manifest.empty() + !a.groups.empty() + !a.ratings.empty();
  if (chosen != 1) throw ValidationError("give exactly one of --manifest, --groups, --ratings");
  nlohmann::json j;
  if (!a.manifest.empty()) j["corpus"] = stats_corpus(a.manifest, out);
  if (!a.groups.empty()) j["groups"] = stats_groups(a.groups, out);
  if (!a.ratings.empty()) j["ratings"] = stats_ratings(a.ratings, out);
  const fs::path out_dir(a.common.out_dir);
  echo_config(sub, out_dir);
  write_text(out_dir / "stats.json", j.dump(2) + "\n");
  return kExitOk;
}

}  // namespace

void write_mel_binary(const MelSpectrogram& mel, const fs::path& path) {
  std::string blob(kMelMagic, kMelMagic + 8);
  put_u32(&blob, static_cast<std::uint32_t>(mel.frames.rows()));
  put_u32(&blob, static_cast<std::uint32_t>(mel.frames.cols()));
  for (Eigen::Index t = 0; t < mel.frames.rows(); ++t) {
    for (Eigen::Index d = 0; d < mel.frames.cols(); ++d) {
      put_u64(&blob, std::bit_cast<std::uint64_t>(mel.frames(t, d)));
    }
  }
  write_text(path, blob);
}

FrameMatrix read_mel_binary(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (blob.size() < 16 || !std::equal(kMelMagic, kMelMagic + 8, blob.begin())) {
    throw FormatError(path.string() + ": not a mel file");
  }
  const std::size_t rows = get_le(blob, 8, 4), cols = get_le(blob, 12, 4);
  if (blob.size() != 16 + 8 * rows * cols) throw FormatError(path.string() + ": wrong size");
  FrameMatrix m(rows, cols);
  for (std::size_t i = 0; i < rows * cols; ++i) {
    m(i / cols, i % cols) = std::bit_cast<double>(get_le(blob, 16 + 8 * i, 8));
  }
  return m;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Prosody-controllable neural HMM speech synthesis"};
  app.set_config("--config", "", "TOML-style settings file; flags override it");
  app.fallthrough();
  app.require_subcommand(1);

  PrepareArgs prep;
  CLI::App* s_prep = app.add_subcommand("prepare", "Segment recordings into a training manifest");
  add_common(s_prep, &prep.common);
  s_prep->add_option("--input-dir", prep.input_dir, "Directory of .wav files with .txt sidecars")
      ->required();
  s_prep->add_option("--corpus-id", prep.corpus_id)->capture_default_str();
  s_prep->add_option("--heldout-fraction", prep.heldout_fraction)
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  s_prep->add_option("--pause-threshold", prep.seg.pause_threshold_s, "Seconds")
      ->capture_default_str();
  s_prep->add_option("--silence-rms", prep.seg.silence_rms)->capture_default_str();
  s_prep->add_option("--min-group", prep.seg.min_group_s, "Seconds")->capture_default_str();
  s_prep->add_option("--max-duration", prep.seg.max_duration_s, "Seconds")
      ->capture_default_str();

  GenToyArgs toy;
  CLI::App* s_toy = app.add_subcommand("gen-toy", "Render a synthetic corpus with known prosody");
  add_common(s_toy, &toy.common);
  s_toy->add_option("--n-utterances", toy.toy.n_utterances)->capture_default_str();
  s_toy->add_option("--sample-rate", toy.toy.sample_rate)->capture_default_str();
  s_toy->add_option("--base-f0", toy.toy.base_f0, "Hz at pitch 0")->capture_default_str();
  s_toy->add_option("--pitch-span", toy.toy.pitch_span, "Octaves per sd")->capture_default_str();
  s_toy->add_option("--rate-base", toy.toy.rate_base, "Syllables per second")
      ->capture_default_str();
  s_toy->add_option("--min-syllables", toy.toy.min_syllables)->capture_default_str();
  s_toy->add_option("--max-syllables", toy.toy.max_syllables)->capture_default_str();
  s_toy->add_option("--heldout-fraction", toy.toy.heldout_fraction)->capture_default_str();

  TrainArgs tr;
  CLI::App* s_train = app.add_subcommand("train", "Train or fine-tune a model");
  add_common(s_train, &tr.common);
  s_train->add_option("--manifest", tr.manifest)->required();
  s_train->add_option("--init-from", tr.init_from, "Checkpoint to continue from");
  s_train->add_option("--iterations", tr.iterations)->capture_default_str()->check(
      CLI::NonNegativeNumber);
  s_train->add_option("--batch-size", tr.batch_size)->capture_default_str();
  s_train->add_option("--learning-rate", tr.learning_rate)->capture_default_str();
  s_train->add_option("--grad-clip", tr.grad_clip)->capture_default_str();
  s_train->add_option("--checkpoint-interval", tr.checkpoint_interval)->capture_default_str();
  s_train->add_option("--embedding-dim", tr.model.embedding_dim)->capture_default_str();
  s_train->add_option("--feature-embed-dim", tr.model.feature_embed_dim)->capture_default_str();
  s_train->add_option("--states-per-symbol", tr.model.states_per_symbol)->capture_default_str();
  s_train->add_option("--hidden-dim", tr.model.hidden_dim)->capture_default_str();
  s_train->add_option("--prenet-dim", tr.model.prenet_dim)->capture_default_str();
  s_train->add_option("--n-mels", tr.n_mels)->capture_default_str();
  s_train->add_option("--frame-length", tr.frame_length)->capture_default_str();
  s_train->add_option("--hop-length", tr.hop_length)->capture_default_str();
  s_train->add_option("--fmax", tr.fmax, "Capped at the Nyquist rate")->capture_default_str();

  SynthArgs sy;
  CLI::App* s_synth = app.add_subcommand("synth", "Synthesise one text");
  add_common(s_synth, &sy.common);
  s_synth->add_option("--checkpoint", sy.checkpoint)->required();
  s_synth->add_option("--text", sy.text)->required();
  s_synth->add_option("--pitch", sy.pitch, "Standardised mean log f0")->capture_default_str();
  s_synth->add_option("--f0-std", sy.f0_std, "Standardised f0 variability")
      ->capture_default_str();
  s_synth->add_option("--rate", sy.rate, "Standardised speech rate")->capture_default_str();
  s_synth->add_option("--out", sy.out, "WAV path under --out-dir")->capture_default_str();
  s_synth->add_option("--max-frames", sy.max_frames)->capture_default_str()->check(
      CLI::PositiveNumber);
  s_synth->add_option("--griffin-lim-iters,--gl-iters", sy.griffin_lim_iters)->capture_default_str();

  SweepArgs sw;
  CLI::App* s_sweep = app.add_subcommand("sweep", "Sweep one control and re-measure");
  add_eval_options(s_sweep, &sw.eval);
  s_sweep->add_option("--feature", sw.feature, "pitch, f0_std or rate")->required();
  s_sweep->add_option("--standardizer", sw.standardizer)->required();
  s_sweep->add_option("--grid", sw.grid, "Control values")->delimiter(',')->capture_default_str();

  StatsArgs st;
  CLI::App* s_stats = app.add_subcommand("stats", "Corpus, group or rating statistics");
  add_common(s_stats, &st.common);
  s_stats->add_option("--manifest", st.manifest, "Corpus feature distribution");
  s_stats->add_option("--groups", st.groups, "CSV group,value: ANOVA and Tukey HSD");
  s_stats->add_option("--ratings", st.ratings,
                      "CSV system,rater_id,item_id,score: mean and 95% CI");

  EvalArgs ce;
  CLI::App* s_creak = app.add_subcommand("creak-eval", "Creak styles with ANOVA and Tukey HSD");
  add_eval_options(s_creak, &ce);

  std::vector<char*> argv;
  std::vector<std::string> copy = args;
  if (copy.empty()) copy.push_back("phmm");
  for (auto& a : copy) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (s_prep->parsed()) return cmd_prepare(prep, *s_prep, out);
    if (s_toy->parsed()) return cmd_gen_toy(toy, *s_toy, out);
    if (s_train->parsed()) return cmd_train(tr, *s_train, out);
    if (s_synth->parsed()) return cmd_synth(sy, *s_synth, out, err);
    if (s_sweep->parsed()) return cmd_sweep(sw, *s_sweep, out);
    if (s_stats->parsed()) return cmd_stats(st, *s_stats, out);
    if (s_creak->parsed()) return cmd_creak_eval(ce, *s_creak, out);
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitUsage;
}

}  // namespace phmm::cli
