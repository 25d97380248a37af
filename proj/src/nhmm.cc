// phmm/nhmm.cc

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

#include "phmm/nhmm.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "phmm/error.hpp"
#include "phmm/rng.hpp"

namespace phmm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr char kMagic[8] = {'P', 'H', 'M', 'M', 'C', 'K', 'P', 'T'};

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

// log sigma(x) and log(1 - sigma(x)) without cancellation.
double log_sigmoid(double x) {
  return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}
double log_one_minus_sigmoid(double x) { return log_sigmoid(-x); }
double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Rows [x_{k-2}, ..., x_{k+2}] with zero padding.
Eigen::MatrixXd im2col(const Eigen::MatrixXd& x, int kernel) {
  const int k = static_cast<int>(x.rows());
  const int d = static_cast<int>(x.cols());
  const int half = kernel / 2;
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(k, kernel * d);
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < kernel; ++j) {
      const int src = i + j - half;
      if (src >= 0 && src < k) c.block(i, j * d, 1, d) = x.row(src);
    }
  }
  return c;
}

// Adjoint of im2col.
Eigen::MatrixXd col2im(const Eigen::MatrixXd& gc, int kernel, int d) {
  const int k = static_cast<int>(gc.rows());
  const int half = kernel / 2;
  Eigen::MatrixXd gx = Eigen::MatrixXd::Zero(k, d);
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < kernel; ++j) {
      const int src = i + j - half;
      if (src >= 0 && src < k) gx.row(src) += gc.block(i, j * d, 1, d);
    }
  }
  return gx;
}

// Decoder-side quantities shared by likelihood, gradient and Viterbi.
struct Tables {
  Eigen::MatrixXd x;           // T x M normalised frames
  Eigen::MatrixXd prev;        // T x M previous frames (row 0 zero)
  Eigen::MatrixXd pre;         // T x P prenet activations
  Eigen::MatrixXd frame_mean;  // T x M
  Eigen::VectorXd frame_logit; // T
  Eigen::MatrixXd state_mean;  // N x M (includes mean bias)
  Eigen::MatrixXd logstd;      // N x M
  Eigen::MatrixXd inv_std;     // N x M
  Eigen::VectorXd state_logit; // N (includes transition bias)
  Eigen::MatrixXd log_b;       // T x N
  int frames = 0;
  int states = 0;

  int lo(int t) const { return std::max(0, states - frames + t); }
  int hi(int t) const { return std::min(t, states - 1); }
  double logit(int t, int n) const { return state_logit(n) + frame_logit(t); }
};

void check_shapes(const NeuralHmmModel& model, const StateChain& chain,
                  const MelSpectrogram& mel) {
  const ModelConfig& c = model.config;
  if (chain.num_states() < 1) throw ValidationError("state chain is empty");
  if (chain.h.cols() != c.hidden_dim) {
    throw ValidationError("state chain width " + std::to_string(chain.h.cols()) +
                          " != hidden_dim " + std::to_string(c.hidden_dim));
  }
  if (mel.frames.cols() != c.n_mels) {
    throw ValidationError("mel has " + std::to_string(mel.frames.cols()) +
                          " bands, model expects " + std::to_string(c.n_mels));
  }
  if (mel.num_frames() < chain.num_states()) {
    throw ValidationError("T = " + std::to_string(mel.num_frames()) +
                          " frames is fewer than N = " +
                          std::to_string(chain.num_states()) + " states");
  }
}

Tables build_tables(const NeuralHmmModel& model, const StateChain& chain,
                    const MelSpectrogram& mel) {
  check_shapes(model, chain, mel);
  const Parameters& p = model.params;
  const int h_dim = model.config.hidden_dim;
  const int p_dim = model.config.prenet_dim;
  const int m = model.config.n_mels;
  Tables tb;
  tb.frames = mel.num_frames();
  tb.states = chain.num_states();
  const int t_len = tb.frames;
  const int n_len = tb.states;

  tb.x.resize(t_len, m);
  for (int t = 0; t < t_len; ++t) {
    for (int d = 0; d < m; ++d) {
      tb.x(t, d) = (mel.frames(t, d) - model.mel_mean(d)) / model.mel_std(d);
    }
  }
  tb.prev = Eigen::MatrixXd::Zero(t_len, m);
  if (t_len > 1) tb.prev.bottomRows(t_len - 1) = tb.x.topRows(t_len - 1);
  tb.pre = ((tb.prev * p.prenet_w.transpose()).rowwise() +
            p.prenet_b.col(0).transpose())
               .array()
               .tanh()
               .matrix();
  tb.frame_mean = tb.pre * p.mean_w.rightCols(p_dim).transpose();
  tb.frame_logit = tb.pre * p.trans_w.bottomRows(p_dim);

  tb.state_mean = (chain.h * p.mean_w.leftCols(h_dim).transpose()).rowwise() +
                  p.mean_b.col(0).transpose();
  tb.logstd = (chain.h * p.logstd_w.transpose()).rowwise() +
              p.logstd_b.col(0).transpose();
  tb.inv_std = (-tb.logstd.array()).exp().matrix();
  tb.state_logit = (chain.h * p.trans_w.topRows(h_dim)).array() + p.trans_b(0, 0);

  const double log_norm = -0.5 * m * std::log(2.0 * std::numbers::pi);
  const Eigen::VectorXd logstd_sum = tb.logstd.rowwise().sum();
  tb.log_b = Eigen::MatrixXd::Constant(t_len, n_len, kNegInf);
  for (int t = 0; t < t_len; ++t) {
    for (int n = tb.lo(t); n <= tb.hi(t); ++n) {
      const double quad =
          ((tb.x.row(t) - tb.state_mean.row(n) - tb.frame_mean.row(t)).array() *
           tb.inv_std.row(n).array())
              .square()
              .sum();
      const double v = log_norm - logstd_sum(n) - 0.5 * quad;
      const double lg = tb.logit(t, n);
      if (!std::isfinite(v) || !std::isfinite(lg)) {
        throw NumericalError("non-finite emission or transition at frame " +
                             std::to_string(t + 1) + ", state " +
                             std::to_string(n + 1));
      }
      tb.log_b(t, n) = v;
    }
  }
  return tb;
}

Eigen::MatrixXd forward_pass(const Tables& tb) {
  Eigen::MatrixXd alpha = Eigen::MatrixXd::Constant(tb.frames, tb.states, kNegInf);
  alpha(0, 0) = tb.log_b(0, 0);
  for (int t = 1; t < tb.frames; ++t) {
    for (int n = tb.lo(t); n <= tb.hi(t); ++n) {
      double acc = kNegInf;
      if (alpha(t - 1, n) != kNegInf) {
        acc = alpha(t - 1, n) + log_one_minus_sigmoid(tb.logit(t - 1, n));
      }
      if (n > 0 && alpha(t - 1, n - 1) != kNegInf) {
        acc = log_add(acc, alpha(t - 1, n - 1) + log_sigmoid(tb.logit(t - 1, n - 1)));
      }
      alpha(t, n) = acc + tb.log_b(t, n);
    }
  }
  return alpha;
}

Eigen::MatrixXd backward_pass(const Tables& tb) {
  Eigen::MatrixXd beta = Eigen::MatrixXd::Constant(tb.frames, tb.states, kNegInf);
  beta(tb.frames - 1, tb.states - 1) = 0.0;
  for (int t = tb.frames - 2; t >= 0; --t) {
    for (int n = tb.lo(t); n <= tb.hi(t); ++n) {
      double acc = kNegInf;
      if (beta(t + 1, n) != kNegInf) {
        acc = log_one_minus_sigmoid(tb.logit(t, n)) + tb.log_b(t + 1, n) + beta(t + 1, n);
      }
      if (n + 1 < tb.states && beta(t + 1, n + 1) != kNegInf) {
        acc = log_add(acc, log_sigmoid(tb.logit(t, n)) + tb.log_b(t + 1, n + 1) +
                               beta(t + 1, n + 1));
      }
      beta(t, n) = acc;
    }
  }
  return beta;
}

double total_log_likelihood(const Tables& tb, const Eigen::MatrixXd& alpha) {
  const double ll = alpha(tb.frames - 1, tb.states - 1);
  if (!std::isfinite(ll)) {
    throw NumericalError("forward recursion produced a non-finite likelihood at frame " +
                         std::to_string(tb.frames) + ", state " +
                         std::to_string(tb.states));
  }
  return ll;
}

void check_model(const NeuralHmmModel& model) {
  const ModelConfig& c = model.config;
  if (model.mel_mean.size() != c.n_mels || model.mel_std.size() != c.n_mels) {
    throw ValidationError("model normalisation does not match n_mels");
  }
}

nlohmann::json mel_config_json(const MelConfig& m) {
  return nlohmann::json{{"sample_rate", m.sample_rate}, {"frame_length", m.frame_length},
                        {"hop_length", m.hop_length},   {"n_mels", m.n_mels},
                        {"fmin", m.fmin},               {"fmax", m.fmax},
                        {"log_floor", m.log_floor}};
}

MelConfig mel_config_from_json(const nlohmann::json& j) {
  MelConfig m;
  m.sample_rate = j.at("sample_rate").get<int>();
  m.frame_length = j.at("frame_length").get<int>();
  m.hop_length = j.at("hop_length").get<int>();
  m.n_mels = j.at("n_mels").get<int>();
  m.fmin = j.at("fmin").get<double>();
  m.fmax = j.at("fmax").get<double>();
  m.log_floor = j.at("log_floor").get<double>();
  return m;
}

void put_u32(std::string* s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s->push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string* s, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) s->push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
std::uint64_t get_le(const std::string& s, std::size_t off, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[off + i])) << (8 * i);
  }
  return v;
}

// Expected tensor shapes and the config fields that determine them.
struct TensorSpec {
  std::string name;
  Eigen::Index rows, cols;
  std::string row_field, col_field;
};

std::vector<TensorSpec> tensor_specs(const ModelConfig& c) {
  const int k = ModelConfig::kConvKernel;
  const std::string input = "embedding_dim+feature_embed_dim+feature_dim";
  return {
      {"embedding", c.vocab_size, c.embedding_dim, "vocab_size", "embedding_dim"},
      {"conv1_w", c.embedding_dim, k * c.embedding_dim, "embedding_dim", "embedding_dim"},
      {"conv1_b", c.embedding_dim, 1, "embedding_dim", ""},
      {"conv2_w", c.embedding_dim, k * c.embedding_dim, "embedding_dim", "embedding_dim"},
      {"conv2_b", c.embedding_dim, 1, "embedding_dim", ""},
      {"feature_w", c.feature_embed_dim, c.feature_dim, "feature_embed_dim", "feature_dim"},
      {"feature_b", c.feature_embed_dim, 1, "feature_embed_dim", ""},
      {"state_w", c.hidden_dim, c.state_input_dim(), "hidden_dim", input},
      {"state_b", c.hidden_dim, 1, "hidden_dim", ""},
      {"state_offset", c.states_per_symbol, c.hidden_dim, "states_per_symbol", "hidden_dim"},
      {"prenet_w", c.prenet_dim, c.n_mels, "prenet_dim", "n_mels"},
      {"prenet_b", c.prenet_dim, 1, "prenet_dim", ""},
      {"mean_w", c.n_mels, c.hidden_dim + c.prenet_dim, "n_mels", "hidden_dim+prenet_dim"},
      {"mean_b", c.n_mels, 1, "n_mels", ""},
      {"logstd_w", c.n_mels, c.hidden_dim, "n_mels", "hidden_dim"},
      {"logstd_b", c.n_mels, 1, "n_mels", ""},
      {"trans_w", c.hidden_dim + c.prenet_dim, 1, "hidden_dim+prenet_dim", ""},
      {"trans_b", 1, 1, "", ""},
      {"mel_mean", c.n_mels, 1, "n_mels", ""},
      {"mel_std", c.n_mels, 1, "n_mels", ""},
  };
}

}  // namespace

void ModelConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v < 1) throw ValidationError(std::string("ModelConfig.") + name + " must be >= 1");
  };
  positive(vocab_size, "vocab_size");
  positive(embedding_dim, "embedding_dim");
  positive(feature_embed_dim, "feature_embed_dim");
  positive(states_per_symbol, "states_per_symbol");
  positive(hidden_dim, "hidden_dim");
  positive(n_mels, "n_mels");
  positive(prenet_dim, "prenet_dim");
  if (feature_dim != 3) throw ValidationError("ModelConfig.feature_dim must be 3");
  if (feature_embed_dim != embedding_dim) {
    throw ValidationError("ModelConfig.feature_embed_dim must equal embedding_dim");
  }
}

nlohmann::json ModelConfig::to_json() const {
  return nlohmann::json{{"vocab_size", vocab_size},
                        {"embedding_dim", embedding_dim},
                        {"feature_dim", feature_dim},
                        {"feature_embed_dim", feature_embed_dim},
                        {"states_per_symbol", states_per_symbol},
                        {"hidden_dim", hidden_dim},
                        {"n_mels", n_mels},
                        {"prenet_dim", prenet_dim},
                        {"seed", seed}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  auto read_int = [&](const char* name, int* out) {
    if (!j.contains(name)) throw FormatError(std::string("model config: missing field ") + name);
    const auto& v = j.at(name);
    if (!v.is_number_integer()) {
      throw FormatError(std::string("model config: field ") + name + " is not an integer");
    }
    *out = v.get<int>();
  };
  read_int("vocab_size", &c.vocab_size);
  read_int("embedding_dim", &c.embedding_dim);
  read_int("feature_dim", &c.feature_dim);
  read_int("feature_embed_dim", &c.feature_embed_dim);
  read_int("states_per_symbol", &c.states_per_symbol);
  read_int("hidden_dim", &c.hidden_dim);
  read_int("n_mels", &c.n_mels);
  read_int("prenet_dim", &c.prenet_dim);
  if (!j.contains("seed") || !j.at("seed").is_number_integer()) {
    throw FormatError("model config: field seed missing or not an integer");
  }
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

Parameters Parameters::zeros_like(const Parameters& like) {
  Parameters z = like;
  z.for_each([](const char*, Eigen::MatrixXd& m) { m.setZero(); });
  return z;
}

std::size_t Parameters::count() const {
  std::size_t n = 0;
  for_each([&](const char*, const Eigen::MatrixXd& m) { n += m.size(); });
  return n;
}

double Parameters::squared_norm() const {
  double s = 0.0;
  for_each([&](const char*, const Eigen::MatrixXd& m) { s += m.squaredNorm(); });
  return s;
}

void Parameters::scale(double s) {
  for_each([&](const char*, Eigen::MatrixXd& m) { m *= s; });
}

void Parameters::add_scaled(const Parameters& other, double s) {
  std::vector<const Eigen::MatrixXd*> src;
  other.for_each([&](const char*, const Eigen::MatrixXd& m) { src.push_back(&m); });
  std::size_t i = 0;
  for_each([&](const char* name, Eigen::MatrixXd& m) {
    const Eigen::MatrixXd& o = *src[i++];
    if (o.rows() != m.rows() || o.cols() != m.cols()) {
      throw ValidationError(std::string("parameter shape mismatch in ") + name);
    }
    m.noalias() += s * o;
  });
}

bool Parameters::all_finite() const {
  bool ok = true;
  for_each([&](const char*, const Eigen::MatrixXd& m) { ok = ok && m.allFinite(); });
  return ok;
}

bool Parameters::operator==(const Parameters& o) const {
  std::vector<const Eigen::MatrixXd*> other;
  o.for_each([&](const char*, const Eigen::MatrixXd& m) { other.push_back(&m); });
  bool eq = true;
  std::size_t i = 0;
  for_each([&](const char*, const Eigen::MatrixXd& m) {
    const Eigen::MatrixXd& b = *other[i++];
    eq = eq && m.rows() == b.rows() && m.cols() == b.cols() && m == b;
  });
  return eq;
}

NeuralHmmModel init_model(const ModelConfig& config) {
  std::vector<std::string> symbols = {"<bos>", "<eos>"};
  for (int i = 2; i < config.vocab_size; ++i) symbols.push_back("s" + std::to_string(i));
  MelConfig mel;
  mel.n_mels = config.n_mels;
  return init_model(config, Vocabulary(symbols), mel);
}

NeuralHmmModel init_model(const ModelConfig& config, const Vocabulary& vocabulary,
                          const MelConfig& mel_config) {
  config.validate();
  if (vocabulary.size() != config.vocab_size) {
    throw ValidationError("vocabulary size " + std::to_string(vocabulary.size()) +
                          " != vocab_size " + std::to_string(config.vocab_size));
  }
  if (mel_config.n_mels != config.n_mels) {
    throw ValidationError("mel config n_mels does not match model n_mels");
  }
  NeuralHmmModel model;
  model.config = config;
  model.vocabulary = vocabulary;
  model.mel_config = mel_config;
  model.mel_mean = Eigen::VectorXd::Zero(config.n_mels);
  model.mel_std = Eigen::VectorXd::Ones(config.n_mels);

  Rng rng(config.seed);
  auto glorot = [&](Eigen::Index rows, Eigen::Index cols, double fan_in, double fan_out) {
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.uniform(-a, a);
    }
    return m;
  };
  const int d = config.embedding_dim;
  const int k = ModelConfig::kConvKernel;
  const int h = config.hidden_dim;
  const int pd = config.prenet_dim;
  const int m = config.n_mels;
  const int f = config.feature_embed_dim;
  const int in = config.state_input_dim();
  Parameters& p = model.params;
  p.embedding = glorot(config.vocab_size, d, config.vocab_size, d);
  p.conv1_w = glorot(d, k * d, k * d, d);
  p.conv1_b = Eigen::MatrixXd::Zero(d, 1);
  p.conv2_w = glorot(d, k * d, k * d, d);
  p.conv2_b = Eigen::MatrixXd::Zero(d, 1);
  p.feature_w = glorot(f, config.feature_dim, config.feature_dim, f);
  p.feature_b = Eigen::MatrixXd::Zero(f, 1);
  p.state_w = glorot(h, in, in, h);
  p.state_b = Eigen::MatrixXd::Zero(h, 1);
  p.state_offset = glorot(config.states_per_symbol, h, config.states_per_symbol, h);
  p.prenet_w = glorot(pd, m, m, pd);
  p.prenet_b = Eigen::MatrixXd::Zero(pd, 1);
  p.mean_w = glorot(m, h + pd, h + pd, m);
  p.mean_b = Eigen::MatrixXd::Zero(m, 1);
  p.logstd_w = glorot(m, h, h, m);
  p.logstd_b = Eigen::MatrixXd::Zero(m, 1);
  p.trans_w = glorot(h + pd, 1, h + pd, 1);
  p.trans_b = Eigen::MatrixXd::Constant(1, 1, -1.0);
  return model;
}

std::size_t parameter_count(const ModelConfig& c) {
  const std::size_t d = c.embedding_dim, h = c.hidden_dim, pd = c.prenet_dim;
  const std::size_t m = c.n_mels, f = c.feature_embed_dim, k = ModelConfig::kConvKernel;
  const std::size_t in = c.state_input_dim();
  return c.vocab_size * d + 2 * (d * k * d + d) + (f * c.feature_dim + f) +
         (h * in + h) + c.states_per_symbol * h + (pd * m + pd) +
         (m * (h + pd) + m) + (m * h + m) + (h + pd + 1);
}

StateChain encode(const NeuralHmmModel& model, const SymbolSequence& symbols,
                  const StandardizedFeatures& z) {
  const ModelConfig& c = model.config;
  const Parameters& p = model.params;
  if (symbols.ids.empty()) throw ValidationError("encode: empty symbol sequence");
  const auto za = z.as_array();
  for (double v : za) {
    if (!std::isfinite(v)) throw ValidationError("encode: non-finite control vector");
  }
  const int k_len = static_cast<int>(symbols.ids.size());
  const int d = c.embedding_dim;
  const int kernel = ModelConfig::kConvKernel;
  if (p.embedding.rows() != c.vocab_size || p.embedding.cols() != d) {
    throw ValidationError("encode: embedding table does not match the config");
  }

  StateChain chain;
  chain.symbols = symbols.ids;
  chain.z = Eigen::Vector3d(za[0], za[1], za[2]);
  chain.x0.resize(k_len, d);
  for (int k = 0; k < k_len; ++k) {
    const int id = symbols.ids[k];
    if (id < 0 || id >= c.vocab_size) {
      throw ValidationError("encode: symbol id " + std::to_string(id) + " out of range");
    }
    chain.x0.row(k) = p.embedding.row(id);
  }
  chain.x1 = ((im2col(chain.x0, kernel) * p.conv1_w.transpose()).rowwise() +
              p.conv1_b.col(0).transpose())
                 .array()
                 .tanh()
                 .matrix();
  chain.x2 = ((im2col(chain.x1, kernel) * p.conv2_w.transpose()).rowwise() +
              p.conv2_b.col(0).transpose())
                 .array()
                 .tanh()
                 .matrix();
  chain.f = p.feature_w * chain.z + p.feature_b.col(0);

  const int f = c.feature_embed_dim;
  chain.u.resize(k_len, c.state_input_dim());
  for (int k = 0; k < k_len; ++k) {
    chain.u.block(k, 0, 1, d) = chain.x2.row(k);
    chain.u.block(k, d, 1, f) = chain.f.transpose();
    chain.u.block(k, d + f, 1, 3) = chain.z.transpose();
  }
  const Eigen::MatrixXd proj =
      (chain.u * p.state_w.transpose()).rowwise() + p.state_b.col(0).transpose();
  const int s_len = c.states_per_symbol;
  chain.h.resize(static_cast<Eigen::Index>(k_len) * s_len, c.hidden_dim);
  for (int k = 0; k < k_len; ++k) {
    for (int s = 0; s < s_len; ++s) {
      const int n = k * s_len + s;
      chain.h.row(n) = (proj.row(k) + p.state_offset.row(s)).array().tanh().matrix();
      chain.symbol_of_state.push_back(k);
      chain.substate.push_back(s);
    }
  }
  if (!chain.h.allFinite()) throw NumericalError("encode: non-finite state vector");
  return chain;
}

EmissionTable emission_table(const NeuralHmmModel& model, const StateChain& chain,
                             const MelSpectrogram& mel) {
  check_model(model);
  const Tables tb = build_tables(model, chain, mel);
  EmissionTable out;
  out.log_emission = tb.log_b;
  out.logit = Eigen::MatrixXd::Zero(tb.frames, tb.states);
  for (int t = 0; t < tb.frames; ++t) {
    for (int n = tb.lo(t); n <= tb.hi(t); ++n) out.logit(t, n) = tb.logit(t, n);
  }
  return out;
}

double forward_nll(const NeuralHmmModel& model, const StateChain& chain,
                   const MelSpectrogram& mel) {
  check_model(model);
  const Tables tb = build_tables(model, chain, mel);
  const Eigen::MatrixXd alpha = forward_pass(tb);
  return -total_log_likelihood(tb, alpha) / tb.frames;
}

double accumulate_gradient(const NeuralHmmModel& model, const StateChain& chain,
                           const MelSpectrogram& mel, Parameters* grad) {
  check_model(model);
  const ModelConfig& c = model.config;
  const Parameters& p = model.params;
  const Tables tb = build_tables(model, chain, mel);
  const Eigen::MatrixXd alpha = forward_pass(tb);
  const double log_z = total_log_likelihood(tb, alpha);
  const Eigen::MatrixXd beta = backward_pass(tb);
  const int t_len = tb.frames;
  const int n_len = tb.states;
  const int m = c.n_mels;
  const int h_dim = c.hidden_dim;
  const int p_dim = c.prenet_dim;
  const double inv_t = 1.0 / t_len;

  // Adjoints of the per-state and per-frame head outputs.
  Eigen::MatrixXd g_state_mean = Eigen::MatrixXd::Zero(n_len, m);
  Eigen::MatrixXd g_frame_mean = Eigen::MatrixXd::Zero(t_len, m);
  Eigen::MatrixXd g_logstd = Eigen::MatrixXd::Zero(n_len, m);
  Eigen::VectorXd g_state_logit = Eigen::VectorXd::Zero(n_len);
  Eigen::VectorXd g_frame_logit = Eigen::VectorXd::Zero(t_len);

  Eigen::RowVectorXd r(m), g_mu(m);
  for (int t = 0; t < t_len; ++t) {
    for (int n = tb.lo(t); n <= tb.hi(t); ++n) {
      if (alpha(t, n) == kNegInf || beta(t, n) == kNegInf) continue;
      const double gamma = std::exp(alpha(t, n) + beta(t, n) - log_z);
      if (gamma != 0.0) {
        const double g_logb = -gamma * inv_t;
        r = (tb.x.row(t) - tb.state_mean.row(n) - tb.frame_mean.row(t)).cwiseProduct(
            tb.inv_std.row(n));
        g_mu = g_logb * r.cwiseProduct(tb.inv_std.row(n));
        g_state_mean.row(n) += g_mu;
        g_frame_mean.row(t) += g_mu;
        g_logstd.row(n) += g_logb * (r.array().square() - 1.0).matrix();
      }
      if (t + 1 >= t_len) continue;
      const double lg = tb.logit(t, n);
      const double tau = sigmoid(lg);
      double xi_stay = 0.0, xi_adv = 0.0;
      if (beta(t + 1, n) != kNegInf) {
        xi_stay = std::exp(alpha(t, n) + log_one_minus_sigmoid(lg) + tb.log_b(t + 1, n) +
                           beta(t + 1, n) - log_z);
      }
      if (n + 1 < n_len && beta(t + 1, n + 1) != kNegInf) {
        xi_adv = std::exp(alpha(t, n) + log_sigmoid(lg) + tb.log_b(t + 1, n + 1) +
                          beta(t + 1, n + 1) - log_z);
      }
      const double g_logit = -(xi_adv * (1.0 - tau) - xi_stay * tau) * inv_t;
      g_state_logit(n) += g_logit;
      g_frame_logit(t) += g_logit;
    }
  }

  Parameters& g = *grad;
  // Heads.
  g.mean_w.leftCols(h_dim).noalias() += g_state_mean.transpose() * chain.h;
  g.mean_w.rightCols(p_dim).noalias() += g_frame_mean.transpose() * tb.pre;
  g.mean_b.col(0) += g_state_mean.colwise().sum().transpose();
  g.logstd_w.noalias() += g_logstd.transpose() * chain.h;
  g.logstd_b.col(0) += g_logstd.colwise().sum().transpose();
  g.trans_w.topRows(h_dim).noalias() += chain.h.transpose() * g_state_logit;
  g.trans_w.bottomRows(p_dim).noalias() += tb.pre.transpose() * g_frame_logit;
  g.trans_b(0, 0) += g_state_logit.sum();

  // Prenet.
  Eigen::MatrixXd g_pre = g_frame_mean * p.mean_w.rightCols(p_dim);
  g_pre.noalias() += g_frame_logit * p.trans_w.bottomRows(p_dim).transpose();
  const Eigen::MatrixXd g_pre_act =
      g_pre.cwiseProduct((1.0 - tb.pre.array().square()).matrix());
  g.prenet_w.noalias() += g_pre_act.transpose() * tb.prev;
  g.prenet_b.col(0) += g_pre_act.colwise().sum().transpose();

  // State vectors.
  Eigen::MatrixXd g_h = g_state_mean * p.mean_w.leftCols(h_dim);
  g_h.noalias() += g_logstd * p.logstd_w;
  g_h.noalias() += g_state_logit * p.trans_w.topRows(h_dim).transpose();
  const Eigen::MatrixXd g_h_act =
      g_h.cwiseProduct((1.0 - chain.h.array().square()).matrix());

  const int k_len = static_cast<int>(chain.x0.rows());
  Eigen::MatrixXd g_proj = Eigen::MatrixXd::Zero(k_len, h_dim);
  for (int n = 0; n < n_len; ++n) {
    g_proj.row(chain.symbol_of_state[n]) += g_h_act.row(n);
    g.state_offset.row(chain.substate[n]) += g_h_act.row(n);
  }
  g.state_w.noalias() += g_proj.transpose() * chain.u;
  g.state_b.col(0) += g_proj.colwise().sum().transpose();
  const Eigen::MatrixXd g_u = g_proj * p.state_w;

  // Feature encoder.
  const int d = c.embedding_dim;
  const int f = c.feature_embed_dim;
  const Eigen::VectorXd g_f = g_u.middleCols(d, f).colwise().sum().transpose();
  g.feature_w.noalias() += g_f * chain.z.transpose();
  g.feature_b.col(0) += g_f;

  // Convolution stack and embeddings.
  const int kernel = ModelConfig::kConvKernel;
  const Eigen::MatrixXd g_a2 =
      g_u.leftCols(d).cwiseProduct((1.0 - chain.x2.array().square()).matrix());
  g.conv2_w.noalias() += g_a2.transpose() * im2col(chain.x1, kernel);
  g.conv2_b.col(0) += g_a2.colwise().sum().transpose();
  const Eigen::MatrixXd g_x1 = col2im(g_a2 * p.conv2_w, kernel, d);
  const Eigen::MatrixXd g_a1 = g_x1.cwiseProduct((1.0 - chain.x1.array().square()).matrix());
  g.conv1_w.noalias() += g_a1.transpose() * im2col(chain.x0, kernel);
  g.conv1_b.col(0) += g_a1.colwise().sum().transpose();
  const Eigen::MatrixXd g_x0 = col2im(g_a1 * p.conv1_w, kernel, d);
  for (int k = 0; k < k_len; ++k) g.embedding.row(chain.symbols[k]) += g_x0.row(k);

  return -log_z * inv_t;
}

Parameters grad_nll(const NeuralHmmModel& model, const StateChain& chain,
                    const MelSpectrogram& mel) {
  Parameters g = Parameters::zeros_like(model.params);
  accumulate_gradient(model, chain, mel, &g);
  return g;
}

bool AlignmentPath::is_legal(int num_states) const {
  if (states.empty() || states.front() != 0) return false;
  for (std::size_t t = 1; t < states.size(); ++t) {
    const int step = states[t] - states[t - 1];
    if (step != 0 && step != 1) return false;
  }
  if (num_states > 0 && states.back() != num_states - 1) return false;
  return true;
}

AlignmentPath viterbi_align(const NeuralHmmModel& model, const StateChain& chain,
                            const MelSpectrogram& mel) {
  check_model(model);
  const Tables tb = build_tables(model, chain, mel);
  const int t_len = tb.frames;
  const int n_len = tb.states;
  Eigen::MatrixXd delta = Eigen::MatrixXd::Constant(t_len, n_len, kNegInf);
  // back(t, n) = 1 when the best predecessor of (t, n) is n - 1.
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> back =
      Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>::Zero(t_len, n_len);
  delta(0, 0) = tb.log_b(0, 0);
  for (int t = 1; t < t_len; ++t) {
    for (int n = tb.lo(t); n <= tb.hi(t); ++n) {
      double stay = kNegInf, adv = kNegInf;
      if (delta(t - 1, n) != kNegInf) {
        stay = delta(t - 1, n) + log_one_minus_sigmoid(tb.logit(t - 1, n));
      }
      if (n > 0 && delta(t - 1, n - 1) != kNegInf) {
        adv = delta(t - 1, n - 1) + log_sigmoid(tb.logit(t - 1, n - 1));
      }
      if (adv > stay) {
        delta(t, n) = adv + tb.log_b(t, n);
        back(t, n) = 1;
      } else {
        delta(t, n) = stay + tb.log_b(t, n);
      }
    }
  }
  AlignmentPath path;
  path.log_prob = delta(t_len - 1, n_len - 1);
  if (!std::isfinite(path.log_prob)) {
    throw NumericalError("viterbi: no finite path to frame " + std::to_string(t_len) +
                         ", state " + std::to_string(n_len));
  }
  path.states.assign(t_len, 0);
  int n = n_len - 1;
  for (int t = t_len - 1; t >= 0; --t) {
    path.states[t] = n;
    if (t > 0 && back(t, n)) --n;
  }
  return path;
}

SynthesisResult synthesize(const NeuralHmmModel& model, const SymbolSequence& symbols,
                           const StandardizedFeatures& z, int max_frames) {
  check_model(model);
  const StateChain chain = encode(model, symbols, z);
  const int n_len = chain.num_states();
  if (max_frames < n_len) {
    throw ValidationError("synthesize: max_frames " + std::to_string(max_frames) +
                          " < number of states " + std::to_string(n_len));
  }
  const Parameters& p = model.params;
  const int m = model.config.n_mels;
  const int h_dim = model.config.hidden_dim;
  const int p_dim = model.config.prenet_dim;
  const double floor_log = std::log(model.mel_config.log_floor);

  const Eigen::MatrixXd state_mean =
      (chain.h * p.mean_w.leftCols(h_dim).transpose()).rowwise() +
      p.mean_b.col(0).transpose();
  const Eigen::VectorXd state_logit =
      (chain.h * p.trans_w.topRows(h_dim)).array() + p.trans_b(0, 0);
  const Eigen::MatrixXd mean_pre = p.mean_w.rightCols(p_dim);
  const Eigen::VectorXd trans_pre = p.trans_w.bottomRows(p_dim).col(0);

  SynthesisResult result;
  std::vector<Eigen::VectorXd> frames;
  Eigen::VectorXd prev = Eigen::VectorXd::Zero(m);
  int n = 0;
  bool finished = false;
  for (int t = 0; t < max_frames; ++t) {
    const Eigen::VectorXd pre = (p.prenet_w * prev + p.prenet_b.col(0)).array().tanh().matrix();
    const Eigen::VectorXd mu = state_mean.row(n).transpose() + mean_pre * pre;
    const double logit = state_logit(n) + trans_pre.dot(pre);
    Eigen::VectorXd out(m);
    for (int d = 0; d < m; ++d) {
      out(d) = std::max(mu(d) * model.mel_std(d) + model.mel_mean(d), floor_log);
    }
    if (!out.allFinite() || !std::isfinite(logit)) {
      throw NumericalError("synthesize: non-finite output at frame " + std::to_string(t + 1) +
                           ", state " + std::to_string(n + 1));
    }
    frames.push_back(out);
    result.path.states.push_back(n);
    prev = ((out - model.mel_mean).array() / model.mel_std.array()).matrix();
    if (logit >= 0.0) {
      if (n == n_len - 1) {
        finished = true;
        break;
      }
      ++n;
    }
  }
  result.truncated = !finished;
  result.mel.config = model.mel_config;
  result.mel.frames.resize(static_cast<Eigen::Index>(frames.size()), m);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    result.mel.frames.row(static_cast<Eigen::Index>(t)) = frames[t].transpose();
  }
  return result;
}

void save_checkpoint(const NeuralHmmModel& model, const std::filesystem::path& path) {
  model.config.validate();
  check_model(model);
  std::vector<std::pair<std::string, const Eigen::MatrixXd*>> tensors;
  model.params.for_each(
      [&](const char* name, const Eigen::MatrixXd& m) { tensors.emplace_back(name, &m); });
  const Eigen::MatrixXd mel_mean = model.mel_mean;
  const Eigen::MatrixXd mel_std = model.mel_std;
  tensors.emplace_back("mel_mean", &mel_mean);
  tensors.emplace_back("mel_std", &mel_std);

  nlohmann::json manifest = nlohmann::json::array();
  std::string data;
  for (const auto& [name, m] : tensors) {
    manifest.push_back({{"name", name},
                        {"rows", m->rows()},
                        {"cols", m->cols()},
                        {"offset", data.size()}});
    for (Eigen::Index i = 0; i < m->rows(); ++i) {
      for (Eigen::Index j = 0; j < m->cols(); ++j) {
        put_u64(&data, std::bit_cast<std::uint64_t>((*m)(i, j)));
      }
    }
  }
  const nlohmann::json header{{"format_version", kCheckpointVersion},
                              {"config", model.config.to_json()},
                              {"vocabulary", model.vocabulary.symbols()},
                              {"mel_config", mel_config_json(model.mel_config)},
                              {"tensors", manifest}};
  const std::string header_text = header.dump();
  std::string blob(kMagic, kMagic + 8);
  put_u32(&blob, kCheckpointVersion);
  put_u64(&blob, header_text.size());
  blob += header_text;
  blob += data;

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw IoError("short write to checkpoint " + path.string());
}

NeuralHmmModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string blob = ss.str();
  const std::string where = "checkpoint " + path.string() + ": ";
  if (blob.size() < 20 || std::memcmp(blob.data(), kMagic, 8) != 0) {
    throw FormatError(where + "bad magic");
  }
  const auto version = static_cast<std::uint32_t>(get_le(blob, 8, 4));
  if (version != kCheckpointVersion) {
    throw FormatError(where + "format version " + std::to_string(version) +
                      " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint64_t header_len = get_le(blob, 12, 8);
  if (header_len > blob.size() - 20) throw FormatError(where + "truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(blob.substr(20, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(where + "header is not JSON: " + e.what());
  }
  const std::size_t data_off = 20 + header_len;

  NeuralHmmModel model;
  try {
    if (header.at("format_version").get<std::uint32_t>() != version) {
      throw FormatError(where + "header format_version disagrees with the preamble");
    }
    model.config = ModelConfig::from_json(header.at("config"));
    model.vocabulary = Vocabulary(header.at("vocabulary").get<std::vector<std::string>>());
    model.mel_config = mel_config_from_json(header.at("mel_config"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(where + e.what());
  }
  try {
    model.config.validate();
  } catch (const ValidationError& e) {
    throw FormatError(where + e.what());
  }
  if (model.vocabulary.size() != model.config.vocab_size) {
    throw FormatError(where + "config field vocab_size = " +
                      std::to_string(model.config.vocab_size) + " but vocabulary has " +
                      std::to_string(model.vocabulary.size()) + " symbols");
  }
  if (model.mel_config.n_mels != model.config.n_mels) {
    throw FormatError(where + "config field n_mels disagrees with mel_config.n_mels");
  }

  const nlohmann::json& manifest = header.at("tensors");
  const std::vector<TensorSpec> specs = tensor_specs(model.config);
  if (!manifest.is_array() || manifest.size() != specs.size()) {
    throw FormatError(where + "tensor manifest has the wrong number of entries");
  }
  std::vector<Eigen::MatrixXd> loaded;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const TensorSpec& s = specs[i];
    const nlohmann::json& e = manifest[i];
    const std::string name = e.at("name").get<std::string>();
    if (name != s.name) {
      throw FormatError(where + "tensor " + std::to_string(i) + " is '" + name +
                        "', expected '" + s.name + "'");
    }
    const auto rows = e.at("rows").get<Eigen::Index>();
    const auto cols = e.at("cols").get<Eigen::Index>();
    if (rows != s.rows || cols != s.cols) {
      std::string fields = s.row_field;
      if (rows == s.rows) fields = s.col_field;
      throw FormatError(where + "config field " + fields + " does not match tensor '" +
                        name + "': file has " + std::to_string(rows) + "x" +
                        std::to_string(cols) + ", config implies " +
                        std::to_string(s.rows) + "x" + std::to_string(s.cols));
    }
    const std::size_t off = data_off + e.at("offset").get<std::size_t>();
    const std::size_t bytes = static_cast<std::size_t>(rows * cols) * 8;
    if (off + bytes > blob.size()) throw FormatError(where + "truncated tensor " + name);
    Eigen::MatrixXd m(rows, cols);
    std::size_t pos = off;
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c, pos += 8) {
        m(r, c) = std::bit_cast<double>(get_le(blob, pos, 8));
      }
    }
    if (!m.allFinite()) throw FormatError(where + "non-finite values in tensor " + name);
    loaded.push_back(std::move(m));
  }
  std::size_t i = 0;
  model.params.for_each([&](const char*, Eigen::MatrixXd& m) { m = loaded[i++]; });
  model.mel_mean = loaded[i++].col(0);
  model.mel_std = loaded[i++].col(0);
  if ((model.mel_std.array() <= 0.0).any()) {
    throw FormatError(where + "mel_std must be positive");
  }
  return model;
}

}  // namespace phmm
