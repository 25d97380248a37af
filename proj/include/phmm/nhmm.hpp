// phmm/nhmm.hpp

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

// Neural HMM acoustic model.
//
// Each input symbol expands into states_per_symbol left-to-right states. A
// state's condition vector is
//
//   h = tanh(W_s [e_k ; f ; z] + b_s + offset[sub-state])
//
// where e_k is the convolutional encoding of symbol k, f = W_f z + b_f is the
// feature encoding of the standardised prosody controls z, and z itself is
// appended as a skip path. At frame t the decoder sees p_t = prenet(x_{t-1})
// (x_0 = 0) and every state emits a diagonal Gaussian with mean
// W_m [h ; p_t] + b_m and log-std W_l h + b_l, together with a probability
// sigma(w_t . [h ; p_t] + b_t) of advancing to the next state after frame t.
// Alignments start in the first state, end in the last, and move by at most
// one state per frame.
//
// Frames are modelled after per-band normalisation (x - mel_mean) / mel_std;
// the normalisation is fitted on training data and is not a trainable
// parameter. All likelihoods are of normalised frames.

#ifndef PHMM_NHMM_HPP_
#define PHMM_NHMM_HPP_

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "phmm/corpus.hpp"
#include "phmm/dsp.hpp"
#include "phmm/prosody.hpp"

namespace phmm {

struct ModelConfig {
  int vocab_size = 2;
  int embedding_dim = 32;
  int feature_dim = 3;
  int feature_embed_dim = 32;
  int states_per_symbol = 2;
  int hidden_dim = 64;
  int n_mels = 80;
  int prenet_dim = 32;
  std::uint64_t seed = 1;

  static constexpr int kConvKernel = 5;

  int state_input_dim() const { return embedding_dim + feature_embed_dim + feature_dim; }
  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  bool operator==(const ModelConfig&) const = default;
};

/// Every learnable tensor. Vectors are stored as n x 1 matrices so the whole
/// set can be visited uniformly; the same struct doubles as a gradient.
struct Parameters {
  Eigen::MatrixXd embedding;     // vocab x D
  Eigen::MatrixXd conv1_w;       // D x (kernel * D), tap-major columns
  Eigen::MatrixXd conv1_b;       // D x 1
  Eigen::MatrixXd conv2_w;
  Eigen::MatrixXd conv2_b;
  Eigen::MatrixXd feature_w;     // F x 3
  Eigen::MatrixXd feature_b;     // F x 1
  Eigen::MatrixXd state_w;       // H x (D + F + 3)
  Eigen::MatrixXd state_b;       // H x 1
  Eigen::MatrixXd state_offset;  // states_per_symbol x H
  Eigen::MatrixXd prenet_w;      // P x M
  Eigen::MatrixXd prenet_b;      // P x 1
  Eigen::MatrixXd mean_w;        // M x (H + P)
  Eigen::MatrixXd mean_b;        // M x 1
  Eigen::MatrixXd logstd_w;      // M x H
  Eigen::MatrixXd logstd_b;      // M x 1
  Eigen::MatrixXd trans_w;       // (H + P) x 1
  Eigen::MatrixXd trans_b;       // 1 x 1

  template <typename F>
  void for_each(F&& f) { visit(*this, f); }
  template <typename F>
  void for_each(F&& f) const { visit(*this, f); }

  /// Zero tensors with the shapes of `like`.
  static Parameters zeros_like(const Parameters& like);
  std::size_t count() const;
  double squared_norm() const;
  void scale(double s);
  /// this += s * other
  void add_scaled(const Parameters& other, double s);
  bool all_finite() const;
  bool operator==(const Parameters& o) const;

 private:
  template <typename Self, typename F>
  static void visit(Self& p, F& f) {
    f("embedding", p.embedding);
    f("conv1_w", p.conv1_w);
    f("conv1_b", p.conv1_b);
    f("conv2_w", p.conv2_w);
    f("conv2_b", p.conv2_b);
    f("feature_w", p.feature_w);
    f("feature_b", p.feature_b);
    f("state_w", p.state_w);
    f("state_b", p.state_b);
    f("state_offset", p.state_offset);
    f("prenet_w", p.prenet_w);
    f("prenet_b", p.prenet_b);
    f("mean_w", p.mean_w);
    f("mean_b", p.mean_b);
    f("logstd_w", p.logstd_w);
    f("logstd_b", p.logstd_b);
    f("trans_w", p.trans_w);
    f("trans_b", p.trans_b);
  }
};

struct NeuralHmmModel {
  ModelConfig config;
  Vocabulary vocabulary;
  MelConfig mel_config;
  Eigen::VectorXd mel_mean;  // per band
  Eigen::VectorXd mel_std;
  Parameters params;
};

/// Seeded Glorot-uniform weights, zero biases except the transition bias
/// (-1, favouring "stay"). The vocabulary defaults to placeholder symbols.
NeuralHmmModel init_model(const ModelConfig& config);
NeuralHmmModel init_model(const ModelConfig& config, const Vocabulary& vocabulary,
                          const MelConfig& mel_config);

/// Closed-form parameter count for a configuration.
std::size_t parameter_count(const ModelConfig& config);

/// Per-state condition vectors plus the encoder activations needed to
/// backpropagate into the encoder.
struct StateChain {
  Eigen::MatrixXd h;              // N x H
  std::vector<int> symbol_of_state;
  std::vector<int> substate;
  std::vector<int> symbols;
  Eigen::VectorXd z;              // 3
  Eigen::VectorXd f;              // F
  Eigen::MatrixXd x0, x1, x2;     // K x D: embeddings, conv layer outputs
  Eigen::MatrixXd u;              // K x (D + F + 3)

  int num_states() const { return static_cast<int>(h.rows()); }
};

StateChain encode(const NeuralHmmModel& model, const SymbolSequence& symbols,
                  const StandardizedFeatures& z);

/// log b_t(n) and transition logits for every frame and reachable state.
/// Entries outside the reachable band are -inf (log_emission) / 0 (logit).
struct EmissionTable {
  Eigen::MatrixXd log_emission;  // T x N
  Eigen::MatrixXd logit;         // T x N
};

EmissionTable emission_table(const NeuralHmmModel& model, const StateChain& chain,
                             const MelSpectrogram& mel);

/// Negative log-likelihood of the mel over all monotone alignments, divided
/// by the number of frames.
double forward_nll(const NeuralHmmModel& model, const StateChain& chain,
                   const MelSpectrogram& mel);

/// Adds d(forward_nll)/d(params) into *grad and returns the NLL.
double accumulate_gradient(const NeuralHmmModel& model, const StateChain& chain,
                           const MelSpectrogram& mel, Parameters* grad);

Parameters grad_nll(const NeuralHmmModel& model, const StateChain& chain,
                    const MelSpectrogram& mel);

/// Zero-based state per frame.
struct AlignmentPath {
  std::vector<int> states;
  double log_prob = 0.0;  // log joint of the path and the frames

  /// Starts at 0, moves by 0 or 1; if num_states > 0 also ends there - 1.
  bool is_legal(int num_states = 0) const;
};

AlignmentPath viterbi_align(const NeuralHmmModel& model, const StateChain& chain,
                            const MelSpectrogram& mel);

struct SynthesisResult {
  MelSpectrogram mel;
  AlignmentPath path;
  bool truncated = false;
};

/// Deterministic generation: emit each state's mean and advance once the
/// transition probability reaches 0.5.
SynthesisResult synthesize(const NeuralHmmModel& model, const SymbolSequence& symbols,
                           const StandardizedFeatures& z, int max_frames);

// Checkpoint layout (all integers little-endian):
//   8 bytes  "PHMMCKPT"
//   u32      format version
//   u64      header length in bytes
//   header   JSON: {format_version, config, vocabulary, mel_config,
//            tensors: [{name, rows, cols, offset}]}
//   data     row-major float64 tensors at the listed byte offsets, in the
//            order embedding, conv1_w, ..., trans_b, mel_mean, mel_std
void save_checkpoint(const NeuralHmmModel& model, const std::filesystem::path& path);
NeuralHmmModel load_checkpoint(const std::filesystem::path& path);

inline constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace phmm

#endif  // PHMM_NHMM_HPP_
