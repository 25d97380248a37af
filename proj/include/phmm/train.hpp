// phmm/train.hpp

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

// Minibatch SGD for the neural HMM.

#ifndef PHMM_TRAIN_HPP_
#define PHMM_TRAIN_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "phmm/corpus.hpp"
#include "phmm/nhmm.hpp"

namespace phmm {

struct TrainingExample {
  std::string id;
  SymbolSequence symbols;
  StandardizedFeatures z;
  MelSpectrogram mel;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  int iterations = 0;
  int batch_size = 8;
  double grad_clip = 5.0;  // max global L2 norm
  std::uint64_t seed = 1;
  std::optional<std::filesystem::path> init_from;
  int checkpoint_interval = 0;  // 0: only at the end
  int jobs = 1;

  void validate() const;
};

struct TrainResult {
  std::vector<double> loss_trace;   // mean per-frame NLL of each batch
  std::vector<double> grad_norm;    // before clipping
  double initial_loss = 0.0;        // full-corpus mean NLL before training
  double final_loss = 0.0;          // and after
};

/// Called with the 1-based iteration after every checkpoint_interval updates.
using CheckpointHook = std::function<void(int iteration, const NeuralHmmModel&)>;

/// Per-band mean and standard deviation of every training frame.
void fit_normalization(NeuralHmmModel* model, const std::vector<TrainingExample>& data);

/// Mean over utterances of the per-frame NLL.
double mean_nll(const NeuralHmmModel& model, const std::vector<TrainingExample>& data,
                int jobs = 1);

/// Sum of utterance gradients in index order, plus the summed NLL. Worker
/// threads each own a slice; the reduction order does not depend on `jobs`.
double batch_gradient(const NeuralHmmModel& model, const std::vector<TrainingExample>& data,
                      const std::vector<std::size_t>& batch, int jobs, Parameters* grad);

/// Updates *model in place. Batches are drawn from a seeded per-epoch
/// permutation; a non-finite loss aborts with the utterance id.
TrainResult train(NeuralHmmModel* model, const std::vector<TrainingExample>& data,
                  const TrainConfig& config, const CheckpointHook& hook = {});

/// Mels and symbols for each manifest record of the given split. Symbols are
/// looked up in (and may extend) *vocabulary.
std::vector<TrainingExample> load_examples(const Manifest& manifest, Split split,
                                           const MelConfig& mel_config,
                                           Vocabulary* vocabulary);

}  // namespace phmm

#endif  // PHMM_TRAIN_HPP_
