// phmm/train.cc

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

#include "phmm/train.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <thread>

#include "phmm/audio.hpp"
#include "phmm/error.hpp"
#include "phmm/rng.hpp"

namespace phmm {

namespace {

// Runs fn(i) for i in [0, n) on up to `jobs` threads, rethrowing the first
// failure (lowest index) on the caller.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn fn) {
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

double utterance_gradient(const NeuralHmmModel& model, const TrainingExample& ex,
                          Parameters* grad) {
  try {
    const StateChain chain = encode(model, ex.symbols, ex.z);
    const double nll = accumulate_gradient(model, chain, ex.mel, grad);
    if (!std::isfinite(nll) || !grad->all_finite()) {
      throw NumericalError("non-finite loss or gradient");
    }
    return nll;
  } catch (const NumericalError& e) {
    throw NumericalError("utterance " + ex.id + ": " + e.what());
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ValidationError("learning_rate must be a finite non-negative number");
  }
  if (iterations < 0) throw ValidationError("iterations must be >= 0");
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (!(grad_clip > 0.0)) throw ValidationError("grad_clip must be > 0");
  if (checkpoint_interval < 0) throw ValidationError("checkpoint_interval must be >= 0");
  if (jobs < 1) throw ValidationError("jobs must be >= 1");
}

void fit_normalization(NeuralHmmModel* model, const std::vector<TrainingExample>& data) {
  const int m = model->config.n_mels;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(m), sq = Eigen::VectorXd::Zero(m);
  double count = 0.0;
  for (const auto& ex : data) {
    if (ex.mel.frames.cols() != m) throw ValidationError("utterance " + ex.id + ": wrong n_mels");
    sum += ex.mel.frames.colwise().sum().transpose();
    sq += ex.mel.frames.array().square().matrix().colwise().sum().transpose();
    count += static_cast<double>(ex.mel.num_frames());
  }
  if (count < 2) throw ValidationError("fit_normalization: need at least two frames");
  model->mel_mean = sum / count;
  const Eigen::ArrayXd var = (sq / count).array() - model->mel_mean.array().square();
  model->mel_std = var.max(0.0).sqrt().max(1e-3).matrix();
}

double mean_nll(const NeuralHmmModel& model, const std::vector<TrainingExample>& data,
                int jobs) {
  if (data.empty()) throw ValidationError("mean_nll: no utterances");
  std::vector<double> nll(data.size());
  parallel_for(data.size(), jobs, [&](std::size_t i) {
    try {
      nll[i] = forward_nll(model, encode(model, data[i].symbols, data[i].z), data[i].mel);
    } catch (const NumericalError& e) {
      throw NumericalError("utterance " + data[i].id + ": " + e.what());
    }
  });
  return std::accumulate(nll.begin(), nll.end(), 0.0) / static_cast<double>(data.size());
}

double batch_gradient(const NeuralHmmModel& model, const std::vector<TrainingExample>& data,
                      const std::vector<std::size_t>& batch, int jobs, Parameters* grad) {
  std::vector<Parameters> parts(batch.size(), Parameters::zeros_like(model.params));
  std::vector<double> nll(batch.size());
  parallel_for(batch.size(), jobs, [&](std::size_t b) {
    nll[b] = utterance_gradient(model, data[batch[b]], &parts[b]);
  });
  double total = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    grad->add_scaled(parts[b], 1.0);
    total += nll[b];
  }
  return total;
}

TrainResult train(NeuralHmmModel* model, const std::vector<TrainingExample>& data,
                  const TrainConfig& config, const CheckpointHook& hook) {
  config.validate();
  if (data.empty()) throw ValidationError("train: no training utterances");
  TrainResult result;
  result.initial_loss = mean_nll(*model, data, config.jobs);

  Rng rng(config.seed);
  std::vector<std::size_t> order(data.size());
  std::size_t cursor = order.size();
  const std::size_t batch_size = std::min<std::size_t>(config.batch_size, data.size());
  std::vector<std::size_t> batch;
  for (int it = 0; it < config.iterations; ++it) {
    batch.clear();
    while (batch.size() < batch_size) {
      if (cursor == order.size()) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        rng.shuffle(&order);
        cursor = 0;
      }
      batch.push_back(order[cursor++]);
    }
    Parameters grad = Parameters::zeros_like(model->params);
    const double total = batch_gradient(*model, data, batch, config.jobs, &grad);
    const double scale = 1.0 / static_cast<double>(batch.size());
    grad.scale(scale);
    const double norm = std::sqrt(grad.squared_norm());
    result.loss_trace.push_back(total * scale);
    result.grad_norm.push_back(norm);
    if (norm > config.grad_clip) grad.scale(config.grad_clip / norm);
    model->params.add_scaled(grad, -config.learning_rate);
    if (!model->params.all_finite()) {
      throw NumericalError("parameters became non-finite at iteration " + std::to_string(it + 1));
    }
    if (hook && config.checkpoint_interval > 0 && (it + 1) % config.checkpoint_interval == 0) {
      hook(it + 1, *model);
    }
  }
  result.final_loss = mean_nll(*model, data, config.jobs);
  return result;
}

std::vector<TrainingExample> load_examples(const Manifest& manifest, Split split,
                                           const MelConfig& mel_config,
                                           Vocabulary* vocabulary) {
  std::vector<TrainingExample> out;
  for (const UtteranceRecord* r : manifest.with_split(split)) {
    AudioBuffer audio = load_wav(manifest.audio_path(*r));
    TrainingExample ex;
    ex.id = r->id;
    ex.symbols = tokenize(r->text, vocabulary);
    ex.z = r->z;
    ex.mel = mel_spectrogram(audio, mel_config);
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace phmm
