// include/modfuse/training.hpp

// Copyright 2026 The modfuse Authors

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

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "modfuse/data.hpp"
#include "modfuse/fusion.hpp"
#include "modfuse/rng.hpp"

namespace modfuse {

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 200;
  double validation_fraction = 0.10;
  std::size_t patience = 25;
  std::uint64_t seed = 123;

  void validate() const;
};

// ---------------------------------------------------------------------------
// Optimiser

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<Tensor> m;  // parallel to the parameter list
  std::vector<Tensor> v;
};

// One bias-corrected Adam update using each parameter's accumulated grad.
void adam_step(std::span<const NamedParameter> params, AdamState& state, double lr);

// ---------------------------------------------------------------------------
// Class-balanced sampling

// Draws with replacement; sample i of class c has probability
// 1 / (num_classes * count(c)), so every present class is equally likely.
class BalancedSampler {
 public:
  BalancedSampler(std::span<const int> labels, std::uint64_t seed);

  std::vector<std::size_t> next_batch(std::size_t batch);
  double probability(std::size_t i) const;
  std::size_t num_classes() const noexcept { return by_class_.size(); }

 private:
  std::vector<int> labels_;
  std::vector<std::vector<std::size_t>> by_class_;
  std::vector<std::size_t> class_slot_;  // label -> index into by_class_
  Rng rng_;
};

// Splits positions [0, labels.size()) into (kept, held_out); each class
// contributes round(fraction * count) positions to held_out.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_holdout(
    std::span<const int> labels, double fraction, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Training loop

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  bool is_best = false;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch() const;
};

void write_train_log(const std::filesystem::path& path, const TrainLog& log);

struct TrainResult {
  FusionModel model;  // parameters of the best validation epoch
  TrainLog log;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Mean cross-entropy of `model` over dataset samples `indices`, video used
// whenever present.
double mean_loss(FusionModel& model, const Dataset& data, std::span<const std::size_t> indices);

// Trains on the train split with a stratified validation holdout and keeps the
// parameters with the lowest validation loss.
TrainResult train(const ModelConfig& model_config, const TrainConfig& train_config,
                  const Dataset& data, const EpochCallback& on_epoch = {});

}  // namespace modfuse
