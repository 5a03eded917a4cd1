// src/training.cpp

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

#include "modfuse/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>

#include "modfuse/parallel.hpp"

namespace modfuse {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0 && learning_rate <= 1.0))
    throw ConfigError("learning_rate must lie in (0, 1]");
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
  if (max_epochs == 0 || max_epochs > 500) throw ConfigError("max_epochs must lie in [1, 500]");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
    throw ConfigError("validation_fraction must lie in (0, 1)");
}

void adam_step(std::span<const NamedParameter> params, AdamState& s, double lr) {
  if (s.m.empty()) {
    for (const auto& p : params) {
      s.m.emplace_back(p.param->value.shape());
      s.v.emplace_back(p.param->value.shape());
    }
  }
  if (s.m.size() != params.size())
    throw std::logic_error("adam_step: parameter list changed between steps");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter& p = *params[i].param;
    if (p.grad.shape() != p.value.shape())
      throw ContractError("adam_step: no gradient for parameter '" + params[i].name + "'");
  }
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i].param;
    auto g = p.grad.matrix().array();
    auto m = s.m[i].matrix().array();
    auto v = s.v[i].matrix().array();
    m = s.beta1 * m + (1.0 - s.beta1) * g;
    v = s.beta2 * v + (1.0 - s.beta2) * g.square();
    p.value.matrix().array() -= lr * (m / c1) / ((v / c2).sqrt() + s.eps);
  }
}

BalancedSampler::BalancedSampler(std::span<const int> labels, std::uint64_t seed)
    : labels_(labels.begin(), labels.end()), rng_(seed) {
  if (labels_.empty()) throw ContractError("BalancedSampler: empty dataset");
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < labels_.size(); ++i) groups[labels_[i]].push_back(i);
  const int max_label = groups.rbegin()->first;
  if (groups.begin()->first < 0) throw ContractError("BalancedSampler: negative label");
  class_slot_.assign(static_cast<std::size_t>(max_label) + 1, 0);
  for (auto& [label, idx] : groups) {
    class_slot_[static_cast<std::size_t>(label)] = by_class_.size();
    by_class_.push_back(std::move(idx));
  }
}

std::vector<std::size_t> BalancedSampler::next_batch(std::size_t batch) {
  std::vector<std::size_t> out(batch);
  for (auto& i : out) {
    const auto& cls = by_class_[rng_.index(by_class_.size())];
    i = cls[rng_.index(cls.size())];
  }
  return out;
}

double BalancedSampler::probability(std::size_t i) const {
  const auto& cls = by_class_[class_slot_[static_cast<std::size_t>(labels_.at(i))]];
  return 1.0 / (static_cast<double>(by_class_.size()) * static_cast<double>(cls.size()));
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_holdout(
    std::span<const int> labels, double fraction, std::uint64_t seed) {
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(i);
  std::vector<std::size_t> kept, held;
  Rng rng(seed);
  for (auto& [label, idx] : groups) {
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.index(i)]);
    const auto n_held = static_cast<std::size_t>(
        std::llround(fraction * static_cast<double>(idx.size())));
    held.insert(held.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_held));
    kept.insert(kept.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_held), idx.end());
  }
  std::sort(kept.begin(), kept.end());
  std::sort(held.begin(), held.end());
  return {std::move(kept), std::move(held)};
}

std::size_t TrainLog::best_epoch() const {
  for (auto it = epochs.rbegin(); it != epochs.rend(); ++it)
    if (it->is_best) return it->epoch;
  return 0;
}

void write_train_log(const std::filesystem::path& path, const TrainLog& log) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "epoch,train_loss,val_loss,is_best\n";
  char line[128];
  for (const auto& e : log.epochs) {
    std::snprintf(line, sizeof line, "%zu,%.10g,%.10g,%d\n", e.epoch, e.train_loss,
                  e.val_loss, e.is_best ? 1 : 0);
    out << line;
  }
  if (!out) throw IoError("write failed for " + path.string());
}

double mean_loss(FusionModel& model, const Dataset& data, std::span<const std::size_t> indices) {
  if (indices.empty()) throw ContractError("mean_loss: no samples");
  std::vector<double> losses(indices.size());
  parallel_for(indices.size(), [&](std::size_t i) {
    const EmbeddingSample& s = data.samples[indices[i]];
    Tape tape(false);
    Var logits = model.forward(tape, s.audio, s.video_ptr());
    Var row = reshape(logits, {1, logits.value().size()});
    losses[i] = cross_entropy(row, std::span(&s.label, 1)).value()[0];
  });
  return std::accumulate(losses.begin(), losses.end(), 0.0) /
         static_cast<double>(losses.size());
}

TrainResult train(const ModelConfig& model_config, const TrainConfig& cfg,
                  const Dataset& data, const EpochCallback& on_epoch) {
  cfg.validate();
  model_config.validate();
  const Variant variant = model_config.variant;
  const std::vector<std::size_t> train_idx = data.indices(Split::train);
  std::vector<int> labels;
  for (std::size_t i : train_idx) {
    const EmbeddingSample& s = data.samples[i];
    if (s.label != 0 && s.label != 1)
      throw ContractError("record '" + s.id + "': label must be 0 or 1");
    if (!s.video && uses_video(variant) && !tolerates_missing_video(variant))
      throw ContractError("record '" + s.id + "' has no video; the " +
                          std::string(variant_name(variant)) +
                          " model requires complete audio-video pairs");
    labels.push_back(s.label);
  }
  for (int c = 0; c < 2; ++c)
    if (std::count(labels.begin(), labels.end(), c) == 0)
      throw ContractError("train split has no samples of class " + std::to_string(c));

  auto [fit_pos, val_pos] =
      stratified_holdout(labels, cfg.validation_fraction, derive_seed(cfg.seed, "validation"));
  if (val_pos.empty()) throw ContractError("validation holdout is empty");
  std::vector<std::size_t> fit, val;
  std::vector<int> fit_labels;
  for (std::size_t p : fit_pos) {
    fit.push_back(train_idx[p]);
    fit_labels.push_back(labels[p]);
  }
  for (std::size_t p : val_pos) val.push_back(train_idx[p]);

  FusionModel model(model_config, derive_seed(cfg.seed, "init"));
  const auto params = model.parameters();
  AdamState adam;
  BalancedSampler sampler(fit_labels, derive_seed(cfg.seed, "sampler"));
  Rng dropout_rng(derive_seed(cfg.seed, "dropout"));
  const bool use_dropout = variant == Variant::unified;
  const std::size_t steps = (fit.size() + cfg.batch_size - 1) / cfg.batch_size;

  TrainResult result{model, {}};
  double best = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    double loss_sum = 0.0;
    for (std::size_t step = 0; step < steps; ++step) {
      const auto batch = sampler.next_batch(cfg.batch_size);
      const DropoutMask mask = use_dropout
                                   ? sample_modality_dropout(batch.size(),
                                                             model_config.dropout_p, dropout_rng)
                                   : DropoutMask{std::vector<std::uint8_t>(batch.size(), 0), 0.0};
      for (const auto& p : params) p.param->zero_grad();
      Tape tape;
      std::vector<Var> logits;
      std::vector<int> ys;
      for (std::size_t b = 0; b < batch.size(); ++b) {
        const EmbeddingSample& s = data.samples[fit[batch[b]]];
        const Tensor* video = mask.drop[b] ? nullptr : s.video_ptr();
        logits.push_back(model.forward(tape, s.audio, video));
        ys.push_back(s.label);
      }
      Var loss = cross_entropy(stack(logits), ys);
      if (!std::isfinite(loss.value()[0]))
        throw NumericalError("training loss diverged at epoch " + std::to_string(epoch));
      tape.backward(loss);
      adam_step(params, adam, cfg.learning_rate);
      loss_sum += loss.value()[0];
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(steps);
    rec.val_loss = mean_loss(model, data, val);
    if (!std::isfinite(rec.val_loss))
      throw NumericalError("validation loss diverged at epoch " + std::to_string(epoch));
    if (rec.val_loss < best) {
      best = rec.val_loss;
      rec.is_best = true;
      result.model = model;
      stale = 0;
    } else {
      ++stale;
    }
    result.log.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (stale > cfg.patience) break;
  }
  return result;
}

}  // namespace modfuse
