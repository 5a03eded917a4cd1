// src/eval.cpp

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

#include "modfuse/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <stdexcept>

#include "json.hpp"
#include "modfuse/parallel.hpp"

namespace modfuse {

void ConfusionCounts::add(int truth, int predicted) {
  if (truth == 1)
    (predicted == 1 ? tp : fn) += 1;
  else
    (predicted == 1 ? fp : tn) += 1;
}

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& o) {
  tp += o.tp;
  fp += o.fp;
  tn += o.tn;
  fn += o.fn;
  return *this;
}

double balanced_accuracy(const ConfusionCounts& c) {
  if (c.tp + c.fn == 0) throw ContractError("balanced accuracy undefined: no positive samples");
  if (c.tn + c.fp == 0) throw ContractError("balanced accuracy undefined: no negative samples");
  const double tpr = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  const double tnr = static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp);
  return 0.5 * (tpr + tnr);
}

double f1_score(const ConfusionCounts& c, std::ostream* warn) {
  const std::uint64_t denom = 2 * c.tp + c.fp + c.fn;
  if (denom == 0) {
    (warn ? *warn : std::cerr) << "warning: F1 undefined (TP = FP = FN = 0), reporting 0\n";
    return 0.0;
  }
  return 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

int predict_label(std::span<const double> logits) {
  if (logits.empty()) throw ShapeError("predict_label: empty logits");
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i)
    if (logits[i] > logits[best]) best = i;
  return static_cast<int>(best);
}

std::vector<std::uint8_t> missing_video_mask(std::size_t n, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0))
    throw ConfigError("missing-video fraction must lie in [0, 1]");
  auto k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
  k = std::min(k, n);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  // Partial Fisher-Yates: the first k slots form the masked subset.
  for (std::size_t i = 0; i < k; ++i) std::swap(order[i], order[i + rng.index(n - i)]);
  std::vector<std::uint8_t> mask(n, 0);
  for (std::size_t i = 0; i < k; ++i) mask[order[i]] = 1;
  return mask;
}

EvalResult evaluate(FusionModel& model, const Dataset& data, Split split,
                    double missing_fraction, std::uint64_t seed) {
  const Variant v = model.variant();
  if (missing_fraction > 0.0 && !tolerates_missing_video(v))
    throw ContractError(std::string(variant_name(v)) +
                        " model cannot be evaluated with missing video (fraction " +
                        std::to_string(missing_fraction) + ")");
  const auto idx = data.indices(split);
  if (idx.empty()) throw ContractError("split '" + std::string(split_name(split)) + "' is empty");
  const auto mask = missing_video_mask(idx.size(), missing_fraction, seed);
  std::vector<int> predicted(idx.size());
  parallel_for(idx.size(), [&](std::size_t i) {
    const EmbeddingSample& s = data.samples[idx[i]];
    const Tensor* video = mask[i] ? nullptr : s.video_ptr();
    if (!video && uses_video(v) && !tolerates_missing_video(v))
      throw ContractError("record '" + s.id + "' has no video; the " +
                          std::string(variant_name(v)) + " model requires it");
    Tape tape(false);
    predicted[i] = predict_label(model.forward(tape, s.audio, video).value().data());
  });
  EvalResult r;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    r.counts.add(data.samples[idx[i]].label, predicted[i]);
    r.masked += mask[i];
  }
  r.ba = balanced_accuracy(r.counts);
  r.f1 = f1_score(r.counts);
  return r;
}

MeanStd mean_std(std::span<const double> xs) {
  MeanStd out;
  if (xs.empty()) return out;
  for (double x : xs) out.mean += x;
  out.mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return out;
  double ss = 0.0;
  for (double x : xs) ss += (x - out.mean) * (x - out.mean);
  out.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  return out;
}

std::vector<Aggregate> aggregate_rows(std::span<const ReportRow> rows) {
  std::vector<Aggregate> out;
  std::vector<std::vector<double>> bas, f1s;
  for (const auto& row : rows) {
    auto it = std::find_if(out.begin(), out.end(), [&](const Aggregate& a) {
      return a.task == row.task && a.variant == row.variant &&
             a.missing_fraction == row.missing_fraction;
    });
    std::size_t slot = static_cast<std::size_t>(it - out.begin());
    if (it == out.end()) {
      out.push_back({row.task, row.variant, row.missing_fraction});
      bas.emplace_back();
      f1s.emplace_back();
    }
    bas[slot].push_back(row.ba);
    f1s[slot].push_back(row.f1);
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    const MeanStd b = mean_std(bas[i]), f = mean_std(f1s[i]);
    out[i].seeds = bas[i].size();
    out[i].ba_mean = b.mean;
    out[i].ba_std = b.std;
    out[i].f1_mean = f.mean;
    out[i].f1_std = f.std;
  }
  return out;
}

const Aggregate& ExperimentReport::find(std::string_view variant, double fraction) const {
  for (const auto& a : aggregates)
    if (a.variant == variant && a.missing_fraction == fraction) return a;
  throw std::out_of_range("no aggregate for " + std::string(variant) + " at fraction " +
                          std::to_string(fraction));
}

ExperimentReport run_experiment(const ExperimentConfig& cfg, const Dataset& data,
                                const ExperimentProgress& progress) {
  if (cfg.variants.empty() || cfg.seeds.empty())
    throw ConfigError("experiment needs at least one variant and one seed");
  std::string task;
  for (const auto& s : data.samples)
    if (task.empty()) task = s.task;
  ExperimentReport report;
  for (Variant v : cfg.variants) {
    for (std::uint64_t seed : cfg.seeds) {
      ModelConfig mc = cfg.model;
      mc.variant = v;
      TrainConfig tc = cfg.train;
      tc.seed = seed;
      TrainResult trained = train(mc, tc, data);
      const std::uint64_t eval_seed = derive_seed(seed, "eval");
      EvalResult headline = evaluate(trained.model, data, Split::test, 0.0, eval_seed);
      report.rows.push_back({task, std::string(variant_name(v)), seed, 0.0, headline.ba,
                             headline.f1});
      if (v == Variant::unified) {
        for (double f : cfg.fractions) {
          if (f == 0.0) continue;
          EvalResult r = evaluate(trained.model, data, Split::test, f, eval_seed);
          report.rows.push_back({task, std::string(variant_name(v)), seed, f, r.ba, r.f1});
        }
      }
      if (progress) progress(v, seed, trained, headline);
    }
  }
  report.aggregates = aggregate_rows(report.rows);
  return report;
}

namespace {

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  return buf;
}

std::string fmt_fraction(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  return buf;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

}  // namespace

void write_report_csv(const std::filesystem::path& path, const ExperimentReport& r) {
  auto out = open_out(path);
  out << "task,variant,seed,missing_fraction,BA,F1\n";
  for (const auto& a : r.aggregates) {
    for (const auto& row : r.rows)
      if (row.task == a.task && row.variant == a.variant &&
          row.missing_fraction == a.missing_fraction)
        out << row.task << ',' << row.variant << ',' << row.seed << ','
            << fmt_fraction(row.missing_fraction) << ',' << fmt(row.ba) << ',' << fmt(row.f1)
            << '\n';
    out << a.task << ',' << a.variant << ",mean," << fmt_fraction(a.missing_fraction) << ','
        << fmt(a.ba_mean) << ',' << fmt(a.f1_mean) << '\n';
    out << a.task << ',' << a.variant << ",std," << fmt_fraction(a.missing_fraction) << ','
        << fmt(a.ba_std) << ',' << fmt(a.f1_std) << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

void write_report_json(const std::filesystem::path& path, const ExperimentReport& r) {
  nlohmann::json j;
  j["rows"] = nlohmann::json::array();
  for (const auto& row : r.rows)
    j["rows"].push_back({{"task", row.task},
                         {"variant", row.variant},
                         {"seed", row.seed},
                         {"missing_fraction", row.missing_fraction},
                         {"BA", row.ba},
                         {"F1", row.f1}});
  j["aggregates"] = nlohmann::json::array();
  for (const auto& a : r.aggregates)
    j["aggregates"].push_back({{"task", a.task},
                               {"variant", a.variant},
                               {"missing_fraction", a.missing_fraction},
                               {"seeds", a.seeds},
                               {"BA_mean", a.ba_mean},
                               {"BA_std", a.ba_std},
                               {"F1_mean", a.f1_mean},
                               {"F1_std", a.f1_std}});
  auto out = open_out(path);
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

void write_plot_data(const std::filesystem::path& path, const ExperimentReport& r) {
  auto out = open_out(path);
  out << "# variant missing_fraction ba_mean ba_std\n";
  for (const auto& a : r.aggregates)
    out << a.variant << ' ' << fmt_fraction(a.missing_fraction) << ' ' << fmt(a.ba_mean) << ' '
        << fmt(a.ba_std) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

void write_sweep_csv(const std::filesystem::path& path, std::span<const double> fractions,
                     std::span<const EvalResult> results) {
  if (fractions.size() != results.size())
    throw std::invalid_argument("write_sweep_csv: size mismatch");
  auto out = open_out(path);
  out << "missing_fraction,BA,F1\n";
  for (std::size_t i = 0; i < fractions.size(); ++i)
    out << fmt_fraction(fractions[i]) << ',' << fmt(results[i].ba) << ',' << fmt(results[i].f1)
        << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace modfuse
