// include/modfuse/eval.hpp

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
#include <iosfwd>
#include <string>
#include <vector>

#include "modfuse/data.hpp"
#include "modfuse/fusion.hpp"
#include "modfuse/training.hpp"

namespace modfuse {

// Class 1 (disfluent) is the positive class.
struct ConfusionCounts {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;

  void add(int truth, int predicted);
  std::uint64_t total() const noexcept { return tp + fp + tn + fn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o);
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

// Mean of sensitivity and specificity. Throws ContractError when either class
// is absent from the counts.
double balanced_accuracy(const ConfusionCounts& c);

// 2TP / (2TP + FP + FN). With TP = FP = FN = 0 the score is 0 and a warning is
// written to `warn` (stderr when null).
double f1_score(const ConfusionCounts& c, std::ostream* warn = nullptr);

// Argmax over the logits; ties resolve to class 0.
int predict_label(std::span<const double> logits);

// Marks exactly ceil(fraction * n) of n positions, chosen by `seed`.
std::vector<std::uint8_t> missing_video_mask(std::size_t n, double fraction, std::uint64_t seed);

struct EvalResult {
  ConfusionCounts counts;
  double ba = 0.0;
  double f1 = 0.0;
  std::size_t masked = 0;  // samples evaluated with video withheld
};

// Runs inference over `split`, withholding video from a seeded
// ceil(fraction * N) subset. Samples whose video is already absent stay
// absent. Only unified and audio_only models accept fraction > 0.
EvalResult evaluate(FusionModel& model, const Dataset& data, Split split,
                    double missing_fraction, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Multi-seed experiments

inline const std::vector<double> kSweepFractions{0.0, 0.25, 0.5, 0.75, 1.0};

struct ReportRow {
  std::string task;
  std::string variant;
  std::uint64_t seed = 0;
  double missing_fraction = 0.0;
  double ba = 0.0;
  double f1 = 0.0;
};

struct Aggregate {
  std::string task;
  std::string variant;
  double missing_fraction = 0.0;
  std::size_t seeds = 0;
  double ba_mean = 0.0, ba_std = 0.0;
  double f1_mean = 0.0, f1_std = 0.0;
};

struct ExperimentReport {
  std::vector<ReportRow> rows;
  std::vector<Aggregate> aggregates;

  // Aggregate for (variant, fraction); throws std::out_of_range if absent.
  const Aggregate& find(std::string_view variant, double missing_fraction) const;
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single value
};
MeanStd mean_std(std::span<const double> xs);

// Groups rows by (task, variant, fraction), preserving first-seen order.
std::vector<Aggregate> aggregate_rows(std::span<const ReportRow> rows);

struct ExperimentConfig {
  std::vector<Variant> variants{Variant::audio_only, Variant::video_only, Variant::unified,
                                Variant::early, Variant::late};
  std::vector<std::uint64_t> seeds{123, 456, 789};
  std::vector<double> fractions = kSweepFractions;  // applied to unified only
  ModelConfig model;                                // variant is overridden
  TrainConfig train;                                // seed is overridden
};

// Called after each (variant, seed) is trained and evaluated.
using ExperimentProgress =
    std::function<void(Variant, std::uint64_t seed, const TrainResult&, const EvalResult&)>;

ExperimentReport run_experiment(const ExperimentConfig& cfg, const Dataset& data,
                                const ExperimentProgress& progress = {});

// CSV columns: task,variant,seed,missing_fraction,BA,F1. Aggregate rows carry
// seed "mean" and are followed by a "std" row.
void write_report_csv(const std::filesystem::path& path, const ExperimentReport& r);
void write_report_json(const std::filesystem::path& path, const ExperimentReport& r);
// Whitespace-separated "variant missing_fraction ba_mean ba_std" lines.
void write_plot_data(const std::filesystem::path& path, const ExperimentReport& r);
// Sweep CSV for one model: missing_fraction,BA,F1.
void write_sweep_csv(const std::filesystem::path& path, std::span<const double> fractions,
                     std::span<const EvalResult> results);

}  // namespace modfuse
