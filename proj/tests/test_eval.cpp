// tests/test_eval.cpp

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

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "modfuse/eval.hpp"
#include "modfuse/rng.hpp"
#include "modfuse/verify.hpp"

namespace modfuse {
namespace {

ConfusionCounts counts(std::uint64_t tp, std::uint64_t fn, std::uint64_t tn, std::uint64_t fp) {
  ConfusionCounts c;
  c.tp = tp;
  c.fn = fn;
  c.tn = tn;
  c.fp = fp;
  return c;
}

TEST(Metrics, BalancedAccuracyExamples) {
  EXPECT_NEAR(balanced_accuracy(counts(5, 5, 8, 2)), 0.65, 1e-12);
  EXPECT_DOUBLE_EQ(balanced_accuracy(counts(10, 0, 7, 0)), 1.0);
  // Everything predicted positive.
  EXPECT_DOUBLE_EQ(balanced_accuracy(counts(10, 0, 0, 7)), 0.5);
}

TEST(Metrics, BalancedAccuracyNeedsBothClasses) {
  EXPECT_THROW(balanced_accuracy(counts(3, 1, 0, 0)), ContractError);
  EXPECT_THROW(balanced_accuracy(counts(0, 0, 3, 1)), ContractError);
}

TEST(Metrics, F1Examples) {
  ConfusionCounts c;
  c.tp = 2;
  c.fp = 1;
  c.fn = 1;
  EXPECT_NEAR(f1_score(c), 2.0 / 3.0, 1e-9);
  EXPECT_DOUBLE_EQ(f1_score(counts(9, 0, 4, 0)), 1.0);
  EXPECT_DOUBLE_EQ(f1_score(counts(0, 3, 4, 2)), 0.0);
}

TEST(Metrics, F1UndefinedWarns) {
  std::ostringstream warn;
  EXPECT_DOUBLE_EQ(f1_score(counts(0, 0, 5, 0), &warn), 0.0);
  EXPECT_FALSE(warn.str().empty());
  std::ostringstream quiet;
  f1_score(counts(1, 0, 5, 0), &quiet);
  EXPECT_TRUE(quiet.str().empty());
}

TEST(Metrics, CoinFlipIsChance) {
  Rng rng(2024);
  ConfusionCounts c;
  for (int i = 0; i < 2000; ++i) c.add(static_cast<int>(rng.index(2)), rng.bernoulli(0.5) ? 1 : 0);
  const double ba = balanced_accuracy(c);
  EXPECT_GE(ba, 0.47);
  EXPECT_LE(ba, 0.53);
}

TEST(Metrics, SymmetricUnderClassSwap) {
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    const auto c = counts(1 + rng.index(50), rng.index(50), 1 + rng.index(50), rng.index(50));
    const auto swapped = counts(c.tn, c.fp, c.tp, c.fn);
    EXPECT_NEAR(balanced_accuracy(c), balanced_accuracy(swapped), 1e-15);
  }
}

TEST(Metrics, CountsAreAdditive) {
  Rng rng(4);
  ConfusionCounts whole, shard_a, shard_b;
  for (int i = 0; i < 500; ++i) {
    const int y = static_cast<int>(rng.index(2)), p = static_cast<int>(rng.index(2));
    whole.add(y, p);
    (i % 3 ? shard_a : shard_b).add(y, p);
  }
  shard_a += shard_b;
  EXPECT_EQ(shard_a, whole);
  EXPECT_EQ(balanced_accuracy(shard_a), balanced_accuracy(whole));
  EXPECT_EQ(whole.total(), 500u);
}

TEST(Metrics, ArgmaxTieGoesToFluent) {
  const double tie[] = {0.3, 0.3};
  const double pos[] = {0.1, 0.2};
  const double neg[] = {0.2, 0.1};
  EXPECT_EQ(predict_label(tie), 0);
  EXPECT_EQ(predict_label(pos), 1);
  EXPECT_EQ(predict_label(neg), 0);
}

TEST(Mask, CountAndDeterminism) {
  for (std::size_t n : {1u, 7u, 40u, 201u}) {
    const auto m = missing_video_mask(n, 0.5, 99);
    EXPECT_EQ(std::count(m.begin(), m.end(), 1), static_cast<long>((n + 1) / 2));
    EXPECT_EQ(m, missing_video_mask(n, 0.5, 99));
  }
  const auto a = missing_video_mask(100, 0.25, 1);
  EXPECT_EQ(std::count(a.begin(), a.end(), 1), 25);
  EXPECT_NE(a, missing_video_mask(100, 0.25, 2));
  const auto none = missing_video_mask(10, 0.0, 1);
  EXPECT_EQ(std::count(none.begin(), none.end(), 1), 0);
  const auto all = missing_video_mask(10, 1.0, 1);
  EXPECT_EQ(std::count(all.begin(), all.end(), 1), 10);
}

SyntheticSpec tiny_spec() {
  SyntheticSpec s;
  s.n_per_class = 20;
  s.audio = {1, 14, 41};
  s.video = {1, 12, 11};
  s.signal_span = 6;
  s.row_block = 2;
  return s;
}

TEST(Evaluate, FractionZeroIsPlainEvaluation) {
  const Dataset data = generate_synthetic_dataset(tiny_spec());
  FusionModel model(tiny_model_config(Variant::unified), 5);
  const EvalResult a = evaluate(model, data, Split::test, 0.0, 1);
  const EvalResult b = evaluate(model, data, Split::test, 0.0, 2);
  EXPECT_EQ(a.counts, b.counts);
  EXPECT_EQ(a.masked, 0u);
  EXPECT_EQ(a.counts.total(), 8u);
  // Direct oracle: argmax of each test sample's logits.
  ConfusionCounts direct;
  for (std::size_t i : data.indices(Split::test)) {
    Tape tape(false);
    const auto& s = data.samples[i];
    const Tensor& logits = model.forward(tape, s.audio, s.video_ptr()).value();
    direct.add(s.label, predict_label(logits.data()));
  }
  EXPECT_EQ(direct, a.counts);
}

TEST(Evaluate, FullMaskingMatchesAudioBranch) {
  Dataset data = generate_synthetic_dataset(tiny_spec());
  FusionModel model(tiny_model_config(Variant::unified), 6);
  const EvalResult masked = evaluate(model, data, Split::test, 1.0, 3);
  EXPECT_EQ(masked.masked, 8u);
  for (auto& s : data.samples) s.video.reset();
  const EvalResult stripped = evaluate(model, data, Split::test, 0.0, 3);
  EXPECT_EQ(masked.counts, stripped.counts);
}

TEST(Evaluate, HalfMaskingIsSeeded) {
  const Dataset data = generate_synthetic_dataset(tiny_spec());
  FusionModel model(tiny_model_config(Variant::unified), 7);
  const EvalResult a = evaluate(model, data, Split::test, 0.5, 11);
  const EvalResult b = evaluate(model, data, Split::test, 0.5, 11);
  EXPECT_EQ(a.masked, 4u);
  EXPECT_EQ(a.counts, b.counts);
}

TEST(Evaluate, ContractForPairedVariants) {
  const Dataset data = generate_synthetic_dataset(tiny_spec());
  for (Variant v : {Variant::early, Variant::late, Variant::video_only}) {
    FusionModel model(tiny_model_config(v), 1);
    EXPECT_THROW(evaluate(model, data, Split::test, 0.5, 1), ContractError) << variant_name(v);
    EXPECT_NO_THROW(evaluate(model, data, Split::test, 0.0, 1));
  }
  FusionModel audio(tiny_model_config(Variant::audio_only), 1);
  EXPECT_NO_THROW(evaluate(audio, data, Split::test, 0.5, 1));
}

TEST(Report, MeanAndSampleStd) {
  const double xs[] = {0.7, 0.8, 0.9};
  const MeanStd m = mean_std(xs);
  EXPECT_NEAR(m.mean, 0.8, 1e-12);
  EXPECT_NEAR(m.std, 0.1, 1e-12);
  const double one[] = {0.4};
  EXPECT_EQ(mean_std(one).std, 0.0);
}

class ExperimentTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    data_ = new Dataset(generate_synthetic_dataset(tiny_spec()));
    ExperimentConfig cfg;
    cfg.variants = {Variant::audio_only, Variant::unified};
    cfg.seeds = {1, 2, 3};
    cfg.model = tiny_model_config(Variant::unified);
    cfg.train.max_epochs = 2;
    cfg.train.batch_size = 8;
    report_ = new ExperimentReport(run_experiment(cfg, *data_));
  }
  static void TearDownTestSuite() {
    delete report_;
    delete data_;
  }
  static Dataset* data_;
  static ExperimentReport* report_;
};
Dataset* ExperimentTest::data_ = nullptr;
ExperimentReport* ExperimentTest::report_ = nullptr;

TEST_F(ExperimentTest, RowCounts) {
  const auto& r = *report_;
  EXPECT_EQ(r.rows.size(), 3u + 3u * kSweepFractions.size());
  EXPECT_EQ(r.aggregates.size(), 1u + kSweepFractions.size());
  for (const auto& a : r.aggregates) EXPECT_EQ(a.seeds, 3u);
  std::size_t audio_rows = 0;
  for (const auto& row : r.rows) audio_rows += row.variant == "audio_only";
  EXPECT_EQ(audio_rows, 3u);
}

TEST_F(ExperimentTest, AggregatesMatchRows) {
  const auto& r = *report_;
  std::vector<double> bas;
  for (const auto& row : r.rows)
    if (row.variant == "unified" && row.missing_fraction == 0.5) bas.push_back(row.ba);
  ASSERT_EQ(bas.size(), 3u);
  const MeanStd m = mean_std(bas);
  EXPECT_EQ(r.find("unified", 0.5).ba_mean, m.mean);
  EXPECT_EQ(r.find("unified", 0.5).ba_std, m.std);
  EXPECT_THROW(r.find("early", 0.0), std::out_of_range);
}

TEST_F(ExperimentTest, SweepAtZeroIsHeadline) {
  // Retrain seed 2 independently and compare with its fraction-0 row.
  TrainConfig tc;
  tc.max_epochs = 2;
  tc.batch_size = 8;
  tc.seed = 2;
  TrainResult tr = train(tiny_model_config(Variant::unified), tc, *data_);
  const EvalResult e = evaluate(tr.model, *data_, Split::test, 0.0, derive_seed(2, "eval"));
  for (const auto& row : report_->rows)
    if (row.variant == "unified" && row.seed == 2 && row.missing_fraction == 0.0)
      EXPECT_EQ(row.ba, e.ba);
}

TEST_F(ExperimentTest, Writers) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "modfuse_report";
  fs::create_directories(dir);
  write_report_csv(dir / "r.csv", *report_);
  write_report_json(dir / "r.json", *report_);
  write_plot_data(dir / "p.txt", *report_);
  std::ifstream csv(dir / "r.csv");
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "task,variant,seed,missing_fraction,BA,F1");
  std::size_t n = 0, mean_rows = 0, std_rows = 0;
  while (std::getline(csv, line)) {
    ++n;
    mean_rows += line.find(",mean,") != std::string::npos;
    std_rows += line.find(",std,") != std::string::npos;
  }
  EXPECT_EQ(n, report_->rows.size() + 2 * report_->aggregates.size());
  EXPECT_EQ(mean_rows, report_->aggregates.size());
  EXPECT_EQ(std_rows, report_->aggregates.size());
  std::ifstream js(dir / "r.json");
  const auto j = nlohmann::json::parse(js);
  EXPECT_EQ(j["rows"].size(), report_->rows.size());
  EXPECT_EQ(j["aggregates"].size(), report_->aggregates.size());
  std::ifstream plot(dir / "p.txt");
  std::getline(plot, line);
  EXPECT_EQ(line[0], '#');
  fs::remove_all(dir);
}

}  // namespace
}  // namespace modfuse
