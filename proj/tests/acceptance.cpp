// tests/acceptance.cpp

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

// Acceptance harness: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria (0 when everything holds).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "modfuse/cli.hpp"
#include "modfuse/data.hpp"
#include "modfuse/eval.hpp"
#include "modfuse/grad_check.hpp"
#include "modfuse/ops.hpp"
#include "modfuse/rng.hpp"
#include "modfuse/training.hpp"
#include "modfuse/verify.hpp"

namespace fs = std::filesystem;
using namespace modfuse;

namespace {

int failures = 0;

void report(int id, const std::string& title, bool ok, const std::string& detail) {
  std::printf("%s criterion %d (%s): %s\n", ok ? "PASS" : "FAIL", id, title.c_str(),
              detail.c_str());
  std::fflush(stdout);
  failures += !ok;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

bool same_tree(const fs::path& a, const fs::path& b) {
  std::size_t na = 0, nb = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    ++na;
    const fs::path other = b / fs::relative(e.path(), a);
    if (!fs::exists(other) || slurp(e.path()) != slurp(other)) return false;
  }
  for (const auto& e : fs::recursive_directory_iterator(b)) nb += e.is_regular_file();
  return na == nb && na > 0;
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "modfuse");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  if (code != 0) std::cerr << err.str();
  return code;
}

void criteria_1_2() {
  const auto t0 = std::chrono::steady_clock::now();
  const Dataset data = generate_synthetic_dataset(SyntheticSpec{});
  ExperimentConfig cfg;
  cfg.variants = {Variant::audio_only, Variant::video_only, Variant::unified};
  cfg.model.audio = data.header.audio;
  cfg.model.video = data.header.video;
  const ExperimentReport r = run_experiment(
      cfg, data, [](Variant v, std::uint64_t seed, const TrainResult& t, const EvalResult& e) {
        std::printf("  %s seed %llu: %zu epochs, BA %.4f\n", std::string(variant_name(v)).c_str(),
                    static_cast<unsigned long long>(seed), t.log.epochs.size(), e.ba);
        std::fflush(stdout);
      });
  const double secs = seconds_since(t0);
  const double audio = r.find("audio_only", 0.0).ba_mean;
  const double video = r.find("video_only", 0.0).ba_mean;
  const double uni = r.find("unified", 0.0).ba_mean;
  const double half = r.find("unified", 0.5).ba_mean;
  const double none = r.find("unified", 1.0).ba_mean;
  const bool budget = secs < 600.0;
  report(1, "multimodal gain", uni >= audio + 0.05 && video >= audio && budget,
         fmt("BA unified %.4f, audio %.4f, video %.4f; %.0f s", uni, audio, video, secs));
  report(2, "missingness resilience", half >= audio + 0.02 && none >= audio - 0.03,
         fmt("BA unified@0.5 %.4f vs audio+0.02 %.4f; unified@1.0 %.4f vs audio-0.03 %.4f",
             half, audio + 0.02, none, audio - 0.03));
}

void criterion_3() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto cases = gradient_cases();
  const auto results = run_gradient_checks(cases, 20, 1e-4);
  const double secs = seconds_since(t0);
  double worst = 0.0;
  std::string failed;
  for (const auto& r : results) {
    worst = std::max(worst, r.worst);
    if (!r.passed) failed += " " + r.name;
  }
  report(3, "gradient correctness", failed.empty() && secs < 60.0,
         fmt("%.0f cases x 20 trials, worst rel err %.2e, %.1f s", static_cast<double>(cases.size()),
             worst, secs) +
             (failed.empty() ? "" : "; failed:" + failed));

  // Sensitivity: conv1d with a sign-flipped backward must be caught and named.
  GradientCase flipped{"conv1d", [](std::uint64_t seed) {
                         Rng rng(seed);
                         Tensor x(Shape{2, 7}), k(Shape{3, 2, 3}), w(Shape{3, 5});
                         for (auto* t : {&x, &k, &w})
                           for (auto& v : t->data()) v = rng.normal();
                         return grad_check(
                             [&](Tape& tape, Var xv) {
                               Var y = conv1d(xv, tape.constant(k), 1);
                               Var neg = tape.record(
                                   "conv1d", y.value(), {y.index},
                                   [in = y.index](Tape& tp, std::size_t self) {
                                     Tensor g = tp.grad_buffer(self);
                                     for (auto& v : g.data()) v = -v;
                                     tp.accumulate(in, g);
                                   });
                               return sum(mul(neg, tape.constant(w)));
                             },
                             x);
                       }};
  const auto sens = run_gradient_checks(std::span(&flipped, 1), 3, 1e-4);
  const bool caught = !sens[0].passed && sens[0].name == "conv1d";
  std::printf("  sensitivity: sign-flipped conv1d backward %s (rel err %.2e)\n",
              caught ? "detected and named" : "NOT detected", sens[0].worst);
  if (!caught) ++failures;
}

void criteria_4_5() {
  bool structural = true;
  double gap = 0.0;
  for (std::uint64_t s = 1; s <= 20; ++s) {
    structural = structural && shared_encoder_structurally_equal(s);
    gap = std::max(gap, shared_encoder_gradient_gap(s));
  }
  report(4, "weight sharing", structural && gap <= 1e-9,
         std::string("parameter sets ") + (structural ? "equal" : "differ") +
             fmt(" over 20 draws, gradient gap %.2e", gap));
  double worst = 0.0;
  for (std::uint64_t s = 1; s <= 100; ++s) worst = std::max(worst, missing_video_gap(s));
  report(5, "missingness equivalence", worst == 0.0,
         fmt("max |difference| over 100 draws %.3e", worst));
}

void criterion_6() {
  ConfusionCounts c;
  c.tp = 5;
  c.fn = 5;
  c.tn = 8;
  c.fp = 2;
  const double ba = balanced_accuracy(c);
  ConfusionCounts d;
  d.tp = 2;
  d.fp = 1;
  d.fn = 1;
  const double f1 = f1_score(d);
  Tape tape;
  const int labels[] = {1};
  const double loss =
      cross_entropy(tape.constant(Tensor(Shape{1, 2}, {0.3, 0.3})), labels).value()[0];
  Rng rng(2000);
  ConfusionCounts coin;
  for (int i = 0; i < 2000; ++i) coin.add(i % 2, rng.bernoulli(0.5) ? 1 : 0);
  const double coin_ba = balanced_accuracy(coin);
  const bool ok = std::abs(ba - 0.65) < 1e-12 && std::abs(f1 - 2.0 / 3.0) <= 1e-9 &&
                  std::abs(loss - std::log(2.0)) <= 1e-12 && coin_ba >= 0.47 && coin_ba <= 0.53;
  report(6, "metric suite", ok,
         fmt("BA %.6f, F1 %.9f, uniform loss - ln2 %.1e, coin BA %.4f", ba, f1,
             loss - std::log(2.0), coin_ba));
}

void criterion_7(const fs::path& work) {
  const fs::path data = work / "data";
  bool ok = cli({"gen", "--out", data.string()}) == 0;
  const std::string manifest = (data / "manifest.json").string();
  for (const char* run : {"run1", "run2"})
    ok = ok && cli({"train", "--model", "unified", "--seed", "123", "--data", manifest, "--out",
                    (work / run).string(), "--no-timestamps"}) == 0;
  const bool same_ck = ok && same_tree(work / "run1" / "checkpoint", work / "run2" / "checkpoint");
  const bool same_log =
      ok && slurp(work / "run1" / "train_log.csv") == slurp(work / "run2" / "train_log.csv");
  report(7, "determinism", same_ck && same_log,
         std::string("checkpoint ") + (same_ck ? "identical" : "differs") + ", train log " +
             (same_log ? "identical" : "differs"));
}

void criterion_8() {
  std::vector<int> labels(1660, 0);
  labels.insert(labels.end(), 469, 1);
  BalancedSampler sampler(labels, 8);
  std::size_t minority = 0, draws = 0;
  while (draws < 10000) {
    for (std::size_t i : sampler.next_batch(100)) minority += labels[i] == 1;
    draws += 100;
  }
  const double share = static_cast<double>(minority) / static_cast<double>(draws);
  report(8, "sampler balance", share >= 0.48 && share <= 0.52,
         fmt("minority share %.4f over 10000 draws", share));
}

void criterion_9() {
  Rng rng(9);
  bool exact = true;
  for (std::size_t nd = 1; nd <= 4; ++nd)
    for (int trial = 0; trial < 10; ++trial) {
      Shape s;
      for (std::size_t i = 0; i < nd; ++i) s.push_back(1 + rng.index(5));
      Tensor t(s);
      for (auto& v : t.data()) v = rng.normal(0.0, 1e3);
      const Tensor q = quantize_f32(t);
      exact = exact && decode_tensor(encode_tensor(q)) == q &&
              decode_tensor(encode_tensor(t)) == q;
    }
  const auto good = encode_tensor(Tensor(Shape{2, 3}));
  auto offset_of = [](std::vector<std::uint8_t> b) -> long long {
    try {
      decode_tensor(b);
    } catch (const FormatError& e) {
      return static_cast<long long>(e.offset());
    }
    return -1;
  };
  auto magic = good;
  magic[0] = 'X';
  auto version = good;
  version[4] = 2;
  auto truncated = good;
  truncated.pop_back();
  const bool corrupt = offset_of(magic) == 0 && offset_of(version) == 4 &&
                       offset_of(truncated) == static_cast<long long>(truncated.size());
  report(9, "format fidelity", exact && corrupt,
         std::string("roundtrip ") + (exact ? "exact" : "inexact") +
             " over 1-4 axes; corrupted magic/version/truncation " +
             (corrupt ? "rejected at expected offsets" : "mishandled"));
}

}  // namespace

int main(int argc, char** argv) {
  const bool quick = argc > 1 && std::string(argv[1]) == "--skip-experiment";
  const fs::path work = fs::temp_directory_path() / "modfuse_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);
  try {
    if (!quick) criteria_1_2();
    criterion_3();
    criteria_4_5();
    criterion_6();
    criterion_7(work);
    criterion_8();
    criterion_9();
  } catch (const std::exception& e) {
    std::printf("FAIL acceptance harness aborted: %s\n", e.what());
    ++failures;
  }
  fs::remove_all(work);
  std::printf("%d criteria failed\n", failures);
  return failures;
}
