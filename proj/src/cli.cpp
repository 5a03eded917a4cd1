// src/cli.cpp

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

#include "modfuse/cli.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "modfuse/checkpoint.hpp"
#include "modfuse/config.hpp"
#include "modfuse/data.hpp"
#include "modfuse/eval.hpp"
#include "modfuse/training.hpp"
#include "modfuse/verify.hpp"

namespace modfuse {
namespace {

namespace fs = std::filesystem;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string data;
  std::optional<std::string> model;
  std::string checkpoint;
  std::optional<double> frac;
  bool sweep = false;
  bool no_timestamps = false;
  std::optional<double> lr;
  std::optional<std::size_t> batch_size;
  std::optional<std::size_t> max_epochs;
  std::optional<std::size_t> patience;
  std::optional<std::size_t> n_per_class;
  std::optional<double> missing_video_frac;
  std::string only;
  std::vector<std::string> variants;
  std::vector<std::uint64_t> seeds;
};

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  return buf;
}

RunConfig base_config(const Options& o) {
  RunConfig cfg;
  if (!o.config.empty()) apply_config_file(cfg, o.config);
  return cfg;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

// Model input shapes always follow the data.
void adopt_header(RunConfig& cfg, const DatasetHeader& h) {
  cfg.model.audio = h.audio;
  cfg.model.video = h.video;
}

int cmd_gen(const Options& o, std::ostream& out) {
  RunConfig cfg = base_config(o);
  if (o.seed) cfg.data.seed = *o.seed;
  if (o.n_per_class) cfg.data.n_per_class = *o.n_per_class;
  if (o.missing_video_frac) cfg.data.missing_video_fraction = *o.missing_video_frac;
  cfg.data.validate();
  const fs::path dir = o.out;
  ensure_dir(dir);
  const DatasetManifest m = generate_synthetic(cfg.data, dir);
  write_json_file(dir / "effective_config.json", to_flat_json(cfg, "data."));
  std::size_t counts[2][2] = {};
  std::size_t missing = 0;
  for (const auto& r : m.records) {
    counts[r.split == Split::test][r.label] += 1;
    missing += !r.video_path;
  }
  for (Split s : {Split::train, Split::test}) {
    const auto si = static_cast<std::size_t>(s == Split::test);
    out << split_name(s) << ": fluent " << counts[si][0] << ", disfluent " << counts[si][1]
        << "\n";
  }
  out << "records " << m.records.size() << ", missing video " << missing << "\n"
      << "manifest " << (dir / "manifest.json").string() << "\n";
  return kExitOk;
}

void apply_train_flags(const Options& o, RunConfig& cfg) {
  if (o.seed) cfg.train.seed = *o.seed;
  if (o.model) cfg.model.variant = parse_variant(*o.model);
  if (o.lr) cfg.train.learning_rate = *o.lr;
  if (o.batch_size) cfg.train.batch_size = *o.batch_size;
  if (o.max_epochs) cfg.train.max_epochs = *o.max_epochs;
  if (o.patience) cfg.train.patience = *o.patience;
}

int cmd_train(const Options& o, std::ostream& out) {
  RunConfig cfg = base_config(o);
  apply_train_flags(o, cfg);
  cfg.train.validate();
  const Dataset data = load_dataset(o.data);
  adopt_header(cfg, data.header);
  cfg.model.validate();
  const fs::path dir = o.out;
  ensure_dir(dir);
  nlohmann::json effective = to_flat_json(cfg, "model.");
  effective.update(to_flat_json(cfg, "train."));
  write_json_file(dir / "effective_config.json", effective);

  TrainResult result = train(cfg.model, cfg.train, data);
  save_checkpoint(dir / "checkpoint", result.model, !o.no_timestamps);
  write_train_log(dir / "train_log.csv", result.log);
  const auto& best = result.log.epochs[result.log.best_epoch() - 1];
  out << "model " << variant_name(cfg.model.variant) << ", epochs " << result.log.epochs.size()
      << ", best epoch " << best.epoch << ", val_loss " << fmt(best.val_loss) << "\n"
      << "checkpoint " << (dir / "checkpoint").string() << "\n";
  return kExitOk;
}

int cmd_eval(const Options& o, std::ostream& out) {
  RunConfig cfg = base_config(o);
  const double frac = o.frac.value_or(0.0);
  if (!(frac >= 0.0 && frac <= 1.0)) throw ConfigError("--frac must lie in [0, 1]");
  std::optional<Variant> requested;
  if (o.model) {
    requested = parse_variant(*o.model);
    if ((frac > 0.0 || o.sweep) && !tolerates_missing_video(*requested))
      throw ContractError(std::string(variant_name(*requested)) +
                          " model cannot be evaluated with missing video");
  }
  if (o.checkpoint.empty()) throw ConfigError("eval needs --checkpoint");
  FusionModel model = load_checkpoint(o.checkpoint);
  if (requested && *requested != model.variant())
    throw ContractError("--model " + std::string(variant_name(*requested)) +
                        " does not match the checkpoint's " +
                        std::string(variant_name(model.variant())) + " model");
  const Dataset data = load_dataset(o.data);
  if (data.header.audio != model.config().audio || data.header.video != model.config().video)
    throw ShapeError("dataset shapes do not match the checkpoint's model");
  const std::uint64_t seed = derive_seed(o.seed.value_or(cfg.train.seed), "eval");

  std::vector<double> fractions;
  if (o.sweep)
    fractions = kSweepFractions;
  else
    fractions = {frac};
  std::vector<EvalResult> results;
  for (double f : fractions) {
    results.push_back(evaluate(model, data, Split::test, f, seed));
    const auto& r = results.back();
    out << "missing_fraction " << fmt(f) << " BA " << fmt(r.ba) << " F1 " << fmt(r.f1)
        << " (TP " << r.counts.tp << " FP " << r.counts.fp << " TN " << r.counts.tn << " FN "
        << r.counts.fn << ", masked " << r.masked << ")\n";
  }
  if (!o.out.empty()) {
    const fs::path dir = o.out;
    ensure_dir(dir);
    write_sweep_csv(dir / (o.sweep ? "sweep.csv" : "metrics.csv"), fractions, results);
  }
  return kExitOk;
}

int cmd_verify(const Options& o, std::ostream& out, std::ostream& err) {
  const auto start = std::chrono::steady_clock::now();
  const auto results = run_verification(o.only, &err);
  std::size_t failed = 0;
  for (const auto& r : results) {
    if (r.passed) continue;
    ++failed;
    out << "FAIL " << r.group << "/" << r.name << (r.detail.empty() ? "" : ": " + r.detail)
        << "\n";
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  out << results.size() - failed << "/" << results.size() << " checks passed in " << fmt(secs)
      << " s\n";
  return failed ? kExitVerifyFailed : kExitOk;
}

int cmd_experiment(const Options& o, std::ostream& out) {
  RunConfig cfg = base_config(o);
  apply_train_flags(o, cfg);
  if (o.n_per_class) cfg.data.n_per_class = *o.n_per_class;
  if (o.missing_video_frac) cfg.data.missing_video_fraction = *o.missing_video_frac;
  cfg.train.validate();
  const Dataset data = o.data.empty() ? generate_synthetic_dataset(cfg.data)
                                      : load_dataset(o.data);
  adopt_header(cfg, data.header);
  ExperimentConfig ec;
  ec.model = cfg.model;
  ec.train = cfg.train;
  if (!o.variants.empty()) {
    ec.variants.clear();
    for (const auto& v : o.variants) ec.variants.push_back(parse_variant(v));
  }
  if (!o.seeds.empty()) ec.seeds = o.seeds;
  const fs::path dir = o.out;
  ensure_dir(dir);
  nlohmann::json effective = to_flat_json(cfg);
  write_json_file(dir / "effective_config.json", effective);
  const ExperimentReport report =
      run_experiment(ec, data, [&](Variant v, std::uint64_t seed, const TrainResult& t,
                                   const EvalResult& e) {
        out << variant_name(v) << " seed " << seed << ": epochs " << t.log.epochs.size()
            << ", BA " << fmt(e.ba) << ", F1 " << fmt(e.f1) << "\n"
            << std::flush;
      });
  write_report_csv(dir / "report.csv", report);
  write_report_json(dir / "report.json", report);
  write_plot_data(dir / "plot_data.txt", report);
  for (const auto& a : report.aggregates)
    out << a.variant << " @ " << fmt(a.missing_fraction) << ": BA " << fmt(a.ba_mean)
        << " +- " << fmt(a.ba_std) << ", F1 " << fmt(a.f1_mean) << " +- " << fmt(a.f1_std)
        << "\n";
  return kExitOk;
}

void add_eval_options(CLI::App* app, Options& o) {
  app->add_option("--config", o.config, "flat JSON config file")->check(CLI::ExistingFile);
  app->add_option("--checkpoint", o.checkpoint, "checkpoint directory written by train")
      ->required();
  app->add_option("--data", o.data, "dataset manifest")->required();
  app->add_option("--model", o.model, "expected variant: unified|early|late|audio|video");
  app->add_option("--frac,--missing-video-frac", o.frac, "fraction of test videos withheld");
  app->add_option("--seed", o.seed, "seed of the missing-video mask");
  app->add_option("--out", o.out, "directory for metric CSV files");
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Audio-visual fusion with missing-modality training and evaluation", "modfuse"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen", "generate a synthetic paired-embedding dataset");
  gen->add_option("--config", o.config, "flat JSON config file")->check(CLI::ExistingFile);
  gen->add_option("--seed", o.seed, "dataset seed");
  gen->add_option("--out", o.out, "output directory")->required();
  gen->add_option("--n-per-class", o.n_per_class, "samples per class");
  gen->add_option("--missing-video-frac", o.missing_video_frac,
                  "fraction of train samples without video");
  gen->add_flag("--no-timestamps", o.no_timestamps, "accepted for symmetry; gen writes none");

  auto* tr = app.add_subcommand("train", "train one model variant");
  tr->add_option("--config", o.config, "flat JSON config file")->check(CLI::ExistingFile);
  tr->add_option("--seed", o.seed, "training seed");
  tr->add_option("--data", o.data, "dataset manifest")->required();
  tr->add_option("--out", o.out, "output directory")->required();
  tr->add_option("--model", o.model, "unified|early|late|audio|video");
  tr->add_option("--lr", o.lr, "learning rate");
  tr->add_option("--batch-size", o.batch_size, "batch size");
  tr->add_option("--max-epochs", o.max_epochs, "epoch limit");
  tr->add_option("--patience", o.patience, "epochs without improvement before stopping");
  tr->add_flag("--no-timestamps", o.no_timestamps, "omit creation time from the checkpoint");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  add_eval_options(ev, o);
  ev->add_flag("--sweep", o.sweep, "evaluate the full missing-video grid");
  auto* sw = app.add_subcommand("sweep", "same as eval --sweep");
  add_eval_options(sw, o);

  auto* ver = app.add_subcommand("verify", "run the self-verification suite");
  ver->add_option("--only", o.only, "gradients|metrics|format|invariants");

  auto* ex = app.add_subcommand("experiment", "train and evaluate variants over seeds");
  ex->add_option("--config", o.config, "flat JSON config file")->check(CLI::ExistingFile);
  ex->add_option("--data", o.data, "dataset manifest (default: generate in memory)");
  ex->add_option("--out", o.out, "report directory")->required();
  ex->add_option("--variants", o.variants, "variants to train");
  ex->add_option("--seeds", o.seeds, "training seeds");
  ex->add_option("--lr", o.lr, "learning rate");
  ex->add_option("--batch-size", o.batch_size, "batch size");
  ex->add_option("--max-epochs", o.max_epochs, "epoch limit");
  ex->add_option("--patience", o.patience, "epochs without improvement before stopping");
  ex->add_option("--n-per-class", o.n_per_class, "samples per class when generating");
  ex->add_option("--missing-video-frac", o.missing_video_frac,
                 "fraction of train samples without video when generating");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) return cmd_gen(o, out);
    if (*tr) return cmd_train(o, out);
    if (*ev) return cmd_eval(o, out);
    if (*sw) {
      o.sweep = true;
      return cmd_eval(o, out);
    }
    if (*ver) return cmd_verify(o, out, err);
    if (*ex) return cmd_experiment(o, out);
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitVerifyFailed;
  }
  return kExitUsage;
}

}  // namespace modfuse
