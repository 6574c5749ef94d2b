/*
 * Copyright 2026 The semifair Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Command-line front end: run, ablate, sweep, export-embeddings, eval.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "semifair/experiment.hpp"

namespace ex = semifair::experiment;

namespace {

struct CommonOptions {
  std::string config;
  std::string output;
  std::optional<std::size_t> workers;
  std::optional<std::size_t> epochs;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> backbones;
  bool save_checkpoints = false;
  bool write_logs = false;
  bool quiet = false;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("-c,--config", o.config, "JSON config file (see `semifair config`)");
  cmd->add_option("-o,--output", o.output, "Output directory (overrides config output_dir)");
  cmd->add_option("-j,--workers", o.workers, "Parallel training cells");
  cmd->add_option("--epochs", o.epochs, "Epochs per cell (overrides spec.epochs)");
  cmd->add_option("--seeds", o.seeds, "Seed list (overrides config seeds)");
  cmd->add_option("--backbones", o.backbones, "Backbone list: LR DNN FM");
  cmd->add_flag("--save-checkpoints", o.save_checkpoints, "Write one checkpoint per cell");
  cmd->add_flag("--write-logs", o.write_logs, "Write per-step JSONL logs and train reports");
  cmd->add_flag("-q,--quiet", o.quiet, "No per-cell progress lines");
}

ex::ExperimentConfig resolve(const CommonOptions& o) {
  ex::ExperimentConfig c = o.config.empty() ? ex::ExperimentConfig{} : ex::load_config(o.config);
  if (!o.output.empty()) c.output_dir = o.output;
  if (o.workers) c.workers = *o.workers;
  if (o.epochs) c.spec.epochs = *o.epochs;
  if (!o.seeds.empty()) c.seeds = o.seeds;
  if (!o.backbones.empty()) c.backbones = o.backbones;
  if (o.save_checkpoints) c.save_checkpoints = true;
  if (o.write_logs) c.write_logs = true;
  // Re-validate after overrides.
  return nlohmann::json(c).get<ex::ExperimentConfig>();
}

std::function<void(const ex::CellResult&)> progress_printer(bool quiet) {
  if (quiet) return {};
  return [](const ex::CellResult& r) {
    if (r.ok) {
      std::fprintf(stderr, "%-40s acc %.4f  dp %.4f  opp %.4f  (%.1fs)\n",
                   ex::cell_id(r.cell).c_str(), r.report.accuracy, r.report.dp_gap,
                   r.report.opp_gap, r.seconds);
    } else {
      std::fprintf(stderr, "%-40s FAILED: %s\n", ex::cell_id(r.cell).c_str(), r.error.c_str());
    }
  };
}

void report(const ex::RunSummary& s, const char* what) {
  std::size_t failed = 0;
  for (const auto& r : s.results) failed += !r.ok;
  std::printf("%s: %zu cells (%zu failed), config hash %s, outputs in %s\n", what,
              s.results.size(), failed, ex::hex(s.hash).c_str(), s.out_dir.string().c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-supervised fair representation learning experiments"};
  app.require_subcommand(1);

  CommonOptions run_opts, ablate_opts, sweep_opts;
  auto* run = app.add_subcommand("run", "Backbone x method x ratio x seed grid with results table");
  add_common(run, run_opts);

  auto* ablate = app.add_subcommand("ablate", "Semi-FairVAE ablation variants at the study ratio");
  add_common(ablate, ablate_opts);

  auto* sweep = app.add_subcommand("sweep", "Sweep lambda or the unlabeled fraction");
  add_common(sweep, sweep_opts);
  std::string axis = "lambda";
  sweep->add_option("--axis", axis, "lambda or unlabeled_fraction")
      ->check(CLI::IsMember({"lambda", "unlabeled_fraction"}));

  auto* config = app.add_subcommand("config", "Print the effective config as JSON");
  std::string config_file;
  config->add_option("-c,--config", config_file, "JSON config file to merge over defaults");

  std::string checkpoint, test_file, out_path;
  auto* exp = app.add_subcommand("export-embeddings", "Write r_f, z, y, prediction per test sample");
  exp->add_option("--checkpoint", checkpoint, "Checkpoint written by run --save-checkpoints")
      ->required()->check(CLI::ExistingFile);
  exp->add_option("--test", test_file, "Adult-format test file")->required();
  exp->add_option("--out", out_path, "Output CSV")->required();

  bool probe = false;
  std::uint64_t probe_seed = 0;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a test file");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--test", test_file, "Adult-format test file")->required();
  eval->add_flag("--probe", probe, "Also fit the leakage probe on r_f");
  eval->add_option("--probe-seed", probe_seed, "Seed of the probe's train/test split");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      report(ex::run_experiments(resolve(run_opts), progress_printer(run_opts.quiet)), "run");
    } else if (*ablate) {
      report(ex::run_ablation(resolve(ablate_opts), progress_printer(ablate_opts.quiet)),
             "ablate");
    } else if (*sweep) {
      report(ex::run_sweep(resolve(sweep_opts), ex::parse_axis(axis),
                           progress_printer(sweep_opts.quiet)),
             "sweep");
    } else if (*config) {
      const ex::ExperimentConfig c =
          config_file.empty() ? ex::ExperimentConfig{} : ex::load_config(config_file);
      std::cout << nlohmann::json(c).dump(2) << "\nconfig_hash " << ex::hex(ex::config_hash(c))
                << "\n";
    } else if (*exp) {
      auto [bundle, header] = semifair::models::load_checkpoint(checkpoint);
      const auto stats = ex::checkpoint_stats(header);
      const auto samples =
          semifair::data::preprocess(semifair::data::load_adult_file(test_file), stats).first;
      ex::export_embeddings(bundle, samples, out_path);
      std::printf("wrote %zu rows to %s\n", samples.size(), out_path.c_str());
    } else if (*eval) {
      const auto r = ex::evaluate_checkpoint(checkpoint, test_file, probe, probe_seed);
      std::cout << nlohmann::json(r).dump(2) << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
