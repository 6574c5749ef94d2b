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

// Config-driven experiment grid: dataset preparation, per-cell training and
// evaluation, aggregation over seeds, and the text/CSV outputs.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "semifair/data.hpp"
#include "semifair/metrics.hpp"
#include "semifair/training.hpp"

namespace semifair::experiment {

/// Every field has a default; a JSON config overrides any subset.
struct ExperimentConfig {
  std::string train_path;  // default: bundled adult.data
  std::string test_path;   // default: bundled adult.test
  std::vector<std::string> backbones = {"LR", "DNN", "FM"};
  std::vector<std::string> methods = {"plain", "AL", "AL+ST", "DAL", "DAL+ST", "Semi-FairVAE"};
  std::vector<double> label_ratios = {0.1, 0.2, 0.5};
  std::vector<double> lambda_grid = {0.0, 0.1, 0.4, 1.0, 4.0};
  std::vector<double> unlabeled_fractions = {0.0, 0.25, 0.5, 0.75, 1.0};
  /// Label ratio for ablations and sweeps.
  double study_ratio = 0.2;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  double val_frac = 0.1;
  /// Template for every trained cell; method, backbone, ratio, seed and (in
  /// sweeps) lambda are filled in per cell.
  training::MethodSpec spec;
  bool probe = true;
  bool save_checkpoints = false;
  bool write_logs = false;
  std::string output_dir = "results";
  std::size_t workers = 1;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);

ExperimentConfig load_config(const std::filesystem::path& path);

/// Hash over everything that can change a result (paths, output location and
/// worker count excluded).
std::uint64_t config_hash(const ExperimentConfig& c);
std::string hex(std::uint64_t v);

/// `output_dir` resolved against $SEMIFAIR_OUTPUT_ROOT when it is relative.
std::filesystem::path output_directory(const ExperimentConfig& c);

/// Preprocessed train and test samples plus the fitted preprocessing state.
struct Dataset {
  std::vector<data::Sample> train;
  std::vector<data::Sample> test;
  data::Stats stats;
};

/// Loads and preprocesses the Adult files named in the config. Missing files
/// raise std::runtime_error with a download hint.
Dataset load_dataset(const ExperimentConfig& c);

/// One (backbone, method, ratio, seed) run; `variant` tags ablation and sweep
/// rows.
struct Cell {
  training::MethodSpec spec;
  std::string variant;
  /// Keep only this fraction of the unlabeled training part (sweeps).
  double unlabeled_fraction = 1.0;
};

struct CellResult {
  Cell cell;
  bool ok = false;
  std::string error;
  metrics::FairnessReport report;
  std::optional<training::TrainReport> train_report;
  double seconds = 0.0;
};

struct RunOptions {
  double val_frac = 0.1;
  bool probe = true;
  /// When set, checkpoints / step logs are written under this directory.
  std::optional<std::filesystem::path> checkpoint_dir;
  std::optional<std::filesystem::path> log_dir;
  std::uint64_t config_hash = 0;
};

std::string cell_id(const Cell& c);

/// Trains and evaluates one cell; exceptions become a failed result.
CellResult run_cell(const Dataset& ds, const Cell& cell, const RunOptions& options);

/// Runs cells on `workers` threads. Results keep the input order. `progress`
/// (optional) is called once per finished cell, serialized.
std::vector<CellResult> run_cells(const Dataset& ds, const std::vector<Cell>& cells,
                                  const RunOptions& options, std::size_t workers,
                                  const std::function<void(const CellResult&)>& progress = {});

/// Mean and population std of a metric over the ok seeds of a group.
struct Aggregate {
  std::string backbone, method, variant;
  double ratio = 0.0;
  double lambda = 0.0;
  double unlabeled_fraction = 1.0;
  std::size_t n_ok = 0, n_failed = 0;
  double acc_mean = 0.0, acc_std = 0.0;
  double dp_mean = 0.0, dp_std = 0.0;
  double opp_mean = 0.0, opp_std = 0.0;
  std::optional<double> probe_mean;
  bool failed() const { return n_failed > 0 || n_ok == 0; }
};

/// Groups by (backbone, method, variant, ratio, lambda, unlabeled fraction),
/// preserving first-appearance order.
std::vector<Aggregate> aggregate(const std::vector<CellResult>& results);

// ---- output formats ----

std::string raw_csv(const std::vector<CellResult>& results, std::uint64_t hash,
                    const std::vector<std::uint64_t>& seeds);
std::string aggregate_csv(const std::vector<Aggregate>& rows, std::uint64_t hash,
                          const std::vector<std::uint64_t>& seeds);
/// Methods as rows, ratios as column groups of (Acc, DP, OPP), one block per
/// backbone.
std::string results_table(const std::vector<Aggregate>& rows,
                          const std::vector<double>& ratios, std::uint64_t hash,
                          const std::vector<std::uint64_t>& seeds);
/// Grid value with Acc / DP / OPP mean and std per row.
std::string sweep_csv(const std::vector<Aggregate>& rows, const std::string& axis,
                      std::uint64_t hash, const std::vector<std::uint64_t>& seeds);

// ---- cell lists ----

std::vector<Cell> experiment_cells(const ExperimentConfig& c);
/// Full Semi-FairVAE plus one variant per disabled switch, at study_ratio.
std::vector<Cell> ablation_cells(const ExperimentConfig& c);
enum class SweepAxis { kLambda, kUnlabeledFraction };
SweepAxis parse_axis(const std::string& name);
std::vector<Cell> sweep_cells(const ExperimentConfig& c, SweepAxis axis);

// ---- drivers (write files into output_directory) ----

struct RunSummary {
  std::vector<CellResult> results;
  std::vector<Aggregate> rows;
  std::filesystem::path out_dir;
  std::uint64_t hash = 0;
};

RunSummary run_experiments(const ExperimentConfig& c,
                           const std::function<void(const CellResult&)>& progress = {});
RunSummary run_ablation(const ExperimentConfig& c,
                        const std::function<void(const CellResult&)>& progress = {});
RunSummary run_sweep(const ExperimentConfig& c, SweepAxis axis,
                     const std::function<void(const CellResult&)>& progress = {});

// ---- checkpoints ----

/// Writes r_f, attribute, label and prediction per test sample (header row
/// first).
void export_embeddings(models::ModelBundle& bundle, const std::vector<data::Sample>& samples,
                       const std::filesystem::path& out_path);

/// Preprocessing state stored in a checkpoint written by run_cell.
data::Stats checkpoint_stats(const models::CheckpointHeader& header);

/// Test file -> FairnessReport, using the checkpoint's preprocessing state.
metrics::FairnessReport evaluate_checkpoint(const std::filesystem::path& checkpoint,
                                            const std::filesystem::path& test_file,
                                            bool probe, std::uint64_t probe_seed = 0);

}  // namespace semifair::experiment
