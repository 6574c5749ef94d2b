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

#include "semifair/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace semifair::experiment {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string format(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, v);
  return buf;
}

// Round-trip precision for CSV values.
std::string exact(double v) { return format("%.17g", v); }

std::string seed_list(const std::vector<std::uint64_t>& seeds) {
  std::string out;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(seeds[i]);
  }
  return out;
}

std::string header_line(std::uint64_t hash, const std::vector<std::uint64_t>& seeds) {
  return "# config_hash=" + hex(hash) + " seeds=" + seed_list(seeds) + "\n";
}

std::string default_data_file(const char* name) {
  if (const char* dir = std::getenv("SEMIFAIR_DATA_DIR"); dir && *dir) {
    return (fs::path(dir) / name).string();
  }
  return (fs::path(SEMIFAIR_DATA_DIR) / name).string();
}

void require_file(const std::string& path, const char* role) {
  if (fs::exists(path)) return;
  throw std::runtime_error(
      std::string("dataset file not found (") + role + "): " + path +
      "\n  Download adult.data and adult.test from "
      "https://archive.ics.uci.edu/dataset/2/adult and either place them in the "
      "directory named by $SEMIFAIR_DATA_DIR or set \"train_path\" / \"test_path\" in the "
      "config.");
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

// Two cells with the same key produce the same result. The attribute-free
// baseline ignores the label ratio, so it is dropped from its key.
std::string result_key(const Cell& c) {
  training::MethodSpec spec = c.spec;
  if (spec.method == training::Method::kPlain) spec.label_ratio = 0.0;
  json j = spec;
  j["unlabeled_fraction"] = c.unlabeled_fraction;
  return j.dump();
}

std::string sanitize(std::string s) {
  for (char& ch : s) {
    if (ch == '+') ch = 'p';
    if (ch == '=' || ch == ' ' || ch == '/') ch = '_';
  }
  return s;
}

struct Moments {
  double mean = 0.0, std = 0.0;
};

Moments moments(const std::vector<double>& v) {
  Moments m;
  if (v.empty()) return m;
  double sum = 0.0;
  for (double x : v) sum += x;
  m.mean = sum / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m.mean) * (x - m.mean);
  m.std = std::sqrt(ss / static_cast<double>(v.size()));
  return m;
}

}  // namespace

// ---- config ----

void to_json(json& j, const ExperimentConfig& c) {
  j = {{"train_path", c.train_path},
       {"test_path", c.test_path},
       {"backbones", c.backbones},
       {"methods", c.methods},
       {"label_ratios", c.label_ratios},
       {"lambda_grid", c.lambda_grid},
       {"unlabeled_fractions", c.unlabeled_fractions},
       {"study_ratio", c.study_ratio},
       {"seeds", c.seeds},
       {"val_frac", c.val_frac},
       {"spec", c.spec},
       {"probe", c.probe},
       {"save_checkpoints", c.save_checkpoints},
       {"write_logs", c.write_logs},
       {"output_dir", c.output_dir},
       {"workers", c.workers}};
}

void from_json(const json& j, ExperimentConfig& c) {
  static const std::vector<std::string> known = {
      "train_path", "test_path", "backbones", "methods", "label_ratios",
      "lambda_grid", "unlabeled_fractions", "study_ratio", "seeds", "val_frac",
      "spec", "probe", "save_checkpoints", "write_logs", "output_dir", "workers"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw data::ConfigError("unknown config key \"" + key + "\"");
    }
  }
  ExperimentConfig d;
  c.train_path = j.value("train_path", d.train_path);
  c.test_path = j.value("test_path", d.test_path);
  c.backbones = j.value("backbones", d.backbones);
  c.methods = j.value("methods", d.methods);
  c.label_ratios = j.value("label_ratios", d.label_ratios);
  c.lambda_grid = j.value("lambda_grid", d.lambda_grid);
  c.unlabeled_fractions = j.value("unlabeled_fractions", d.unlabeled_fractions);
  c.study_ratio = j.value("study_ratio", d.study_ratio);
  c.seeds = j.value("seeds", d.seeds);
  c.val_frac = j.value("val_frac", d.val_frac);
  c.spec = j.contains("spec") ? j.at("spec").get<training::MethodSpec>() : d.spec;
  c.probe = j.value("probe", d.probe);
  c.save_checkpoints = j.value("save_checkpoints", d.save_checkpoints);
  c.write_logs = j.value("write_logs", d.write_logs);
  c.output_dir = j.value("output_dir", d.output_dir);
  c.workers = j.value("workers", d.workers);
  for (const auto& b : c.backbones) models::parse_backbone(b);
  for (const auto& m : c.methods) training::parse_method(m);
  if (c.seeds.empty()) throw data::ConfigError("seeds must not be empty");
  if (c.workers == 0) throw data::ConfigError("workers must be at least 1");
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw data::ConfigError("config " + path.string() + ": " + e.what());
  }
  return j.get<ExperimentConfig>();
}

std::uint64_t config_hash(const ExperimentConfig& c) {
  json j = c;
  for (const char* k : {"train_path", "test_path", "output_dir", "workers",
                        "save_checkpoints", "write_logs"}) {
    j.erase(k);
  }
  return data::fnv1a(j.dump());
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

fs::path output_directory(const ExperimentConfig& c) {
  const fs::path dir(c.output_dir);
  if (dir.is_absolute()) return dir;
  if (const char* root = std::getenv("SEMIFAIR_OUTPUT_ROOT"); root && *root) {
    return fs::path(root) / dir;
  }
  return dir;
}

Dataset load_dataset(const ExperimentConfig& c) {
  const std::string train_path =
      c.train_path.empty() ? default_data_file("adult.data") : c.train_path;
  const std::string test_path =
      c.test_path.empty() ? default_data_file("adult.test") : c.test_path;
  require_file(train_path, "train");
  require_file(test_path, "test");
  auto [train_raw, test_raw] = data::load_adult(train_path, test_path);
  Dataset ds;
  std::tie(ds.train, ds.stats) = data::preprocess(train_raw);
  ds.test = data::preprocess(test_raw, ds.stats).first;
  return ds;
}

// ---- cells ----

std::string cell_id(const Cell& c) {
  std::string id = models::to_string(c.spec.backbone) + "_" +
                   training::to_string(c.spec.method) + "_r" +
                   format("%g", c.spec.label_ratio) + "_s" + std::to_string(c.spec.seed);
  if (!c.variant.empty()) id += "_" + c.variant;
  return sanitize(id);
}

namespace {

training::TrainResult train_cell(const Dataset& ds, const Cell& cell,
                                 const training::TrainOptions& options,
                                 double val_frac) {
  const data::DatasetSplit split =
      data::split_and_mask(ds.train, val_frac, cell.spec.label_ratio, cell.spec.seed);
  if (cell.unlabeled_fraction >= 1.0) return training::train(cell.spec, split, options);
  if (cell.unlabeled_fraction < 0.0) {
    throw data::ConfigError("unlabeled_fraction must lie in [0, 1]");
  }
  if (training::is_self_training(cell.spec.method)) {
    throw data::ConfigError("unlabeled_fraction < 1 is not supported for self-training methods");
  }
  training::TrainData td = training::train_data(split);
  const auto keep = static_cast<std::size_t>(
      std::floor(cell.unlabeled_fraction * static_cast<double>(td.unlabeled.size())));
  td.unlabeled.resize(keep);
  // Rebuild the combined set in original input order.
  std::vector<std::pair<std::size_t, const data::Sample*>> all;
  for (std::size_t i = 0; i < split.train_labeled.size(); ++i) {
    all.emplace_back(split.labeled_index[i], &split.train_labeled[i]);
  }
  for (std::size_t i = 0; i < keep; ++i) {
    all.emplace_back(split.unlabeled_index[i], &split.train_unlabeled[i]);
  }
  std::sort(all.begin(), all.end());
  td.all.clear();
  for (const auto& [idx, s] : all) td.all.push_back(*s);
  return training::train_on(cell.spec, td, options);
}

}  // namespace

CellResult run_cell(const Dataset& ds, const Cell& cell, const RunOptions& options) {
  CellResult out;
  out.cell = cell;
  const auto start = std::chrono::steady_clock::now();
  try {
    std::ofstream log;
    training::TrainOptions topt;
    if (options.log_dir) {
      fs::create_directories(*options.log_dir);
      log.open(*options.log_dir / (cell_id(cell) + ".jsonl"), std::ios::binary);
      if (!log) throw std::runtime_error("cannot open training log in " + options.log_dir->string());
      topt.step_log = &log;
    }
    training::TrainResult trained = train_cell(ds, cell, topt, options.val_frac);
    const data::Batch test = data::gather_all(ds.test);
    out.report = metrics::evaluate(models::predict_test(trained.bundle, test.x), test.y, test.z);
    if (options.probe) {
      const Tensor reps = models::bias_free_representation(trained.bundle, test.x);
      out.report.probe_accuracy = metrics::leakage_probe(reps, test.z, cell.spec.seed);
    }
    if (options.checkpoint_dir) {
      json extra = {{"stats", ds.stats}, {"spec", cell.spec}, {"cell", cell_id(cell)}};
      models::save_checkpoint(trained.bundle, *options.checkpoint_dir / (cell_id(cell) + ".ckpt"),
                              options.config_hash, cell.spec.seed, extra);
    }
    if (options.log_dir) {
      write_file(*options.log_dir / (cell_id(cell) + ".report.json"),
                 json(trained.report).dump(1) + "\n");
    }
    out.train_report = std::move(trained.report);
    out.ok = true;
  } catch (const std::exception& e) {
    out.ok = false;
    out.error = e.what();
  }
  out.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

std::vector<CellResult> run_cells(const Dataset& ds, const std::vector<Cell>& cells,
                                  const RunOptions& options, std::size_t workers,
                                  const std::function<void(const CellResult&)>& progress) {
  // Run each distinct result key once and fan the result out.
  std::map<std::string, std::size_t> first;
  std::vector<std::size_t> unique;
  std::vector<std::size_t> owner(cells.size());
  for (std::size_t i = 0; i < cells.size(); ++i) {
    auto [it, inserted] = first.emplace(result_key(cells[i]), i);
    if (inserted) unique.push_back(i);
    owner[i] = it->second;
  }

  std::vector<CellResult> computed(cells.size());
  std::atomic<std::size_t> next{0};
  std::mutex progress_mutex;
  auto work = [&] {
    for (std::size_t k = next++; k < unique.size(); k = next++) {
      const std::size_t i = unique[k];
      computed[i] = run_cell(ds, cells[i], options);
      if (progress) {
        std::lock_guard<std::mutex> lock(progress_mutex);
        progress(computed[i]);
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(workers, unique.size()));
  if (n_threads == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }

  std::vector<CellResult> results(cells.size());
  for (std::size_t i = 0; i < cells.size(); ++i) {
    results[i] = computed[owner[i]];
    results[i].cell = cells[i];
  }
  return results;
}

std::vector<Aggregate> aggregate(const std::vector<CellResult>& results) {
  struct Group {
    Aggregate row;
    std::vector<double> acc, dp, opp, probe;
  };
  std::vector<Group> groups;
  std::map<std::string, std::size_t> index;
  for (const CellResult& r : results) {
    const auto& s = r.cell.spec;
    json key = {models::to_string(s.backbone), training::to_string(s.method), r.cell.variant,
                s.label_ratio, s.lambda, r.cell.unlabeled_fraction};
    auto [it, inserted] = index.emplace(key.dump(), groups.size());
    if (inserted) {
      Group g;
      g.row.backbone = models::to_string(s.backbone);
      g.row.method = training::to_string(s.method);
      g.row.variant = r.cell.variant;
      g.row.ratio = s.label_ratio;
      g.row.lambda = s.lambda;
      g.row.unlabeled_fraction = r.cell.unlabeled_fraction;
      groups.push_back(std::move(g));
    }
    Group& g = groups[it->second];
    if (!r.ok) {
      ++g.row.n_failed;
      continue;
    }
    ++g.row.n_ok;
    g.acc.push_back(r.report.accuracy);
    g.dp.push_back(r.report.dp_gap);
    g.opp.push_back(r.report.opp_gap);
    if (r.report.probe_accuracy) g.probe.push_back(*r.report.probe_accuracy);
  }
  std::vector<Aggregate> rows;
  for (Group& g : groups) {
    const Moments a = moments(g.acc), d = moments(g.dp), o = moments(g.opp);
    g.row.acc_mean = a.mean;
    g.row.acc_std = a.std;
    g.row.dp_mean = d.mean;
    g.row.dp_std = d.std;
    g.row.opp_mean = o.mean;
    g.row.opp_std = o.std;
    if (!g.probe.empty() && g.probe.size() == g.acc.size()) {
      g.row.probe_mean = moments(g.probe).mean;
    }
    rows.push_back(g.row);
  }
  return rows;
}

// ---- output formats ----

std::string raw_csv(const std::vector<CellResult>& results, std::uint64_t hash,
                    const std::vector<std::uint64_t>& seeds) {
  std::ostringstream out;
  out << header_line(hash, seeds);
  out << "config_hash,backbone,method,variant,ratio,lambda,unlabeled_fraction,seed,status,"
         "accuracy,auc,dp_gap,opp_gap,probe_accuracy,selected_epoch,error\n";
  for (const CellResult& r : results) {
    const auto& s = r.cell.spec;
    out << hex(hash) << ',' << models::to_string(s.backbone) << ','
        << training::to_string(s.method) << ',' << r.cell.variant << ','
        << exact(s.label_ratio) << ',' << exact(s.lambda) << ','
        << exact(r.cell.unlabeled_fraction) << ',' << s.seed << ',';
    if (!r.ok) {
      std::string msg = r.error;
      std::replace(msg.begin(), msg.end(), ',', ';');
      std::replace(msg.begin(), msg.end(), '\n', ' ');
      out << "FAILED,,,,,,," << msg << '\n';
      continue;
    }
    out << "ok," << exact(r.report.accuracy) << ',' << exact(r.report.auc) << ','
        << exact(r.report.dp_gap) << ',' << exact(r.report.opp_gap) << ','
        << (r.report.probe_accuracy ? exact(*r.report.probe_accuracy) : "") << ','
        << (r.train_report ? std::to_string(r.train_report->selected_epoch) : "") << ",\n";
  }
  return out.str();
}

std::string aggregate_csv(const std::vector<Aggregate>& rows, std::uint64_t hash,
                          const std::vector<std::uint64_t>& seeds) {
  std::ostringstream out;
  out << header_line(hash, seeds);
  out << "config_hash,backbone,method,variant,ratio,lambda,unlabeled_fraction,n_ok,n_failed,"
         "status,acc_mean,acc_std,dp_mean,dp_std,opp_mean,opp_std,probe_mean\n";
  for (const Aggregate& a : rows) {
    out << hex(hash) << ',' << a.backbone << ',' << a.method << ',' << a.variant << ','
        << exact(a.ratio) << ',' << exact(a.lambda) << ',' << exact(a.unlabeled_fraction)
        << ',' << a.n_ok << ',' << a.n_failed << ',' << (a.failed() ? "FAILED" : "ok") << ','
        << exact(a.acc_mean) << ',' << exact(a.acc_std) << ',' << exact(a.dp_mean) << ','
        << exact(a.dp_std) << ',' << exact(a.opp_mean) << ',' << exact(a.opp_std) << ','
        << (a.probe_mean ? exact(*a.probe_mean) : "") << '\n';
  }
  return out.str();
}

std::string results_table(const std::vector<Aggregate>& rows, const std::vector<double>& ratios,
                          std::uint64_t hash, const std::vector<std::uint64_t>& seeds) {
  std::vector<std::string> backbones, methods;
  auto add_unique = [](std::vector<std::string>& v, const std::string& s) {
    if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
  };
  for (const Aggregate& a : rows) {
    add_unique(backbones, a.backbone);
    add_unique(methods, a.method + (a.variant.empty() ? "" : " [" + a.variant + "]"));
  }
  auto find = [&](const std::string& b, const std::string& label, double ratio) {
    for (const Aggregate& a : rows) {
      const std::string l = a.method + (a.variant.empty() ? "" : " [" + a.variant + "]");
      if (a.backbone == b && l == label && a.ratio == ratio) return &a;
    }
    return static_cast<const Aggregate*>(nullptr);
  };
  std::size_t width = 6;
  for (const auto& m : methods) width = std::max(width, m.size());

  std::ostringstream out;
  out << header_line(hash, seeds);
  for (const std::string& b : backbones) {
    out << "\nBackbone: " << b << "\n";
    out << std::string(width, ' ');
    for (double r : ratios) out << " | " << format("ratio %-18g", r);
    out << "\n" << std::string(width - 6, ' ') << "Method";
    for (std::size_t k = 0; k < ratios.size(); ++k) out << " | Acc    DP     OPP   ";
    out << "\n";
    for (const std::string& m : methods) {
      bool any = false;
      for (double r : ratios) any = any || find(b, m, r) != nullptr;
      if (!any) continue;
      out << m << std::string(width - m.size(), ' ');
      for (double r : ratios) {
        const Aggregate* a = find(b, m, r);
        if (!a) {
          out << " | " << std::string(20, ' ');
        } else if (a->failed()) {
          out << " | FAILED              ";
        } else {
          out << " | " << format("%.4f", a->acc_mean) << ' ' << format("%.4f", a->dp_mean)
              << ' ' << format("%.4f", a->opp_mean);
        }
      }
      out << "\n";
    }
  }
  return out.str();
}

std::string sweep_csv(const std::vector<Aggregate>& rows, const std::string& axis,
                      std::uint64_t hash, const std::vector<std::uint64_t>& seeds) {
  std::ostringstream out;
  out << header_line(hash, seeds);
  out << "config_hash,backbone,method," << axis
      << ",n_ok,n_failed,acc_mean,acc_std,dp_mean,dp_std,opp_mean,opp_std\n";
  for (const Aggregate& a : rows) {
    const double value = axis == "lambda" ? a.lambda : a.unlabeled_fraction;
    out << hex(hash) << ',' << a.backbone << ',' << a.method << ',' << exact(value) << ','
        << a.n_ok << ',' << a.n_failed << ',' << exact(a.acc_mean) << ',' << exact(a.acc_std)
        << ',' << exact(a.dp_mean) << ',' << exact(a.dp_std) << ',' << exact(a.opp_mean) << ','
        << exact(a.opp_std) << '\n';
  }
  return out.str();
}

// ---- cell lists ----

namespace {

Cell make_cell(const ExperimentConfig& c, const std::string& backbone, training::Method method,
               double ratio, std::uint64_t seed) {
  Cell cell;
  cell.spec = c.spec;
  cell.spec.backbone = models::parse_backbone(backbone);
  cell.spec.method = method;
  cell.spec.label_ratio = ratio;
  cell.spec.seed = seed;
  return cell;
}

}  // namespace

std::vector<Cell> experiment_cells(const ExperimentConfig& c) {
  std::vector<Cell> cells;
  for (const auto& b : c.backbones)
    for (const auto& m : c.methods)
      for (double r : c.label_ratios)
        for (std::uint64_t s : c.seeds)
          cells.push_back(make_cell(c, b, training::parse_method(m), r, s));
  return cells;
}

std::vector<Cell> ablation_cells(const ExperimentConfig& c) {
  struct Variant {
    const char* name;
    bool objectives::ObjectiveConfig::*flag;
  };
  static const Variant variants[] = {
      {"full", nullptr},
      {"no_zhat_decoder", &objectives::ObjectiveConfig::use_zhat_in_decoder},
      {"no_ztilde_decoder", &objectives::ObjectiveConfig::use_ztilde_in_decoder},
      {"no_H_zhat", &objectives::ObjectiveConfig::use_H_zhat},
      {"no_H_ztilde", &objectives::ObjectiveConfig::use_H_ztilde}};
  std::vector<Cell> cells;
  for (const auto& b : c.backbones)
    for (const Variant& v : variants)
      for (std::uint64_t s : c.seeds) {
        Cell cell = make_cell(c, b, training::Method::kSemiFairVAE, c.study_ratio, s);
        if (v.flag) cell.spec.objective.*(v.flag) = false;
        cell.variant = v.name;
        cells.push_back(cell);
      }
  return cells;
}

SweepAxis parse_axis(const std::string& name) {
  if (name == "lambda") return SweepAxis::kLambda;
  if (name == "unlabeled_fraction") return SweepAxis::kUnlabeledFraction;
  throw data::ConfigError("unknown sweep axis \"" + name +
                          "\" (expected lambda or unlabeled_fraction)");
}

std::vector<Cell> sweep_cells(const ExperimentConfig& c, SweepAxis axis) {
  const std::vector<double>& grid =
      axis == SweepAxis::kLambda ? c.lambda_grid : c.unlabeled_fractions;
  if (grid.empty()) throw data::ConfigError("sweep grid is empty");
  std::vector<Cell> cells;
  for (const auto& b : c.backbones)
    for (double v : grid)
      for (std::uint64_t s : c.seeds) {
        Cell cell = make_cell(c, b, c.spec.method, c.study_ratio, s);
        if (axis == SweepAxis::kLambda) {
          cell.spec.lambda = v;
          cell.variant = "lambda=" + format("%g", v);
        } else {
          cell.unlabeled_fraction = v;
          cell.variant = "unlabeled=" + format("%g", v);
        }
        cells.push_back(cell);
      }
  return cells;
}

// ---- drivers ----

namespace {

RunSummary drive(const ExperimentConfig& c, const std::vector<Cell>& cells,
                 const std::string& stem,
                 const std::function<void(const CellResult&)>& progress) {
  RunSummary summary;
  summary.hash = config_hash(c);
  summary.out_dir = output_directory(c);
  fs::create_directories(summary.out_dir);
  const Dataset ds = load_dataset(c);
  RunOptions options;
  options.val_frac = c.val_frac;
  options.probe = c.probe;
  options.config_hash = summary.hash;
  if (c.save_checkpoints) {
    options.checkpoint_dir = summary.out_dir / "checkpoints";
    fs::create_directories(*options.checkpoint_dir);
  }
  if (c.write_logs) options.log_dir = summary.out_dir / "logs";
  summary.results = run_cells(ds, cells, options, c.workers, progress);
  summary.rows = aggregate(summary.results);
  write_file(summary.out_dir / (stem + "_raw.csv"), raw_csv(summary.results, summary.hash, c.seeds));
  write_file(summary.out_dir / (stem + ".csv"), aggregate_csv(summary.rows, summary.hash, c.seeds));
  write_file(summary.out_dir / "config.json", json(c).dump(2) + "\n");
  return summary;
}

}  // namespace

RunSummary run_experiments(const ExperimentConfig& c,
                           const std::function<void(const CellResult&)>& progress) {
  RunSummary s = drive(c, experiment_cells(c), "results", progress);
  write_file(s.out_dir / "results_table.txt", results_table(s.rows, c.label_ratios, s.hash, c.seeds));
  return s;
}

RunSummary run_ablation(const ExperimentConfig& c,
                        const std::function<void(const CellResult&)>& progress) {
  RunSummary s = drive(c, ablation_cells(c), "ablation", progress);
  write_file(s.out_dir / "ablation_table.txt",
             results_table(s.rows, {c.study_ratio}, s.hash, c.seeds));
  return s;
}

RunSummary run_sweep(const ExperimentConfig& c, SweepAxis axis,
                     const std::function<void(const CellResult&)>& progress) {
  const std::string name = axis == SweepAxis::kLambda ? "lambda" : "unlabeled_fraction";
  RunSummary s = drive(c, sweep_cells(c, axis), "sweep_" + name, progress);
  write_file(s.out_dir / ("sweep_" + name + "_plot.csv"), sweep_csv(s.rows, name, s.hash, c.seeds));
  return s;
}

// ---- checkpoints ----

void export_embeddings(models::ModelBundle& bundle, const std::vector<data::Sample>& samples,
                       const fs::path& out_path) {
  const data::Batch batch = data::gather_all(samples);
  const Tensor reps = models::bias_free_representation(bundle, batch.x);
  const std::vector<int> pred = metrics::argmax_rows(models::predict_test(bundle, batch.x));
  std::ostringstream out;
  for (std::size_t j = 0; j < reps.cols(); ++j) out << "r_f_" << j << ',';
  out << "z,y,y_pred\n";
  for (std::size_t i = 0; i < reps.rows(); ++i) {
    for (std::size_t j = 0; j < reps.cols(); ++j) out << exact(reps.at(i, j)) << ',';
    out << batch.z[i] << ',' << batch.y[i] << ',' << pred[i] << '\n';
  }
  write_file(out_path, out.str());
}

data::Stats checkpoint_stats(const models::CheckpointHeader& header) {
  if (!header.metadata.contains("stats")) {
    throw std::runtime_error("checkpoint carries no preprocessing state");
  }
  return header.metadata.at("stats").get<data::Stats>();
}

metrics::FairnessReport evaluate_checkpoint(const fs::path& checkpoint, const fs::path& test_file,
                                            bool probe, std::uint64_t probe_seed) {
  auto [bundle, header] = models::load_checkpoint(checkpoint);
  const data::Stats stats = checkpoint_stats(header);
  require_file(test_file.string(), "test");
  const auto samples = data::preprocess(data::load_adult_file(test_file), stats).first;
  const data::Batch test = data::gather_all(samples);
  metrics::FairnessReport r =
      metrics::evaluate(models::predict_test(bundle, test.x), test.y, test.z);
  if (probe) {
    r.probe_accuracy =
        metrics::leakage_probe(models::bias_free_representation(bundle, test.x), test.z, probe_seed);
  }
  return r;
}

}  // namespace semifair::experiment
