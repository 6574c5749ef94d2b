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

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "semifair/data.hpp"
#include "semifair/models.hpp"
#include "semifair/objectives.hpp"
#include "semifair/optim.hpp"

namespace semifair::training {

enum class Method { kPlain, kAL, kALST, kDAL, kDALST, kSemiFairVAE };

std::string to_string(Method m);
Method parse_method(std::string_view name);
bool is_self_training(Method m);
/// AL+ST -> AL, DAL+ST -> DAL, everything else unchanged.
Method base_method(Method m);

struct MethodSpec {
  models::BackboneKind backbone = models::BackboneKind::kDNN;
  Method method = Method::kSemiFairVAE;
  double lambda = 0.4;
  double label_ratio = 0.2;
  std::uint64_t seed = 0;
  /// Pseudo-label confidence threshold for the self-training variants.
  double tau = 0.9;
  std::size_t epochs = 50;
  std::size_t batch_size = 128;
  double lr = 0.01;
  double dropout = 0.2;
  std::size_t hidden_dim = 256;
  std::size_t latent_dim = 32;
  std::size_t head_hidden = 0;
  /// Ablation switches and term weights; its lambda is overwritten by `lambda`.
  objectives::ObjectiveConfig objective;
  /// Keep the epoch with the best validation accuracy - DP gap.
  bool select_on_validation = true;
};

void to_json(nlohmann::json& j, const MethodSpec& s);
void from_json(const nlohmann::json& j, MethodSpec& s);

models::ModelConfig model_config(const MethodSpec& spec, std::size_t input_dim);

struct EpochRecord {
  std::size_t epoch = 0;
  std::size_t steps = 0;
  double mean_total = 0.0;
  /// Batch-mean loss terms averaged over the epoch, keyed "labeled.L_P" etc.
  std::map<std::string, double> mean_terms;
  std::optional<double> val_accuracy, val_dp, val_criterion;
  double seconds = 0.0;
};

struct TrainReport {
  std::uint64_t seed = 0;
  std::string method;
  std::vector<EpochRecord> epochs;
  /// 1-based; 0 when nothing was selected (no validation data).
  std::size_t selected_epoch = 0;
  std::optional<double> selected_criterion;
  /// Reported objective value of every optimization step, in order.
  std::vector<double> step_totals;
  std::size_t pseudo_labeled = 0;
  std::optional<double> pseudo_label_accuracy;
  std::optional<double> attribute_accuracy_round1;
};

void to_json(nlohmann::json& j, const EpochRecord& r);
void to_json(nlohmann::json& j, const TrainReport& r);

struct TrainOptions {
  /// Receives one JSON object per optimization step when set.
  std::ostream* step_log = nullptr;
};

/// Training view of a split. `all` lists labeled and unlabeled samples in
/// their original order and feeds the attribute-free baseline.
struct TrainData {
  std::vector<data::Sample> labeled;
  std::vector<data::Sample> unlabeled;
  std::vector<data::Sample> validation;
  std::vector<data::Sample> all;
};

TrainData train_data(const data::DatasetSplit& split);

struct TrainResult {
  models::ModelBundle bundle;
  TrainReport report;
};

/// Trains `spec.method`; self-training variants go through self_train.
TrainResult train(const MethodSpec& spec, const data::DatasetSplit& split,
                  const TrainOptions& options = {});

/// Trains a non-self-training method on prepared data.
TrainResult train_on(const MethodSpec& spec, const TrainData& data,
                     const TrainOptions& options = {});

/// Two rounds: fit the attribute predictor on the labeled part, adopt
/// unlabeled samples whose top attribute probability reaches tau, then train
/// the base method on the enlarged labeled set.
TrainResult self_train(const MethodSpec& spec, const data::DatasetSplit& split,
                       const TrainOptions& options = {});

/// Validation criterion used for model selection.
double selection_criterion(double accuracy, double dp_gap);

}  // namespace semifair::training
