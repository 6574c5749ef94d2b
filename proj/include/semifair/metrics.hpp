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

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

#include "semifair/tensor.hpp"

namespace semifair::metrics {

/// A metric is undefined on the given input (e.g. an empty group).
class MetricError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

double accuracy(const std::vector<int>& y_true, const std::vector<int>& y_pred);

/// |P(y_pred=1 | z=0) - P(y_pred=1 | z=1)|.
double demographic_parity_gap(const std::vector<int>& y_pred, const std::vector<int>& z);

/// |TPR(z=0) - TPR(z=1)|.
double equal_opportunity_gap(const std::vector<int>& y_true, const std::vector<int>& y_pred,
                             const std::vector<int>& z);

/// Rank-sum AUC; tied scores count one half.
double auc(const std::vector<int>& y_true, const std::vector<double>& scores);

/// Argmax over the columns of an n x k probability matrix.
std::vector<int> argmax_rows(const Tensor& probs);

struct ProbeOptions {
  double train_frac = 0.7;
  std::size_t steps = 300;
  double lr = 0.05;
  double l2 = 1e-3;
};

/// Held-out accuracy of a fresh affine + softmax classifier predicting z from
/// `representations` (columns standardized on the probe's training part).
double leakage_probe(const Tensor& representations, const std::vector<int>& z,
                     std::uint64_t seed, const ProbeOptions& options = {});

struct FairnessReport {
  double accuracy = 0.0;
  double auc = 0.0;
  double dp_gap = 0.0;
  double opp_gap = 0.0;
  std::optional<double> probe_accuracy;
  std::array<double, 2> positive_rate{};
  std::array<double, 2> tpr{};
  std::array<std::size_t, 2> n_per_group{};
};

/// Metrics of binary predictions `probs` (n x 2) against labels and groups.
FairnessReport evaluate(const Tensor& probs, const std::vector<int>& y_true,
                        const std::vector<int>& z);

void to_json(nlohmann::json& j, const FairnessReport& r);

}  // namespace semifair::metrics
