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

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "semifair/data.hpp"
#include "semifair/models.hpp"

namespace semifair::objectives {

/// Per-batch loss terms, each a batch mean. Terms that a given objective does
/// not evaluate stay empty.
struct LossBreakdown {
  std::optional<double> L_P, L_A, L_O, L_T, L_R, KL, H_zhat, H_ztilde, log_prior_z;
  /// Mean row mass of the z_hat / z_tilde decoder slots (0 when switched off).
  std::optional<double> zhat_slot_mass, ztilde_slot_mass;
  /// Objective value with the adversarial term entering as -lambda * L_A.
  double total = 0.0;
  std::size_t zero_norm_rows = 0;
};

nlohmann::json to_json_row(const LossBreakdown& b);

struct TermWeights {
  double P = 1.0, O = 1.0, T = 1.0, R = 1.0, KL = 1.0;
};

struct ObjectiveConfig {
  double lambda = 0.4;
  bool use_zhat_in_decoder = true;
  bool use_ztilde_in_decoder = true;
  bool use_H_zhat = true;
  bool use_H_ztilde = true;
  /// Flip the sign of the H(z_hat) term (rewards confident attribute
  /// predictions instead of uncertain ones).
  bool negate_H_zhat = false;
  TermWeights weights;
};

void to_json(nlohmann::json& j, const ObjectiveConfig& c);
void from_json(const nlohmann::json& j, ObjectiveConfig& c);

// ---- individual terms -----------------------------------------------------

/// Integer class labels -> n x k one-hot tensor.
Tensor one_hot(const std::vector<int>& labels, std::size_t classes);
/// n x k tensor with every entry 1/k.
Tensor uniform_rows(std::size_t n, std::size_t classes);

/// Mean over rows of -sum_i t_i log p_i with clipped logs.
ad::Var cross_entropy(ad::Var target, ad::Var probs);
ad::Var attribute_prediction_loss(ad::Var z, ad::Var z_hat);
ad::Var adversarial_loss(ad::Var z, ad::Var z_tilde);
ad::Var task_loss(ad::Var y, ad::Var y_hat);
/// Mean absolute cosine similarity between matching rows.
ad::Var orthogonality_loss(ad::Var r_f, ad::Var r_b, std::size_t* zero_rows = nullptr);
/// Mean over rows of (1/d) sum (x_hat - x)^2.
ad::Var reconstruction_loss(ad::Var x, ad::Var x_hat);
/// Mean over rows of 0.5 sum (mu^2 + sigma^2 - log sigma^2 - 1).
ad::Var kl_to_standard_normal(ad::Var mu, ad::Var sigma);
/// Mean over rows of -sum p log p (natural log, clipped).
ad::Var entropy(ad::Var p);

// Per-row (n x 1) versions used by the marginalized unlabeled objective.
ad::Var reconstruction_rows(ad::Var x, ad::Var x_hat);
ad::Var kl_rows(ad::Var mu, ad::Var sigma);
ad::Var entropy_rows(ad::Var p);

/// -log p(z) under the uniform binary attribute prior.
double log_prior_term();

/// L_R + KL - log p(z) for one choice of decoder slots.
ad::Var elbo_term(models::Session& s, ad::Var x, ad::Var z_slot, ad::Var z_tilde_slot,
                  const Tensor& epsilon, const models::DecoderSlots& slots = {});

// ---- compositions -----------------------------------------------------------

/// `value` is the quantity to differentiate. Its gradient equals that of the
/// objective except at the discriminator, which descends on +L_A while the
/// reversal layer hands -lambda * dL_A to the bias-free encoder.
struct Objective {
  ad::Var value;
  LossBreakdown breakdown;
};

Objective labeled_loss(models::Session& s, const data::Batch& batch,
                       const ObjectiveConfig& config, const Tensor& epsilon,
                       bool training = true);
Objective unlabeled_loss(models::Session& s, const data::Batch& batch,
                         const ObjectiveConfig& config, const Tensor& epsilon,
                         bool training = true);

struct JointObjective {
  ad::Var value;
  std::optional<LossBreakdown> labeled;
  std::optional<LossBreakdown> unlabeled;
  double total = 0.0;
};

/// labeled_loss + unlabeled_loss; either batch may be empty but not both.
JointObjective joint_loss(models::Session& s, const data::Batch& labeled,
                          const data::Batch& unlabeled, const ObjectiveConfig& config,
                          const Tensor& eps_labeled, const Tensor& eps_unlabeled,
                          bool training = true);

}  // namespace semifair::objectives
