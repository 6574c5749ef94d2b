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

#include "semifair/objectives.hpp"

#include <cmath>
#include <numbers>

namespace semifair::objectives {

using ad::Var;

nlohmann::json to_json_row(const LossBreakdown& b) {
  nlohmann::json j;
  auto put = [&](const char* key, const std::optional<double>& v) {
    j[key] = v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  put("L_P", b.L_P);
  put("L_A", b.L_A);
  put("L_O", b.L_O);
  put("L_T", b.L_T);
  put("L_R", b.L_R);
  put("KL", b.KL);
  put("H_zhat", b.H_zhat);
  put("H_ztilde", b.H_ztilde);
  put("log_prior_z", b.log_prior_z);
  put("zhat_slot_mass", b.zhat_slot_mass);
  put("ztilde_slot_mass", b.ztilde_slot_mass);
  j["total"] = b.total;
  j["zero_norm_rows"] = b.zero_norm_rows;
  return j;
}

void to_json(nlohmann::json& j, const ObjectiveConfig& c) {
  j = {{"lambda", c.lambda},
       {"use_zhat_in_decoder", c.use_zhat_in_decoder},
       {"use_ztilde_in_decoder", c.use_ztilde_in_decoder},
       {"use_H_zhat", c.use_H_zhat},
       {"use_H_ztilde", c.use_H_ztilde},
       {"negate_H_zhat", c.negate_H_zhat},
       {"weights",
        {{"P", c.weights.P},
         {"O", c.weights.O},
         {"T", c.weights.T},
         {"R", c.weights.R},
         {"KL", c.weights.KL}}}};
}

void from_json(const nlohmann::json& j, ObjectiveConfig& c) {
  c = ObjectiveConfig{};
  c.lambda = j.value("lambda", c.lambda);
  c.use_zhat_in_decoder = j.value("use_zhat_in_decoder", c.use_zhat_in_decoder);
  c.use_ztilde_in_decoder = j.value("use_ztilde_in_decoder", c.use_ztilde_in_decoder);
  c.use_H_zhat = j.value("use_H_zhat", c.use_H_zhat);
  c.use_H_ztilde = j.value("use_H_ztilde", c.use_H_ztilde);
  c.negate_H_zhat = j.value("negate_H_zhat", c.negate_H_zhat);
  if (j.contains("weights")) {
    const auto& w = j.at("weights");
    c.weights.P = w.value("P", 1.0);
    c.weights.O = w.value("O", 1.0);
    c.weights.T = w.value("T", 1.0);
    c.weights.R = w.value("R", 1.0);
    c.weights.KL = w.value("KL", 1.0);
  }
}

// ---- terms ----------------------------------------------------------------

Tensor one_hot(const std::vector<int>& labels, std::size_t classes) {
  Tensor t({labels.size(), classes});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      throw std::invalid_argument("one_hot: label " + std::to_string(labels[i]) +
                                  " outside [0, " + std::to_string(classes) + ")");
    }
    t.at(i, static_cast<std::size_t>(labels[i])) = 1.0;
  }
  return t;
}

Tensor uniform_rows(std::size_t n, std::size_t classes) {
  return Tensor({n, classes}, 1.0 / static_cast<double>(classes));
}

Var cross_entropy(Var target, Var probs) {
  return ad::scale(ad::mean(ad::row_sum(ad::mul(target, ad::log_clipped(probs)))), -1.0);
}

Var attribute_prediction_loss(Var z, Var z_hat) { return cross_entropy(z, z_hat); }
Var adversarial_loss(Var z, Var z_tilde) { return cross_entropy(z, z_tilde); }
Var task_loss(Var y, Var y_hat) { return cross_entropy(y, y_hat); }

Var orthogonality_loss(Var r_f, Var r_b, std::size_t* zero_rows) {
  return ad::mean(ad::abs_cosine_rows(r_f, r_b, zero_rows));
}

Var reconstruction_rows(Var x, Var x_hat) {
  if (x.shape() != x_hat.shape()) {
    throw DimensionError("reconstruction: x " + shape_to_string(x.shape()) +
                         " vs x_hat " + shape_to_string(x_hat.shape()));
  }
  return ad::scale(ad::row_sum(ad::square(ad::sub(x_hat, x))),
                   1.0 / static_cast<double>(x.cols()));
}

Var reconstruction_loss(Var x, Var x_hat) { return ad::mean(reconstruction_rows(x, x_hat)); }

Var kl_rows(Var mu, Var sigma) {
  for (double v : sigma.value().data()) {
    if (!(v > 0.0)) throw DomainError("KL: sigma must be strictly positive");
  }
  // 0.5 (mu^2 + sigma^2 - 2 log sigma - 1)
  Var inner = ad::sub(ad::add(ad::square(mu), ad::square(sigma)),
                      ad::scale(ad::log(sigma), 2.0));
  return ad::scale(ad::add_scalar(ad::row_sum(inner), -static_cast<double>(mu.cols())),
                   0.5);
}

Var kl_to_standard_normal(Var mu, Var sigma) { return ad::mean(kl_rows(mu, sigma)); }

Var entropy_rows(Var p) {
  return ad::scale(ad::row_sum(ad::mul(p, ad::log_clipped(p))), -1.0);
}

Var entropy(Var p) { return ad::mean(entropy_rows(p)); }

double log_prior_term() { return std::numbers::ln2; }

Var elbo_term(models::Session& s, Var x, Var z_slot, Var z_tilde_slot,
              const Tensor& epsilon, const models::DecoderSlots& slots) {
  auto out = models::vae_forward(s, x, z_tilde_slot, z_slot, epsilon, slots);
  return ad::add_scalar(ad::add(reconstruction_loss(x, out.x_hat),
                                kl_to_standard_normal(out.mu, out.sigma)),
                        log_prior_term());
}

// ---- compositions -----------------------------------------------------------

namespace {

models::DecoderSlots slots_of(const ObjectiveConfig& c) {
  return {c.use_ztilde_in_decoder, c.use_zhat_in_decoder};
}

void require_lambda_match(models::Session& s, const ObjectiveConfig& c) {
  if (s.bundle().lambda() != c.lambda) {
    throw std::invalid_argument("objective lambda " + std::to_string(c.lambda) +
                                " differs from the bundle's reversal strength " +
                                std::to_string(s.bundle().lambda()));
  }
}

double weighted_sum_value(const Var& v, double w) { return w * v.value().item(); }

}  // namespace

Objective labeled_loss(models::Session& s, const data::Batch& batch,
                       const ObjectiveConfig& config, const Tensor& epsilon,
                       bool training) {
  if (batch.empty()) throw std::invalid_argument("labeled_loss: empty batch");
  if (!batch.fully_labeled()) {
    throw std::invalid_argument("labeled_loss: batch contains samples without attribute");
  }
  require_lambda_match(s, config);
  const TermWeights& w = config.weights;
  const std::size_t n = batch.size();

  Var x = s.input(batch.x);
  Var z = s.input(one_hot(batch.z, models::kAttributeClasses));
  Var y = s.input(one_hot(batch.y, models::kTaskClasses));

  LossBreakdown b;
  auto enc = models::encode(s, x, training);
  auto heads = models::predict_heads(s, enc);
  Var l_p = attribute_prediction_loss(z, heads.z_hat);
  Var l_a = adversarial_loss(z, heads.z_tilde);
  Var l_o = orthogonality_loss(enc.r_f, enc.r_b, &b.zero_norm_rows);
  Var l_t = task_loss(y, heads.y_hat);

  // Real attribute in the z_hat slot, uniform soft label in the z_tilde slot.
  const models::DecoderSlots slots = slots_of(config);
  Var z_tilde_slot = s.input(uniform_rows(n, models::kAttributeClasses));
  auto vae = models::vae_forward(s, x, z_tilde_slot, z, epsilon, slots);
  Var l_r = reconstruction_loss(x, vae.x_hat);
  Var kl = kl_to_standard_normal(vae.mu, vae.sigma);

  Var value = ad::add(ad::scale(l_p, w.P), l_a);
  value = ad::add(value, ad::scale(l_o, w.O));
  value = ad::add(value, ad::scale(l_t, w.T));
  value = ad::add(value, ad::scale(l_r, w.R));
  value = ad::add(value, ad::scale(kl, w.KL));
  value = ad::add_scalar(value, log_prior_term());

  b.L_P = l_p.value().item();
  b.L_A = l_a.value().item();
  b.L_O = l_o.value().item();
  b.L_T = l_t.value().item();
  b.L_R = l_r.value().item();
  b.KL = kl.value().item();
  b.log_prior_z = log_prior_term();
  b.zhat_slot_mass = slots.use_z_hat ? 1.0 : 0.0;
  b.ztilde_slot_mass = slots.use_z_tilde ? 1.0 : 0.0;
  b.total = weighted_sum_value(l_p, w.P) - config.lambda * *b.L_A +
            weighted_sum_value(l_o, w.O) + weighted_sum_value(l_t, w.T) +
            weighted_sum_value(l_r, w.R) + weighted_sum_value(kl, w.KL) +
            *b.log_prior_z;
  return {value, b};
}

Objective unlabeled_loss(models::Session& s, const data::Batch& batch,
                         const ObjectiveConfig& config, const Tensor& epsilon,
                         bool training) {
  if (batch.empty()) throw std::invalid_argument("unlabeled_loss: empty batch");
  if (!batch.fully_unlabeled()) {
    throw std::invalid_argument("unlabeled_loss: batch contains observed attributes");
  }
  require_lambda_match(s, config);
  const TermWeights& w = config.weights;
  const std::size_t n = batch.size();

  Var x = s.input(batch.x);
  Var y = s.input(one_hot(batch.y, models::kTaskClasses));

  LossBreakdown b;
  auto enc = models::encode(s, x, training);
  Var z_hat = models::attribute_head(s, enc.r_b);
  Var y_hat = models::task_head(s, enc.r);
  // z_tilde enters the entropy term through a frozen, non-reversed copy of the
  // discriminator (the encoder is pushed toward uncertain discriminator
  // outputs) and the decoder as a constant.
  Var z_tilde = models::discriminator_head_frozen(s, enc.r_f);
  Var z_tilde_slot = ad::stop_gradient(z_tilde);

  Var l_o = orthogonality_loss(enc.r_f, enc.r_b, &b.zero_norm_rows);
  Var l_t = task_loss(y, y_hat);

  const models::DecoderSlots slots = slots_of(config);
  auto [mu, sigma] = models::vae_encode(s, x);
  Var h = ad::reparameterize(mu, sigma, epsilon);
  Var kl = kl_rows(mu, sigma);

  // sum_z q(z|x) L(x, z) over both attribute values, q = z_hat.
  Var recon_marginal;
  for (std::size_t c = 0; c < models::kAttributeClasses; ++c) {
    Var slot = s.input(one_hot(std::vector<int>(n, static_cast<int>(c)),
                               models::kAttributeClasses));
    Var x_hat = models::vae_decode(s, z_tilde_slot, slot, h, slots);
    Var term = ad::mul(ad::slice_col(z_hat, c), reconstruction_rows(x, x_hat));
    recon_marginal = c == 0 ? term : ad::add(recon_marginal, term);
  }
  Var l_r = ad::mean(recon_marginal);
  Var kl_mean = ad::mean(kl);
  Var h_zhat = entropy(z_hat);
  Var h_ztilde = entropy(z_tilde);

  Var value = ad::add(ad::scale(l_o, w.O), ad::scale(l_t, w.T));
  value = ad::add(value, ad::scale(l_r, w.R));
  value = ad::add(value, ad::scale(kl_mean, w.KL));
  value = ad::add_scalar(value, log_prior_term());
  const double zhat_sign = config.negate_H_zhat ? 1.0 : -1.0;
  if (config.use_H_zhat) value = ad::add(value, ad::scale(h_zhat, zhat_sign));
  if (config.use_H_ztilde) value = ad::sub(value, h_ztilde);

  b.L_O = l_o.value().item();
  b.L_T = l_t.value().item();
  b.L_R = l_r.value().item();
  b.KL = kl_mean.value().item();
  b.log_prior_z = log_prior_term();
  b.H_zhat = config.use_H_zhat ? h_zhat.value().item() : 0.0;
  b.H_ztilde = config.use_H_ztilde ? h_ztilde.value().item() : 0.0;
  b.zhat_slot_mass = slots.use_z_hat ? 1.0 : 0.0;
  b.ztilde_slot_mass = slots.use_z_tilde ? 1.0 : 0.0;
  b.total = weighted_sum_value(l_o, w.O) + weighted_sum_value(l_t, w.T) +
            weighted_sum_value(l_r, w.R) + weighted_sum_value(kl_mean, w.KL) +
            *b.log_prior_z + zhat_sign * *b.H_zhat - *b.H_ztilde;
  return {value, b};
}

JointObjective joint_loss(models::Session& s, const data::Batch& labeled,
                          const data::Batch& unlabeled, const ObjectiveConfig& config,
                          const Tensor& eps_labeled, const Tensor& eps_unlabeled,
                          bool training) {
  if (labeled.empty() && unlabeled.empty()) {
    throw std::invalid_argument("joint_loss: both batches are empty");
  }
  JointObjective out;
  if (!labeled.empty()) {
    auto l = labeled_loss(s, labeled, config, eps_labeled, training);
    out.value = l.value;
    out.labeled = l.breakdown;
    out.total += l.breakdown.total;
  }
  if (!unlabeled.empty()) {
    auto u = unlabeled_loss(s, unlabeled, config, eps_unlabeled, training);
    out.value = out.value.valid() ? ad::add(out.value, u.value) : u.value;
    out.unlabeled = u.breakdown;
    out.total += u.breakdown.total;
  }
  return out;
}

}  // namespace semifair::objectives
