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
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "semifair/autodiff.hpp"
#include "semifair/random.hpp"

namespace semifair::models {

enum class BackboneKind { kLR, kDNN, kFM };

std::string to_string(BackboneKind kind);
BackboneKind parse_backbone(std::string_view name);

/// Architecture hyperparameters. Everything needed to rebuild a bundle from
/// a checkpoint lives here.
struct ModelConfig {
  BackboneKind backbone = BackboneKind::kDNN;
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 256;
  std::size_t latent_dim = 32;
  std::size_t fm_factors = 16;
  std::size_t fm_linear_dim = 16;
  /// Hidden width for the attribute predictor and discriminator; 0 = affine.
  std::size_t head_hidden = 0;
  double dropout = 0.2;
  double lambda = 0.4;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

inline constexpr std::size_t kAttributeClasses = 2;
inline constexpr std::size_t kTaskClasses = 2;

/// All parameters of both encoders, the three heads and the VAE pair.
///
/// Names are prefixed by component: "bias_free.", "bias_aware.", "attr.",
/// "disc.", "task.", "vae.", "dec.".
class ModelBundle {
 public:
  ModelBundle() = default;
  ModelBundle(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  double lambda() const { return config_.lambda; }
  void set_lambda(double lambda);

  Parameter& param(const std::string& name);
  const Parameter& param(const std::string& name) const;
  bool has_param(const std::string& name) const { return params_.count(name) != 0; }
  std::map<std::string, Parameter>& params() { return params_; }
  const std::map<std::string, Parameter>& params() const { return params_; }

  /// Parameters whose name starts with `prefix`.
  std::vector<Parameter*> params_with_prefix(std::string_view prefix);
  void set_trainable(std::string_view prefix, bool trainable);
  void zero_grad();
  /// Zeroes the values of every trainable parameter under `prefix`.
  void zero_values(std::string_view prefix);

 private:
  void add(std::string name, Tensor value, bool trainable = true);
  void init_backbone(const std::string& prefix, Rng& rng);
  void init_head(const std::string& prefix, std::size_t in, std::size_t out,
                 std::size_t hidden, Rng& rng);

  ModelConfig config_;
  std::map<std::string, Parameter> params_;
};

/// One forward/backward pass over a bundle: owns the graph, binds each
/// parameter at most once, and supplies dropout masks.
class Session {
 public:
  Session(ModelBundle& bundle, Rng* rng = nullptr);

  ad::Graph& graph() { return graph_; }
  ModelBundle& bundle() { return bundle_; }
  Rng* rng() { return rng_; }

  ad::Var param(const std::string& name);
  /// Parameter value as a constant leaf (no gradient path).
  ad::Var frozen(const std::string& name);
  ad::Var input(const Tensor& x) { return graph_.constant(x); }
  void backward(ad::Var root) { graph_.backward(root); }

 private:
  ModelBundle& bundle_;
  ad::Graph graph_;
  Rng* rng_;
  std::map<std::string, ad::Var> bound_;
};

/// Second-order factorization-machine term 0.5 [(xV)^2 - (x^2)(V^2)], one
/// column per factor. Its row sum equals sum_{i<j} <v_i, v_j> x_i x_j.
ad::Var fm_interaction(ad::Var x, ad::Var v);

/// Hidden representation (n x hidden_dim) of backbone `prefix`
/// ("bias_free" or "bias_aware"), without dropout.
ad::Var backbone_forward(Session& s, const std::string& prefix, ad::Var x);

struct Encoded {
  ad::Var r_f;
  ad::Var r_b;
  ad::Var r;
};

/// r_f, r_b and r = r_f + r_b. Dropout is applied to r_f and r_b in training
/// mode, with masks drawn from the session rng.
Encoded encode(Session& s, ad::Var x, bool training);
/// Bias-free representation only (single-encoder baselines and test time).
ad::Var encode_bias_free(Session& s, ad::Var x, bool training);

struct HeadOutputs {
  ad::Var z_hat;    // attribute predictor on r_b
  ad::Var z_tilde;  // discriminator on gradient_reversal(r_f, lambda)
  ad::Var y_hat;    // task predictor on r
};

ad::Var attribute_head(Session& s, ad::Var r_b);
/// Discriminator applied behind a gradient reversal layer.
ad::Var discriminator_head(Session& s, ad::Var r_f);
/// Discriminator with its weights frozen and no reversal, so an objective on
/// the output trains only the encoder that produced `r_f`.
ad::Var discriminator_head_frozen(Session& s, ad::Var r_f);
ad::Var task_logits(Session& s, ad::Var r);
ad::Var task_head(Session& s, ad::Var r);

HeadOutputs predict_heads(Session& s, const Encoded& enc);

/// Test-time prediction: task head on r_f alone, eval mode.
Tensor predict_test(ModelBundle& bundle, const Tensor& x);
/// Eval-mode bias-free representation.
Tensor bias_free_representation(ModelBundle& bundle, const Tensor& x);

struct DecoderSlots {
  bool use_z_tilde = true;
  bool use_z_hat = true;
};

struct VaeOutputs {
  ad::Var x_hat;
  ad::Var mu;
  ad::Var sigma;
};

/// mu = tanh(x W + w), sigma = softplus(x U + u); only the encoder half.
std::pair<ad::Var, ad::Var> vae_encode(Session& s, ad::Var x);
/// Decoder on [z_tilde, z_hat, h]; disabled slots are replaced by zeros.
ad::Var vae_decode(Session& s, ad::Var z_tilde, ad::Var z_hat, ad::Var h,
                   const DecoderSlots& slots = {});

/// Full VAE pass. Slot rows must sum to 1 within 1e-6 (checked before any
/// slot is switched off).
VaeOutputs vae_forward(Session& s, ad::Var x, ad::Var z_tilde_in, ad::Var z_hat_in,
                       const Tensor& epsilon, const DecoderSlots& slots = {});

void require_probability_rows(const Tensor& p, const char* what);

// ---- checkpoints --------------------------------------------------------

struct CheckpointHeader {
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  nlohmann::json metadata;  // includes "model" (ModelConfig) plus caller extras
};

/// Little-endian container: magic, config hash, seed, JSON metadata, then
/// (name, trainable, shape, float64 data) for every parameter.
void save_checkpoint(const ModelBundle& bundle, const std::filesystem::path& path,
                     std::uint64_t config_hash, std::uint64_t seed,
                     const nlohmann::json& extra = nlohmann::json::object());
std::pair<ModelBundle, CheckpointHeader> load_checkpoint(
    const std::filesystem::path& path);

}  // namespace semifair::models
