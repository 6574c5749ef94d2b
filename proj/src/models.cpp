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

#include "semifair/models.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace semifair::models {

std::string to_string(BackboneKind kind) {
  switch (kind) {
    case BackboneKind::kLR: return "LR";
    case BackboneKind::kDNN: return "DNN";
    case BackboneKind::kFM: return "FM";
  }
  return "?";
}

BackboneKind parse_backbone(std::string_view name) {
  if (name == "LR" || name == "lr") return BackboneKind::kLR;
  if (name == "DNN" || name == "dnn") return BackboneKind::kDNN;
  if (name == "FM" || name == "fm") return BackboneKind::kFM;
  throw std::invalid_argument("unknown backbone '" + std::string(name) + "'");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"backbone", to_string(c.backbone)},
       {"input_dim", c.input_dim},
       {"hidden_dim", c.hidden_dim},
       {"latent_dim", c.latent_dim},
       {"fm_factors", c.fm_factors},
       {"fm_linear_dim", c.fm_linear_dim},
       {"head_hidden", c.head_hidden},
       {"dropout", c.dropout},
       {"lambda", c.lambda}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  c.backbone = parse_backbone(j.at("backbone").get<std::string>());
  c.input_dim = j.at("input_dim").get<std::size_t>();
  c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  c.latent_dim = j.at("latent_dim").get<std::size_t>();
  c.fm_factors = j.at("fm_factors").get<std::size_t>();
  c.fm_linear_dim = j.at("fm_linear_dim").get<std::size_t>();
  c.head_hidden = j.at("head_hidden").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.lambda = j.at("lambda").get<double>();
}

// ---- ModelBundle --------------------------------------------------------

namespace {

Tensor glorot(std::size_t in, std::size_t out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  return uniform_tensor({in, out}, rng, -limit, limit);
}

}  // namespace

ModelBundle::ModelBundle(const ModelConfig& config, std::uint64_t seed)
    : config_(config) {
  if (config.input_dim == 0) throw DimensionError("model input_dim must be > 0");
  if (config.lambda < 0.0) throw DomainError("lambda must be >= 0");
  Rng rng = make_rng({seed, 0x6d6f64656cULL});
  const std::size_t d = config.input_dim;
  const std::size_t hid = config.hidden_dim;
  const std::size_t k = config.latent_dim;

  init_backbone("bias_free", rng);
  init_backbone("bias_aware", rng);
  init_head("attr", hid, kAttributeClasses, config.head_hidden, rng);
  init_head("disc", hid, kAttributeClasses, config.head_hidden, rng);
  init_head("task", hid, kTaskClasses, 0, rng);

  add("vae.mu.w", glorot(d, k, rng));
  add("vae.mu.b", Tensor({k}));
  add("vae.sigma.w", glorot(d, k, rng));
  add("vae.sigma.b", Tensor({k}));
  const std::size_t dec_in = 2 * kAttributeClasses + k;
  add("dec.w", glorot(dec_in, d, rng));
  add("dec.b", Tensor({d}));
}

void ModelBundle::add(std::string name, Tensor value, bool trainable) {
  Parameter p(name, std::move(value), trainable);
  params_.emplace(std::move(name), std::move(p));
}

void ModelBundle::init_backbone(const std::string& prefix, Rng& rng) {
  const std::size_t d = config_.input_dim;
  const std::size_t hid = config_.hidden_dim;
  switch (config_.backbone) {
    case BackboneKind::kLR:
      add(prefix + ".w", uniform_tensor({d}, rng, -1.0, 1.0));
      // Fixed random projection d -> hidden so LR shares head shapes.
      add(prefix + ".proj", normal_tensor({d, hid}, rng, 1.0 / std::sqrt(static_cast<double>(d))),
          false);
      break;
    case BackboneKind::kDNN:
      add(prefix + ".w1", glorot(d, hid, rng));
      add(prefix + ".b1", Tensor({hid}));
      add(prefix + ".w2", glorot(hid, hid, rng));
      add(prefix + ".b2", Tensor({hid}));
      break;
    case BackboneKind::kFM: {
      const std::size_t kf = config_.fm_factors;
      const std::size_t kl = config_.fm_linear_dim;
      add(prefix + ".lin", glorot(d, kl, rng));
      add(prefix + ".v", normal_tensor({d, kf}, rng, 0.1));
      add(prefix + ".out.w", glorot(kl + kf, hid, rng));
      add(prefix + ".out.b", Tensor({hid}));
      break;
    }
  }
}

void ModelBundle::init_head(const std::string& prefix, std::size_t in,
                            std::size_t out, std::size_t hidden, Rng& rng) {
  if (hidden > 0) {
    add(prefix + ".h.w", glorot(in, hidden, rng));
    add(prefix + ".h.b", Tensor({hidden}));
    in = hidden;
  }
  add(prefix + ".w", glorot(in, out, rng));
  add(prefix + ".b", Tensor({out}));
}

void ModelBundle::set_lambda(double lambda) {
  if (!(lambda >= 0.0)) throw DomainError("lambda must be >= 0");
  config_.lambda = lambda;
}

Parameter& ModelBundle::param(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("no parameter named '" + name + "'");
  return it->second;
}

const Parameter& ModelBundle::param(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("no parameter named '" + name + "'");
  return it->second;
}

std::vector<Parameter*> ModelBundle::params_with_prefix(std::string_view prefix) {
  std::vector<Parameter*> out;
  for (auto& [name, p] : params_) {
    if (name.rfind(prefix, 0) == 0) out.push_back(&p);
  }
  return out;
}

void ModelBundle::set_trainable(std::string_view prefix, bool trainable) {
  for (Parameter* p : params_with_prefix(prefix)) {
    // The LR projection is never trainable.
    if (p->name.ends_with(".proj")) continue;
    p->trainable = trainable;
  }
}

void ModelBundle::zero_grad() {
  for (auto& [name, p] : params_) p.zero_grad();
}

void ModelBundle::zero_values(std::string_view prefix) {
  for (Parameter* p : params_with_prefix(prefix)) {
    if (p->name.ends_with(".proj")) continue;
    p->value.fill(0.0);
  }
}

// ---- Session ------------------------------------------------------------

Session::Session(ModelBundle& bundle, Rng* rng) : bundle_(bundle), rng_(rng) {}

ad::Var Session::param(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  ad::Var v = graph_.param(bundle_.param(name));
  bound_.emplace(name, v);
  return v;
}

ad::Var Session::frozen(const std::string& name) {
  const std::string key = "frozen:" + name;
  auto it = bound_.find(key);
  if (it != bound_.end()) return it->second;
  ad::Var v = graph_.constant(bundle_.param(name).value);
  bound_.emplace(key, v);
  return v;
}

// ---- forward passes -----------------------------------------------------

ad::Var fm_interaction(ad::Var x, ad::Var v) {
  ad::Var x_sq = ad::square(x.graph()->constant(x.value()));
  ad::Var sum_sq = ad::square(ad::matmul(x, v));
  ad::Var sq_sum = ad::matmul(x_sq, ad::square(v));
  return ad::scale(ad::sub(sum_sq, sq_sum), 0.5);
}

ad::Var backbone_forward(Session& s, const std::string& prefix, ad::Var x) {
  const ModelConfig& cfg = s.bundle().config();
  if (x.cols() != cfg.input_dim) {
    throw DimensionError("backbone '" + prefix + "': input " +
                         shape_to_string(x.shape()) + " does not match input_dim " +
                         std::to_string(cfg.input_dim));
  }
  const std::string p = prefix + ".";
  switch (cfg.backbone) {
    case BackboneKind::kLR:
      return ad::matmul(ad::mul_rowwise(x, s.param(p + "w")), s.param(p + "proj"));
    case BackboneKind::kDNN: {
      auto h = ad::relu(ad::dense(x, s.param(p + "w1"), s.param(p + "b1")));
      return ad::relu(ad::dense(h, s.param(p + "w2"), s.param(p + "b2")));
    }
    case BackboneKind::kFM: {
      ad::Var inter = fm_interaction(x, s.param(p + "v"));
      ad::Var lin = ad::matmul(x, s.param(p + "lin"));
      return ad::dense(ad::concat_cols({lin, inter}), s.param(p + "out.w"),
                       s.param(p + "out.b"));
    }
  }
  throw std::logic_error("unreachable backbone kind");
}

namespace {

ad::Var apply_dropout(Session& s, ad::Var r, bool training) {
  const double rate = s.bundle().config().dropout;
  if (!training || rate == 0.0) return r;
  if (s.rng() == nullptr) {
    throw std::invalid_argument("training-mode forward pass needs an rng for dropout");
  }
  return ad::dropout(r, rate, bernoulli_mask(r.shape(), rate, *s.rng()), true);
}

ad::Var head_logits(Session& s, const std::string& prefix, ad::Var r, bool frozen) {
  auto get = [&](const std::string& n) { return frozen ? s.frozen(n) : s.param(n); };
  if (s.bundle().has_param(prefix + ".h.w")) {
    r = ad::relu(ad::dense(r, get(prefix + ".h.w"), get(prefix + ".h.b")));
  }
  return ad::dense(r, get(prefix + ".w"), get(prefix + ".b"));
}

}  // namespace

Encoded encode(Session& s, ad::Var x, bool training) {
  Encoded e;
  e.r_f = apply_dropout(s, backbone_forward(s, "bias_free", x), training);
  e.r_b = apply_dropout(s, backbone_forward(s, "bias_aware", x), training);
  e.r = ad::add(e.r_f, e.r_b);
  return e;
}

ad::Var encode_bias_free(Session& s, ad::Var x, bool training) {
  return apply_dropout(s, backbone_forward(s, "bias_free", x), training);
}

ad::Var attribute_head(Session& s, ad::Var r_b) {
  return ad::softmax(head_logits(s, "attr", r_b, false));
}

ad::Var discriminator_head(Session& s, ad::Var r_f) {
  return ad::softmax(
      head_logits(s, "disc", ad::gradient_reversal(r_f, s.bundle().lambda()), false));
}

ad::Var discriminator_head_frozen(Session& s, ad::Var r_f) {
  return ad::softmax(head_logits(s, "disc", r_f, true));
}

ad::Var task_logits(Session& s, ad::Var r) {
  return ad::dense(r, s.param("task.w"), s.param("task.b"));
}

ad::Var task_head(Session& s, ad::Var r) { return ad::softmax(task_logits(s, r)); }

HeadOutputs predict_heads(Session& s, const Encoded& enc) {
  return {attribute_head(s, enc.r_b), discriminator_head(s, enc.r_f),
          task_head(s, enc.r)};
}

Tensor predict_test(ModelBundle& bundle, const Tensor& x) {
  Session s(bundle);
  return task_head(s, encode_bias_free(s, s.input(x), false)).value();
}

Tensor bias_free_representation(ModelBundle& bundle, const Tensor& x) {
  Session s(bundle);
  return encode_bias_free(s, s.input(x), false).value();
}

void require_probability_rows(const Tensor& p, const char* what) {
  for (std::size_t r = 0; r < p.rows(); ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < p.cols(); ++c) {
      if (p.at(r, c) < 0.0) {
        throw std::invalid_argument(std::string(what) + ": negative probability in row " +
                                    std::to_string(r));
      }
      sum += p.at(r, c);
    }
    if (std::abs(sum - 1.0) > 1e-6) {
      throw std::invalid_argument(std::string(what) + ": row " + std::to_string(r) +
                                  " sums to " + std::to_string(sum));
    }
  }
}

std::pair<ad::Var, ad::Var> vae_encode(Session& s, ad::Var x) {
  ad::Var mu = ad::tanh(ad::dense(x, s.param("vae.mu.w"), s.param("vae.mu.b")));
  ad::Var sigma =
      ad::softplus(ad::dense(x, s.param("vae.sigma.w"), s.param("vae.sigma.b")));
  return {mu, sigma};
}

ad::Var vae_decode(Session& s, ad::Var z_tilde, ad::Var z_hat, ad::Var h,
                   const DecoderSlots& slots) {
  if (!slots.use_z_tilde) z_tilde = s.input(Tensor(z_tilde.shape()));
  if (!slots.use_z_hat) z_hat = s.input(Tensor(z_hat.shape()));
  return ad::dense(ad::concat_cols({z_tilde, z_hat, h}), s.param("dec.w"),
                   s.param("dec.b"));
}

VaeOutputs vae_forward(Session& s, ad::Var x, ad::Var z_tilde_in, ad::Var z_hat_in,
                       const Tensor& epsilon, const DecoderSlots& slots) {
  require_probability_rows(z_tilde_in.value(), "vae_forward z_tilde slot");
  require_probability_rows(z_hat_in.value(), "vae_forward z_hat slot");
  auto [mu, sigma] = vae_encode(s, x);
  ad::Var h = ad::reparameterize(mu, sigma, epsilon);
  return {vae_decode(s, z_tilde_in, z_hat_in, h, slots), mu, sigma};
}

// ---- checkpoints --------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'S', 'F', 'V', 'A', 'E', 'C', 'K', '1'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw std::runtime_error("truncated checkpoint");
  }
  return v;
}

}  // namespace

void save_checkpoint(const ModelBundle& bundle, const std::filesystem::path& path,
                     std::uint64_t config_hash, std::uint64_t seed,
                     const nlohmann::json& extra) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint '" + path.string() + "'");
  nlohmann::json meta = extra;
  meta["model"] = bundle.config();
  const std::string meta_str = meta.dump();
  out.write(kMagic, sizeof(kMagic));
  put<std::uint64_t>(out, config_hash);
  put<std::uint64_t>(out, seed);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(meta_str.size()));
  out.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(bundle.params().size()));
  for (const auto& [name, p] : bundle.params()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint8_t>(out, p.trainable ? 1 : 0);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.rank()));
    for (std::size_t dim : p.value.shape()) put<std::uint64_t>(out, dim);
    for (double v : p.value.data()) put<double>(out, v);
  }
  if (!out) throw std::runtime_error("failed writing checkpoint '" + path.string() + "'");
}

std::pair<ModelBundle, CheckpointHeader> load_checkpoint(
    const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path.string() + "'");
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
    throw std::runtime_error("'" + path.string() + "' is not a checkpoint");
  }
  CheckpointHeader header;
  header.config_hash = get<std::uint64_t>(in);
  header.seed = get<std::uint64_t>(in);
  std::string meta(get<std::uint32_t>(in), '\0');
  if (!in.read(meta.data(), static_cast<std::streamsize>(meta.size()))) {
    throw std::runtime_error("truncated checkpoint metadata");
  }
  header.metadata = nlohmann::json::parse(meta);
  ModelBundle bundle(header.metadata.at("model").get<ModelConfig>(), 0);
  const auto count = get<std::uint32_t>(in);
  if (count != bundle.params().size()) {
    throw std::runtime_error("checkpoint parameter count mismatch");
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(get<std::uint32_t>(in), '\0');
    in.read(name.data(), static_cast<std::streamsize>(name.size()));
    const bool trainable = get<std::uint8_t>(in) != 0;
    Shape shape(get<std::uint32_t>(in));
    for (auto& dim : shape) dim = get<std::uint64_t>(in);
    std::vector<double> data(shape_numel(shape));
    for (double& v : data) v = get<double>(in);
    Parameter& p = bundle.param(name);
    if (p.value.shape() != shape) {
      throw std::runtime_error("checkpoint shape mismatch for '" + name + "'");
    }
    p.value = Tensor(std::move(shape), std::move(data));
    p.trainable = trainable;
    p.zero_grad();
  }
  return {std::move(bundle), std::move(header)};
}

}  // namespace semifair::models
