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

#include "semifair/training.hpp"

#include <chrono>
#include <iostream>

#include "semifair/metrics.hpp"
#include "semifair/random.hpp"

namespace semifair::training {

using objectives::JointObjective;
using objectives::LossBreakdown;

std::string to_string(Method m) {
  switch (m) {
    case Method::kPlain: return "plain";
    case Method::kAL: return "AL";
    case Method::kALST: return "AL+ST";
    case Method::kDAL: return "DAL";
    case Method::kDALST: return "DAL+ST";
    case Method::kSemiFairVAE: return "Semi-FairVAE";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  for (Method m : {Method::kPlain, Method::kAL, Method::kALST, Method::kDAL, Method::kDALST,
                   Method::kSemiFairVAE}) {
    if (name == to_string(m)) return m;
  }
  throw std::invalid_argument("unknown method '" + std::string(name) +
                              "' (expected plain, AL, AL+ST, DAL, DAL+ST or Semi-FairVAE)");
}

bool is_self_training(Method m) { return m == Method::kALST || m == Method::kDALST; }

Method base_method(Method m) {
  if (m == Method::kALST) return Method::kAL;
  if (m == Method::kDALST) return Method::kDAL;
  return m;
}

void to_json(nlohmann::json& j, const MethodSpec& s) {
  j = {{"backbone", models::to_string(s.backbone)},
       {"method", to_string(s.method)},
       {"lambda", s.lambda},
       {"label_ratio", s.label_ratio},
       {"seed", s.seed},
       {"tau", s.tau},
       {"epochs", s.epochs},
       {"batch_size", s.batch_size},
       {"lr", s.lr},
       {"dropout", s.dropout},
       {"hidden_dim", s.hidden_dim},
       {"latent_dim", s.latent_dim},
       {"head_hidden", s.head_hidden},
       {"objective", s.objective},
       {"select_on_validation", s.select_on_validation}};
}

void from_json(const nlohmann::json& j, MethodSpec& s) {
  s = MethodSpec{};
  if (j.contains("backbone")) s.backbone = models::parse_backbone(j["backbone"].get<std::string>());
  if (j.contains("method")) s.method = parse_method(j["method"].get<std::string>());
  s.lambda = j.value("lambda", s.lambda);
  s.label_ratio = j.value("label_ratio", s.label_ratio);
  s.seed = j.value("seed", s.seed);
  s.tau = j.value("tau", s.tau);
  s.epochs = j.value("epochs", s.epochs);
  s.batch_size = j.value("batch_size", s.batch_size);
  s.lr = j.value("lr", s.lr);
  s.dropout = j.value("dropout", s.dropout);
  s.hidden_dim = j.value("hidden_dim", s.hidden_dim);
  s.latent_dim = j.value("latent_dim", s.latent_dim);
  s.head_hidden = j.value("head_hidden", s.head_hidden);
  if (j.contains("objective")) s.objective = j["objective"].get<objectives::ObjectiveConfig>();
  s.select_on_validation = j.value("select_on_validation", s.select_on_validation);
}

models::ModelConfig model_config(const MethodSpec& spec, std::size_t input_dim) {
  models::ModelConfig c;
  c.backbone = spec.backbone;
  c.input_dim = input_dim;
  c.hidden_dim = spec.hidden_dim;
  c.latent_dim = spec.latent_dim;
  c.head_hidden = spec.head_hidden;
  c.dropout = spec.dropout;
  c.lambda = spec.lambda;
  return c;
}

void to_json(nlohmann::json& j, const EpochRecord& r) {
  auto opt = [](const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  j = {{"epoch", r.epoch},
       {"steps", r.steps},
       {"mean_total", r.mean_total},
       {"mean_terms", r.mean_terms},
       {"val_accuracy", opt(r.val_accuracy)},
       {"val_dp", opt(r.val_dp)},
       {"val_criterion", opt(r.val_criterion)},
       {"seconds", r.seconds}};
}

void to_json(nlohmann::json& j, const TrainReport& r) {
  auto opt = [](const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  j = {{"seed", r.seed},
       {"method", r.method},
       {"epochs", r.epochs},
       {"selected_epoch", r.selected_epoch},
       {"selected_criterion", opt(r.selected_criterion)},
       {"steps", r.step_totals.size()},
       {"pseudo_labeled", r.pseudo_labeled},
       {"pseudo_label_accuracy", opt(r.pseudo_label_accuracy)},
       {"attribute_accuracy_round1", opt(r.attribute_accuracy_round1)}};
}

TrainData train_data(const data::DatasetSplit& split) {
  return {split.train_labeled, split.train_unlabeled, split.validation, split.train_all()};
}

double selection_criterion(double accuracy, double dp_gap) { return accuracy - dp_gap; }

namespace {

std::vector<Parameter*> all_params(models::ModelBundle& b) {
  std::vector<Parameter*> out;
  for (auto& [name, p] : b.params()) out.push_back(&p);
  return out;
}

std::map<std::string, Tensor> snapshot(const models::ModelBundle& b) {
  std::map<std::string, Tensor> out;
  for (const auto& [name, p] : b.params()) out.emplace(name, p.value);
  return out;
}

void restore(models::ModelBundle& b, const std::map<std::string, Tensor>& values) {
  for (auto& [name, p] : b.params()) p.value = values.at(name);
}

Tensor draw_eps(std::size_t n, std::size_t k, Rng& rng) {
  return normal_tensor({n, k}, rng);
}

double item(const ad::Var& v) { return v.value().item(); }

Tensor one_hot(const std::vector<int>& labels) {
  return objectives::one_hot(labels, 2);
}

// ---- per-method step objectives ----

JointObjective plain_step(models::Session& s, const data::Batch& batch) {
  ad::Var x = s.input(batch.x);
  ad::Var r_f = models::encode_bias_free(s, x, true);
  ad::Var l_t = objectives::task_loss(s.input(one_hot(batch.y)), models::task_head(s, r_f));
  LossBreakdown b;
  b.L_T = item(l_t);
  b.total = *b.L_T;
  JointObjective out;
  out.value = l_t;
  out.labeled = b;
  out.total = b.total;
  return out;
}

// Adversarial learning on a single representation: task loss everywhere,
// reversed attribute loss where the attribute is observed.
JointObjective al_step(models::Session& s, const data::Batch& lb, const data::Batch& ub,
                       double lambda) {
  JointObjective out;
  auto add = [&](ad::Var v) { out.value = out.value.valid() ? ad::add(out.value, v) : v; };
  if (!lb.empty()) {
    ad::Var r_f = models::encode_bias_free(s, s.input(lb.x), true);
    ad::Var l_t = objectives::task_loss(s.input(one_hot(lb.y)), models::task_head(s, r_f));
    ad::Var l_a = objectives::adversarial_loss(s.input(one_hot(lb.z)),
                                               models::discriminator_head(s, r_f));
    add(ad::add(l_t, l_a));
    LossBreakdown b;
    b.L_T = item(l_t);
    b.L_A = item(l_a);
    b.total = *b.L_T - lambda * *b.L_A;
    out.labeled = b;
    out.total += b.total;
  }
  if (!ub.empty()) {
    ad::Var r_f = models::encode_bias_free(s, s.input(ub.x), true);
    ad::Var l_t = objectives::task_loss(s.input(one_hot(ub.y)), models::task_head(s, r_f));
    add(l_t);
    LossBreakdown b;
    b.L_T = item(l_t);
    b.total = *b.L_T;
    out.unlabeled = b;
    out.total += b.total;
  }
  return out;
}

// Decomposed adversarial learning: both encoders and the orthogonality term,
// no generative part.
JointObjective dal_step(models::Session& s, const data::Batch& lb, const data::Batch& ub,
                        const objectives::ObjectiveConfig& cfg) {
  const auto& w = cfg.weights;
  JointObjective out;
  auto add = [&](ad::Var v) { out.value = out.value.valid() ? ad::add(out.value, v) : v; };
  if (!lb.empty()) {
    LossBreakdown b;
    auto enc = models::encode(s, s.input(lb.x), true);
    auto heads = models::predict_heads(s, enc);
    ad::Var z = s.input(one_hot(lb.z));
    ad::Var l_p = objectives::attribute_prediction_loss(z, heads.z_hat);
    ad::Var l_a = objectives::adversarial_loss(z, heads.z_tilde);
    ad::Var l_o = objectives::orthogonality_loss(enc.r_f, enc.r_b, &b.zero_norm_rows);
    ad::Var l_t = objectives::task_loss(s.input(one_hot(lb.y)), heads.y_hat);
    ad::Var v = ad::add(ad::scale(l_p, w.P), l_a);
    v = ad::add(v, ad::scale(l_o, w.O));
    add(ad::add(v, ad::scale(l_t, w.T)));
    b.L_P = item(l_p);
    b.L_A = item(l_a);
    b.L_O = item(l_o);
    b.L_T = item(l_t);
    b.total = w.P * *b.L_P - cfg.lambda * *b.L_A + w.O * *b.L_O + w.T * *b.L_T;
    out.labeled = b;
    out.total += b.total;
  }
  if (!ub.empty()) {
    LossBreakdown b;
    auto enc = models::encode(s, s.input(ub.x), true);
    ad::Var l_o = objectives::orthogonality_loss(enc.r_f, enc.r_b, &b.zero_norm_rows);
    ad::Var l_t =
        objectives::task_loss(s.input(one_hot(ub.y)), models::task_head(s, enc.r));
    add(ad::add(ad::scale(l_o, w.O), ad::scale(l_t, w.T)));
    b.L_O = item(l_o);
    b.L_T = item(l_t);
    b.total = w.O * *b.L_O + w.T * *b.L_T;
    out.unlabeled = b;
    out.total += b.total;
  }
  return out;
}

void accumulate_terms(std::map<std::string, double>& acc, const std::string& prefix,
                      const std::optional<LossBreakdown>& b) {
  if (!b) return;
  const nlohmann::json row = objectives::to_json_row(*b);
  for (const auto& [key, value] : row.items()) {
    if (value.is_number_float()) acc[prefix + "." + key] += value.get<double>();
  }
}

struct Validation {
  double accuracy, dp, criterion;
};

std::optional<Validation> validate(models::ModelBundle& bundle,
                                   const std::vector<data::Sample>& val) {
  if (val.empty()) return std::nullopt;
  const data::Batch b = data::gather_all(val);
  const std::vector<int> pred = metrics::argmax_rows(models::predict_test(bundle, b.x));
  Validation v{};
  v.accuracy = metrics::accuracy(b.y, pred);
  try {
    v.dp = metrics::demographic_parity_gap(pred, b.z);
  } catch (const metrics::MetricError&) {
    v.dp = 0.0;  // single-group validation set: rank by accuracy alone
  }
  v.criterion = selection_criterion(v.accuracy, v.dp);
  return v;
}

}  // namespace

TrainResult train_on(const MethodSpec& spec, const TrainData& data,
                     const TrainOptions& options) {
  if (is_self_training(spec.method)) {
    throw std::invalid_argument("train_on: " + to_string(spec.method) +
                                " needs self_train with the full split");
  }
  if (spec.batch_size == 0) throw std::invalid_argument("batch_size must be > 0");
  const std::vector<data::Sample>& ref =
      !data.all.empty() ? data.all : (!data.labeled.empty() ? data.labeled : data.unlabeled);
  if (ref.empty()) throw std::invalid_argument("train_on: no training samples");

  data::TrainingScope scope;
  TrainResult result{models::ModelBundle(model_config(spec, ref.front().x.size()), spec.seed),
                     {}};
  models::ModelBundle& bundle = result.bundle;
  TrainReport& report = result.report;
  report.seed = spec.seed;
  report.method = to_string(spec.method);

  objectives::ObjectiveConfig cfg = spec.objective;
  cfg.lambda = spec.lambda;
  optim::Adam adam({.lr = spec.lr});
  const std::vector<Parameter*> params = all_params(bundle);
  Rng dropout_rng = make_rng({spec.seed, 0x64726f70ULL});
  Rng eps_rng = make_rng({spec.seed, 0x657073ULL});
  const std::size_t k_h = bundle.config().latent_dim;

  std::optional<std::map<std::string, Tensor>> best;
  std::size_t global_step = 0;
  for (std::size_t epoch = 0; epoch < spec.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.epoch = epoch + 1;

    std::vector<data::StepIndices> steps;
    if (spec.method == Method::kPlain) {
      for (auto& idx : data::single_batches(data.all.size(), spec.batch_size, spec.seed, epoch))
        steps.push_back({std::move(idx), {}});
    } else {
      steps = data::batches(data.labeled.size(), data.unlabeled.size(), spec.batch_size,
                            spec.seed, epoch);
    }

    for (const data::StepIndices& st : steps) {
      ++global_step;
      bundle.zero_grad();
      models::Session s(bundle, &dropout_rng);
      JointObjective obj;
      switch (spec.method) {
        case Method::kPlain:
          obj = plain_step(s, data::gather(data.all, st.labeled));
          break;
        case Method::kAL:
          obj = al_step(s, data::gather(data.labeled, st.labeled),
                        data::gather(data.unlabeled, st.unlabeled), spec.lambda);
          break;
        case Method::kDAL:
          obj = dal_step(s, data::gather(data.labeled, st.labeled),
                         data::gather(data.unlabeled, st.unlabeled), cfg);
          break;
        case Method::kSemiFairVAE: {
          const data::Batch lb = data::gather(data.labeled, st.labeled);
          const data::Batch ub = data::gather(data.unlabeled, st.unlabeled);
          const Tensor el = draw_eps(std::max<std::size_t>(lb.size(), 1), k_h, eps_rng);
          const Tensor eu = draw_eps(std::max<std::size_t>(ub.size(), 1), k_h, eps_rng);
          obj = objectives::joint_loss(s, lb, ub, cfg, el, eu, true);
          break;
        }
        default:
          throw std::logic_error("unreachable method");
      }
      s.backward(obj.value);
      adam.step(params, "epoch " + std::to_string(epoch + 1) + " step " +
                            std::to_string(global_step));

      report.step_totals.push_back(obj.total);
      rec.mean_total += obj.total;
      accumulate_terms(rec.mean_terms, "labeled", obj.labeled);
      accumulate_terms(rec.mean_terms, "unlabeled", obj.unlabeled);
      ++rec.steps;
      if (options.step_log != nullptr) {
        nlohmann::json line = {
            {"step", global_step},
            {"epoch", epoch + 1},
            {"method", report.method},
            {"lambda", spec.lambda},
            {"lr", spec.lr},
            {"labeled", obj.labeled ? objectives::to_json_row(*obj.labeled) : nlohmann::json(nullptr)},
            {"unlabeled", obj.unlabeled ? objectives::to_json_row(*obj.unlabeled) : nlohmann::json(nullptr)},
            {"total", obj.total}};
        *options.step_log << line.dump() << '\n';
      }
    }
    if (rec.steps > 0) {
      rec.mean_total /= static_cast<double>(rec.steps);
      for (auto& [key, v] : rec.mean_terms) v /= static_cast<double>(rec.steps);
    }
    if (auto v = validate(bundle, data.validation)) {
      rec.val_accuracy = v->accuracy;
      rec.val_dp = v->dp;
      rec.val_criterion = v->criterion;
      if (spec.select_on_validation &&
          (!report.selected_criterion || v->criterion > *report.selected_criterion)) {
        report.selected_criterion = v->criterion;
        report.selected_epoch = epoch + 1;
        best = snapshot(bundle);
      }
    }
    rec.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report.epochs.push_back(std::move(rec));
  }
  if (best) {
    restore(bundle, *best);
  } else {
    report.selected_epoch = spec.epochs;
  }
  return result;
}

namespace {

// Round 1 of self-training: bias-aware encoder + attribute head fitted with
// the attribute prediction loss on the labeled part.
models::ModelBundle fit_attribute_predictor(const MethodSpec& spec,
                                            const std::vector<data::Sample>& labeled) {
  data::TrainingScope scope;
  models::ModelBundle bundle(model_config(spec, labeled.front().x.size()),
                             spec.seed ^ 0x5354ULL);
  optim::Adam adam({.lr = spec.lr});
  std::vector<Parameter*> params;
  for (const char* prefix : {"bias_aware", "attr"})
    for (Parameter* p : bundle.params_with_prefix(prefix)) params.push_back(p);
  Rng rng = make_rng({spec.seed, 0x7374ULL});
  for (std::size_t epoch = 0; epoch < spec.epochs; ++epoch) {
    for (const auto& idx :
         data::single_batches(labeled.size(), spec.batch_size, spec.seed ^ 0x5354ULL, epoch)) {
      const data::Batch b = data::gather(labeled, idx);
      bundle.zero_grad();
      models::Session s(bundle, &rng);
      ad::Var r_b = models::backbone_forward(s, "bias_aware", s.input(b.x));
      const double rate = bundle.config().dropout;
      if (rate > 0.0) r_b = ad::dropout(r_b, rate, bernoulli_mask(r_b.shape(), rate, rng), true);
      ad::Var loss = objectives::attribute_prediction_loss(s.input(one_hot(b.z)),
                                                           models::attribute_head(s, r_b));
      s.backward(loss);
      adam.step(params, "self-training round 1 epoch " + std::to_string(epoch + 1));
    }
  }
  return bundle;
}

Tensor predict_attribute(models::ModelBundle& bundle, const Tensor& x) {
  models::Session s(bundle);
  return models::attribute_head(s, models::backbone_forward(s, "bias_aware", s.input(x)))
      .value();
}

}  // namespace

TrainResult self_train(const MethodSpec& spec, const data::DatasetSplit& split,
                       const TrainOptions& options) {
  if (!is_self_training(spec.method)) {
    throw std::invalid_argument("self_train: " + to_string(spec.method) +
                                " is not a self-training method");
  }
  if (!(spec.tau > 0.5 && spec.tau < 1.0)) {
    throw std::invalid_argument("self-training threshold tau must lie in (0.5, 1), got " +
                                std::to_string(spec.tau));
  }
  TrainData data = train_data(split);
  if (data.labeled.empty()) throw std::invalid_argument("self_train: no labeled samples");

  models::ModelBundle predictor = fit_attribute_predictor(spec, data.labeled);
  std::vector<std::size_t> adopted;
  std::vector<int> pseudo;
  if (!data.unlabeled.empty()) {
    const Tensor probs = predict_attribute(predictor, data::gather_all(data.unlabeled).x);
    for (std::size_t i = 0; i < probs.rows(); ++i) {
      const int label = probs.at(i, 1) > probs.at(i, 0) ? 1 : 0;
      if (probs.at(i, static_cast<std::size_t>(label)) >= spec.tau) {
        adopted.push_back(i);
        pseudo.push_back(label);
      }
    }
  }

  std::optional<double> round1_accuracy;
  if (!data.validation.empty()) {
    const data::Batch vb = data::gather_all(data.validation);
    round1_accuracy =
        metrics::accuracy(vb.z, metrics::argmax_rows(predict_attribute(predictor, vb.x)));
  }

  // Bookkeeping against the held-back attributes happens outside training.
  std::optional<double> pseudo_accuracy;
  if (!adopted.empty()) {
    std::size_t hits = 0;
    for (std::size_t k = 0; k < adopted.size(); ++k)
      hits += split.shadow_attribute(adopted[k]) == pseudo[k];
    pseudo_accuracy = static_cast<double>(hits) / static_cast<double>(adopted.size());
  } else {
    std::clog << "warning: no unlabeled sample reached tau=" << spec.tau
              << "; training " << to_string(base_method(spec.method))
              << " on the original labeled set\n";
  }

  TrainData round2;
  round2.labeled = data.labeled;
  round2.validation = data.validation;
  std::vector<bool> taken(data.unlabeled.size(), false);
  for (std::size_t k = 0; k < adopted.size(); ++k) {
    data::Sample s = data.unlabeled[adopted[k]];
    s.z = pseudo[k];
    round2.labeled.push_back(std::move(s));
    taken[adopted[k]] = true;
  }
  for (std::size_t i = 0; i < data.unlabeled.size(); ++i)
    if (!taken[i]) round2.unlabeled.push_back(data.unlabeled[i]);
  round2.all = data.all;

  MethodSpec base = spec;
  base.method = base_method(spec.method);
  TrainResult result = train_on(base, round2, options);
  result.report.method = to_string(spec.method);
  result.report.pseudo_labeled = adopted.size();
  result.report.pseudo_label_accuracy = pseudo_accuracy;
  result.report.attribute_accuracy_round1 = round1_accuracy;
  return result;
}

TrainResult train(const MethodSpec& spec, const data::DatasetSplit& split,
                  const TrainOptions& options) {
  if (is_self_training(spec.method)) return self_train(spec, split, options);
  return train_on(spec, train_data(split), options);
}

}  // namespace semifair::training
