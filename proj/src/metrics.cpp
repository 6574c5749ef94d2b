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

#include "semifair/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "semifair/autodiff.hpp"
#include "semifair/optim.hpp"
#include "semifair/random.hpp"

namespace semifair::metrics {

namespace {

void require_same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DimensionError(std::string(what) + ": length mismatch " + std::to_string(a) +
                         " vs " + std::to_string(b));
  }
  if (a == 0) throw MetricError(std::string(what) + ": no samples");
}

void require_binary_group(int g) {
  if (g != 0 && g != 1) {
    throw MetricError("group label " + std::to_string(g) + " is not 0 or 1");
  }
}

struct GroupRates {
  std::array<double, 2> positive_rate{};
  std::array<double, 2> tpr{};
  std::array<std::size_t, 2> n{};
  std::array<std::size_t, 2> n_pos{};
};

GroupRates group_rates(const std::vector<int>& y_true, const std::vector<int>& y_pred,
                       const std::vector<int>& z) {
  GroupRates r;
  std::array<std::size_t, 2> pred_pos{}, true_pos{};
  for (std::size_t i = 0; i < z.size(); ++i) {
    require_binary_group(z[i]);
    const auto g = static_cast<std::size_t>(z[i]);
    ++r.n[g];
    if (y_pred[i] == 1) ++pred_pos[g];
    if (!y_true.empty() && y_true[i] == 1) {
      ++r.n_pos[g];
      if (y_pred[i] == 1) ++true_pos[g];
    }
  }
  for (std::size_t g = 0; g < 2; ++g) {
    if (r.n[g] > 0) r.positive_rate[g] = static_cast<double>(pred_pos[g]) / r.n[g];
    if (r.n_pos[g] > 0) r.tpr[g] = static_cast<double>(true_pos[g]) / r.n_pos[g];
  }
  return r;
}

}  // namespace

double accuracy(const std::vector<int>& y_true, const std::vector<int>& y_pred) {
  require_same_length(y_true.size(), y_pred.size(), "accuracy");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < y_true.size(); ++i) hits += y_true[i] == y_pred[i];
  return static_cast<double>(hits) / static_cast<double>(y_true.size());
}

double demographic_parity_gap(const std::vector<int>& y_pred, const std::vector<int>& z) {
  require_same_length(y_pred.size(), z.size(), "demographic parity");
  const GroupRates r = group_rates({}, y_pred, z);
  for (std::size_t g = 0; g < 2; ++g) {
    if (r.n[g] == 0) {
      throw MetricError("demographic parity undefined: group z=" + std::to_string(g) +
                        " is empty");
    }
  }
  return std::abs(r.positive_rate[0] - r.positive_rate[1]);
}

double equal_opportunity_gap(const std::vector<int>& y_true, const std::vector<int>& y_pred,
                             const std::vector<int>& z) {
  require_same_length(y_true.size(), y_pred.size(), "equal opportunity");
  require_same_length(y_true.size(), z.size(), "equal opportunity");
  const GroupRates r = group_rates(y_true, y_pred, z);
  for (std::size_t g = 0; g < 2; ++g) {
    if (r.n_pos[g] == 0) {
      throw MetricError("equal opportunity undefined: group z=" + std::to_string(g) +
                        " has no positive samples");
    }
  }
  return std::abs(r.tpr[0] - r.tpr[1]);
}

double auc(const std::vector<int>& y_true, const std::vector<double>& scores) {
  require_same_length(y_true.size(), scores.size(), "auc");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Average ranks over tie blocks; rank sums stay exact in doubles for any
  // realistic n.
  double pos_rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (y_true[order[k]] == 1) {
        pos_rank_sum += avg_rank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw MetricError("auc undefined: only one class present");
  const double np = static_cast<double>(n_pos);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

std::vector<int> argmax_rows(const Tensor& probs) {
  std::vector<int> out(probs.rows());
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < probs.cols(); ++c) {
      if (probs.at(r, c) > probs.at(r, best)) best = c;
    }
    out[r] = static_cast<int>(best);
  }
  return out;
}

double leakage_probe(const Tensor& representations, const std::vector<int>& z,
                     std::uint64_t seed, const ProbeOptions& options) {
  const std::size_t n = representations.rows();
  const std::size_t d = representations.cols();
  require_same_length(n, z.size(), "leakage probe");
  if (n < 2) throw MetricError("leakage probe needs at least two samples");
  for (int g : z) require_binary_group(g);

  Rng rng = make_rng({seed, 0x70726f6265ULL});
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  shuffle_in_place(order, rng);
  const std::size_t n_train =
      std::clamp<std::size_t>(static_cast<std::size_t>(options.train_frac * n), 1, n - 1);

  std::vector<double> mean(d, 0.0), sd(d, 0.0);
  for (std::size_t k = 0; k < n_train; ++k)
    for (std::size_t j = 0; j < d; ++j) mean[j] += representations.at(order[k], j);
  for (double& m : mean) m /= static_cast<double>(n_train);
  for (std::size_t k = 0; k < n_train; ++k)
    for (std::size_t j = 0; j < d; ++j) {
      const double c = representations.at(order[k], j) - mean[j];
      sd[j] += c * c;
    }
  for (double& s : sd) s = std::sqrt(s / static_cast<double>(n_train));

  auto build = [&](std::size_t from, std::size_t to) {
    Tensor x({to - from, d});
    Tensor t({to - from, 2});
    std::vector<int> labels;
    for (std::size_t k = from; k < to; ++k) {
      for (std::size_t j = 0; j < d; ++j) {
        // Constant columns carry no information; keep them at zero.
        x.at(k - from, j) =
            sd[j] > 1e-12 ? (representations.at(order[k], j) - mean[j]) / sd[j] : 0.0;
      }
      t.at(k - from, static_cast<std::size_t>(z[order[k]])) = 1.0;
      labels.push_back(z[order[k]]);
    }
    return std::make_tuple(std::move(x), std::move(t), std::move(labels));
  };
  auto [x_train, t_train, y_train] = build(0, n_train);
  auto [x_test, t_test, y_test] = build(n_train, n);

  Parameter w("probe.w", Tensor({d, 2}));
  Parameter b("probe.b", Tensor({2}));
  optim::Adam adam({.lr = options.lr});
  const std::vector<Parameter*> params = {&w, &b};
  for (std::size_t step = 0; step < options.steps; ++step) {
    w.zero_grad();
    b.zero_grad();
    ad::Graph g;
    ad::Var wv = g.param(w);
    ad::Var probs = ad::softmax(ad::dense(g.constant(x_train), wv, g.param(b)));
    ad::Var ce = ad::scale(
        ad::mean(ad::row_sum(ad::mul(g.constant(t_train), ad::log_clipped(probs)))), -1.0);
    ad::Var loss = ad::add(ce, ad::scale(ad::sum(ad::square(wv)), 0.5 * options.l2));
    g.backward(loss);
    adam.step(params, "leakage probe");
  }
  ad::Graph g;
  Tensor probs =
      ad::softmax(ad::dense(g.constant(x_test), g.constant(w.value), g.constant(b.value)))
          .value();
  return accuracy(y_test, argmax_rows(probs));
}

FairnessReport evaluate(const Tensor& probs, const std::vector<int>& y_true,
                        const std::vector<int>& z) {
  if (probs.cols() != 2) {
    throw DimensionError("evaluate expects n x 2 probabilities, got " +
                         shape_to_string(probs.shape()));
  }
  const std::vector<int> y_pred = argmax_rows(probs);
  std::vector<double> scores(probs.rows());
  for (std::size_t i = 0; i < probs.rows(); ++i) scores[i] = probs.at(i, 1);

  FairnessReport r;
  r.accuracy = accuracy(y_true, y_pred);
  r.auc = auc(y_true, scores);
  r.dp_gap = demographic_parity_gap(y_pred, z);
  r.opp_gap = equal_opportunity_gap(y_true, y_pred, z);
  const GroupRates g = group_rates(y_true, y_pred, z);
  r.positive_rate = g.positive_rate;
  r.tpr = g.tpr;
  r.n_per_group = g.n;
  return r;
}

void to_json(nlohmann::json& j, const FairnessReport& r) {
  j = {{"accuracy", r.accuracy},
       {"auc", r.auc},
       {"dp_gap", r.dp_gap},
       {"opp_gap", r.opp_gap},
       {"probe_accuracy", r.probe_accuracy ? nlohmann::json(*r.probe_accuracy) : nlohmann::json(nullptr)},
       {"positive_rate", r.positive_rate},
       {"tpr", r.tpr},
       {"n_per_group", {r.n_per_group[0], r.n_per_group[1]}}};
}

}  // namespace semifair::metrics
