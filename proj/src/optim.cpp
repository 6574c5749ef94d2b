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

#include "semifair/optim.hpp"

#include <cmath>

namespace semifair::optim {

void Adam::step(const std::vector<Parameter*>& params, const std::string& context) {
  for (const Parameter* p : params) {
    if (!p->trainable) continue;
    for (std::size_t i = 0; i < p->grad.size(); ++i) {
      if (!std::isfinite(p->grad[i])) {
        throw NonFiniteGradient("non-finite gradient in '" + p->name + "' entry " +
                                std::to_string(i) +
                                (context.empty() ? "" : " (" + context + ")"));
      }
    }
  }
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (Parameter* p : params) {
    if (!p->trainable) continue;
    auto [mit, m_new] = m_.try_emplace(p->name, p->value.shape());
    auto [vit, v_new] = v_.try_emplace(p->name, p->value.shape());
    Tensor& m = mit->second;
    Tensor& v = vit->second;
    if (m.shape() != p->value.shape()) {
      throw DimensionError("optimizer state for '" + p->name + "' has shape " +
                           shape_to_string(m.shape()));
    }
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad[i];
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p->value[i] -= config_.lr * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
  }
}

}  // namespace semifair::optim
