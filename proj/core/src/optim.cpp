/*
 * Copyright 2026 The stilts-lab Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#include "stilts/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "stilts/errors.hpp"

namespace stilts {

void adam_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads, AdamState& state,
               double lr) {
  if (params.size() != grads.size()) {
    throw std::invalid_argument("adam_step: " + std::to_string(params.size()) + " params vs " +
                                std::to_string(grads.size()) + " grads");
  }
  if (state.m.empty()) {
    state.m.reserve(params.size());
    state.v.reserve(params.size());
    for (const Tensor* p : params) {
      state.m.emplace_back(p->shape());
      state.v.emplace_back(p->shape());
    }
  }
  if (state.m.size() != params.size()) {
    throw std::invalid_argument("adam_step: state tracks " + std::to_string(state.m.size()) +
                                " params, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->same_shape(*grads[i]) || !params[i]->same_shape(state.m[i])) {
      throw std::invalid_argument("adam_step: shape mismatch at param " + std::to_string(i) + ": " +
                                  params[i]->shape_str() + " vs " + grads[i]->shape_str());
    }
    if (!grads[i]->all_finite()) {
      throw RunAbort("adam_step: non-finite gradient at param " + std::to_string(i) + " (step " +
                     std::to_string(state.step + 1) + ")");
    }
  }

  state.step += 1;
  double t = static_cast<double>(state.step);
  double bc1 = 1.0 - std::pow(state.beta1, t);
  double bc2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = *grads[i];
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g[k];
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g[k] * g[k];
      double m_hat = m[k] / bc1;
      double v_hat = v[k] / bc2;
      p[k] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

double lr_schedule(std::int64_t step, std::int64_t total_steps, double base_lr, double warmup_fraction) {
  if (total_steps <= 0) throw ConfigError("lr_schedule: total_steps must be positive");
  if (step < 0 || step > total_steps) {
    throw ConfigError("lr_schedule: step " + std::to_string(step) + " outside [0, " +
                      std::to_string(total_steps) + "]");
  }
  if (warmup_fraction < 0.0 || warmup_fraction >= 1.0) {
    throw ConfigError("lr_schedule: warmup_fraction must be in [0, 1)");
  }
  double s = static_cast<double>(step);
  double total = static_cast<double>(total_steps);
  double warm = warmup_fraction * total;
  if (s < warm) return base_lr * s / warm;
  return base_lr * (total - s) / (total - warm);
}

double grad_check(const LossBuilder& build, const std::vector<Tensor>& params, double fd_step) {
  auto eval = [&](const std::vector<Tensor>& ps) {
    Graph g;
    std::vector<int> ids;
    ids.reserve(ps.size());
    for (const Tensor& p : ps) ids.push_back(g.parameter(p));
    int loss = build(g, ids);
    return std::pair<Graph, int>{std::move(g), loss};
  };

  auto [g, loss] = eval(params);
  g.backward(loss);
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (int id : g.parameters()) analytic.push_back(g.grad(id));

  double worst = 0.0;
  std::vector<Tensor> probe = params;
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (std::size_t k = 0; k < params[i].size(); ++k) {
      double saved = probe[i][k];
      probe[i][k] = saved + fd_step;
      auto [gp, lp] = eval(probe);
      probe[i][k] = saved - fd_step;
      auto [gm, lm] = eval(probe);
      probe[i][k] = saved;
      double numeric = (gp.value(lp)[0] - gm.value(lm)[0]) / (2.0 * fd_step);
      double a = analytic[i][k];
      double rel = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace stilts
