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
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "stilts/graph.hpp"
#include "stilts/tensor.hpp"

namespace stilts {

/// Adam with bias correction. Accumulators are aligned by index with the
/// parameter list passed to adam_step, which must keep a stable order
/// across steps (EncoderParams::for_each provides one). A fresh state has
/// step 0 and no accumulators; the first step allocates them as zeros.
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

/// One bias-corrected Adam update:
///   p -= lr * m_hat / (sqrt(v_hat) + eps)
/// Throws RunAbort when any gradient entry is non-finite; the harness
/// counts such runs as degenerate rather than crashing a sweep.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads, AdamState& state,
               double lr);

/// Linear warmup from 0 to base_lr over warmup_fraction * total_steps,
/// then linear decay to 0 at total_steps. Throws ConfigError when
/// total_steps == 0 or step is outside [0, total_steps].
double lr_schedule(std::int64_t step, std::int64_t total_steps, double base_lr, double warmup_fraction);

/// Builds a scalar loss over parameter nodes created from `params`
/// (same order) and returns the loss node id.
using LossBuilder = std::function<int(Graph&, const std::vector<int>&)>;

/// Central finite differences against backward(), coordinate by
/// coordinate. Returns the max of |analytic - numeric| / max(1, |analytic|,
/// |numeric|) over all parameter entries; 0 for an empty parameter vector.
double grad_check(const LossBuilder& build, const std::vector<Tensor>& params, double fd_step = 1e-5);

}  // namespace stilts
