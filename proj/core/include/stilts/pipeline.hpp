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
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stilts/datakit.hpp"
#include "stilts/encoder.hpp"

namespace stilts {

enum class Objective { lm_only, task_only, task_plus_aux_lm };

const char* objective_name(Objective o);
Objective objective_from_name(const std::string& name);

/// One training phase. Defaults are the desk-scale recipe; the reference
/// recipe from the source papers is available as paper_phase_preset().
struct PhaseConfig {
  Objective objective = Objective::task_only;
  double aux_lm_weight = 0.5;  // loss = task + weight * LM when task_plus_aux_lm
  int epochs = 3;
  int batch_size = 32;
  double base_lr = 3e-4;
  double warmup_fraction = 0.1;
  std::uint64_t seed = 0;
  /// Downsampling cap on the training split, re-drawn from the seed.
  std::optional<std::size_t> train_cap;

  void validate() const;

  bool operator==(const PhaseConfig&) const = default;
};

/// Batch 24, learning rate 2e-5, three epochs.
PhaseConfig paper_phase_preset();

enum class Regime { baseline, stilts, multitask, multitask_then_target };

const char* regime_name(Regime r);
Regime regime_from_name(const std::string& name);
/// Training phases a regime consumes (baseline/multitask 1, others 2).
std::size_t phase_count(Regime r);

struct RegimePlan {
  Regime regime = Regime::baseline;
  std::optional<TaskSpec> intermediate;
  TaskSpec target;
  std::vector<PhaseConfig> phases;  // one per phase, in training order

  /// Checks the intermediate-task presence rule and phase arity.
  void validate() const;
};

/// Result of one complete regime run, as persisted and aggregated.
struct RunRecord {
  Regime regime = Regime::baseline;
  std::optional<std::string> intermediate;
  std::string target;
  std::uint64_t seed = 0;
  std::optional<std::size_t> cap;
  std::size_t train_size = 0;  // target training rows actually used
  std::map<std::string, double> dev_scores;
  double primary_score = 0.0;
  bool degenerate = false;
  bool aborted = false;
  double wall_seconds = 0.0;

  bool operator==(const RunRecord&) const = default;
};

// ------------------------------------------------------------ encoding

/// Token ids ready for the encoder. Joint encoding packs
/// [CLS] a [SEP] (b [SEP]); siamese pooling keeps two segments.
struct EncodedExample {
  std::vector<int> ids_a;
  std::vector<int> mask_a;
  std::vector<int> ids_b;  // empty unless siamese
  std::vector<int> mask_b;
  bool siamese = false;
};

EncodedExample encode_example(const EncoderConfig& config, const TaskSpec& task, const Example& ex,
                              const Vocab& vocab);

/// One LM training instance. masked_lm replaces 15% of the real tokens
/// (at least one) with [MASK]; causal_lm predicts each next token.
/// targets[i] is the class id predicted at position i, -1 = not scored.
struct LmInstance {
  std::vector<int> ids;
  std::vector<int> targets;
};

LmInstance make_lm_instance(const EncoderConfig& config, std::span<const int> ids, const Vocab& vocab,
                            Rng& rng);

// ----------------------------------------------------------- graph bits

/// Scalar task-loss node for one example: cross-entropy for
/// classification heads, mean squared error for regression heads.
int task_loss_nodes(Graph& g, const BoundParams& bp, const EncoderConfig& config, const BoundHead& head,
                    const TaskSpec& task, const EncodedExample& enc, double label, Rng* dropout_rng);

/// Scalar LM-loss node for one instance.
int lm_loss_nodes(Graph& g, const BoundParams& bp, const EncoderConfig& config, const LmInstance& inst,
                  Rng* dropout_rng);

// ------------------------------------------------------------- training

struct PhaseResult {
  EncoderParams params;
  Head head;
  std::vector<double> epoch_losses;  // mean per-example train loss
  std::vector<double> dev_trace;     // primary dev metric after each epoch
};

/// Language-model pretraining from fresh init_params(config, phase.seed).
/// 0 epochs returns the initialization untouched.
EncoderParams pretrain_lm(const EncoderConfig& config, std::span<const std::vector<std::string>> corpus,
                          const PhaseConfig& phase, const Vocab& vocab);

/// One supervised phase: fresh head, fresh optimizer at step 0, the whole
/// encoder updated, epochs * ceil(n/batch) steps under lr_schedule, dev
/// evaluated after each epoch. The input params are copied, never mutated.
PhaseResult run_phase(EncoderParams params, const TaskSpec& task, const Dataset& data,
                      const PhaseConfig& phase, const Vocab& vocab);

/// Dev-set metric values for the task's metric list.
std::map<std::string, double> evaluate(const EncoderParams& params, const Head& head, const TaskSpec& task,
                                       std::span<const Example> examples, const Vocab& vocab);

/// Model output for one example: predicted class id, or the raw
/// regression value.
double predict_value(const EncoderParams& params, const Head& head, const TaskSpec& task,
                     const Example& ex, const Vocab& vocab);

/// Single-phase fine-tune of the target task (the standard recipe).
RunRecord run_baseline(const EncoderParams& pretrained, const TaskSpec& target, const Dataset& target_data,
                       const PhaseConfig& phase, const Vocab& vocab);

/// Intermediate phase (head discarded) followed by a target phase with a
/// new fresh head. Same-task pairings are rejected; report the baseline
/// for those cells instead.
RunRecord run_stilts(const EncoderParams& pretrained, const TaskSpec& intermediate,
                     const Dataset& intermediate_data, const TaskSpec& target, const Dataset& target_data,
                     std::span<const PhaseConfig> phases, const Vocab& vocab);

/// Proportional-sampling joint phase with one live head per task;
/// multitask_then_target appends a target-only phase with a fresh
/// optimizer and head.
RunRecord run_multitask(const EncoderParams& pretrained, const RegimePlan& plan,
                        const Dataset& intermediate_data, const Dataset& target_data, const Vocab& vocab);

/// Dispatch on plan.regime. record_seed identifies the run (the restart
/// seed); the harness derives each phase's seed from it separately.
RunRecord run_regime(const EncoderParams& pretrained, const RegimePlan& plan,
                     const Dataset* intermediate_data, const Dataset& target_data, const Vocab& vocab,
                     std::uint64_t record_seed);

/// One proportional-sampling draw: true picks the first task, with
/// probability n_first / (n_first + n_second).
bool draw_first_task(std::size_t n_first, std::size_t n_second, Rng& rng);

}  // namespace stilts
