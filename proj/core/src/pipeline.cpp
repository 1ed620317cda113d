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
#include "stilts/pipeline.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>

#include "stilts/errors.hpp"
#include "stilts/metrics.hpp"
#include "stilts/optim.hpp"

namespace stilts {

namespace {

HeadKind head_kind(const TaskSpec& task) {
  return task.label_kind == LabelKind::regression ? HeadKind::regression : HeadKind::classification;
}

std::vector<int> truncated_ids(const Vocab& vocab, std::span<const std::string> tokens,
                               std::size_t budget) {
  std::vector<int> ids;
  ids.reserve(std::min(tokens.size(), budget));
  for (std::size_t i = 0; i < tokens.size() && i < budget; ++i) ids.push_back(vocab.id(tokens[i]));
  return ids;
}

double now_seconds() {
  using namespace std::chrono;
  return duration<double>(steady_clock::now().time_since_epoch()).count();
}

/// Cyclic pass over a shuffled index range; reshuffles on wrap-around.
class BatchCycler {
 public:
  BatchCycler(std::size_t n, Rng* rng) : order_(n), pos_(n), rng_(rng) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
  }

  std::size_t next() {
    if (pos_ >= order_.size()) {
      rng_->shuffle(order_);
      pos_ = 0;
    }
    return order_[pos_++];
  }

 private:
  std::vector<std::size_t> order_;
  std::size_t pos_;
  Rng* rng_;
};

using LossFn = std::function<int(Graph&, const BoundParams&, std::span<const BoundHead>)>;

/// One optimizer step: build the loss graph, backprop, and apply Adam to
/// the persistent encoder tensors plus the live heads, in bind order.
double apply_step(EncoderParams& params, std::span<Head* const> heads, AdamState& opt, double lr,
                  const LossFn& build) {
  Graph g;
  BoundParams bp = bind_params(g, params);
  std::vector<BoundHead> bound;
  bound.reserve(heads.size());
  for (Head* h : heads) bound.push_back(bind_head(g, *h));
  int loss = build(g, bp, bound);
  double loss_value = g.value(loss)[0];
  if (!std::isfinite(loss_value)) throw RunAbort("training loss is not finite");
  g.backward(loss);

  std::vector<Tensor*> targets;
  std::vector<const Tensor*> grads;
  params.for_each([&](const std::string&, Tensor& t) { targets.push_back(&t); });
  for (int id : bp.ordered) grads.push_back(&g.grad(id));
  for (std::size_t i = 0; i < heads.size(); ++i) {
    targets.push_back(&heads[i]->w);
    targets.push_back(&heads[i]->b);
    grads.push_back(&g.grad(bound[i].w));
    grads.push_back(&g.grad(bound[i].b));
  }
  adam_step(targets, grads, opt, lr);
  return loss_value;
}

int pooled_feature_nodes(Graph& g, const BoundParams& bp, const EncoderConfig& config,
                         const EncodedExample& enc, Rng* dropout_rng) {
  if (enc.siamese) {
    int ha = encode_nodes(g, bp, config, enc.ids_a, enc.mask_a, dropout_rng);
    int hb = encode_nodes(g, bp, config, enc.ids_b, enc.mask_b, dropout_rng);
    return siamese_feature_nodes(g, bp, ha, enc.ids_a.size(), hb, enc.ids_b.size());
  }
  int h = encode_nodes(g, bp, config, enc.ids_a, enc.mask_a, dropout_rng);
  return pool_nodes(g, h, config.pooling, enc.mask_a);
}

std::size_t capped_size(const std::optional<std::size_t>& cap, std::size_t n) {
  return cap.has_value() ? std::min(*cap, n) : n;
}

}  // namespace

const char* objective_name(Objective o) {
  switch (o) {
    case Objective::lm_only: return "lm_only";
    case Objective::task_only: return "task_only";
    case Objective::task_plus_aux_lm: return "task_plus_aux_lm";
  }
  return "?";
}

Objective objective_from_name(const std::string& name) {
  if (name == "lm_only") return Objective::lm_only;
  if (name == "task_only") return Objective::task_only;
  if (name == "task_plus_aux_lm") return Objective::task_plus_aux_lm;
  throw ConfigError("unknown objective '" + name + "'");
}

void PhaseConfig::validate() const {
  if (epochs < 0) throw ConfigError("phase: epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("phase: batch_size must be positive");
  if (!(base_lr > 0.0) || !std::isfinite(base_lr)) throw ConfigError("phase: base_lr must be positive");
  if (!(warmup_fraction >= 0.0) || warmup_fraction >= 1.0) {
    throw ConfigError("phase: warmup_fraction must lie in [0, 1)");
  }
  if (objective == Objective::task_plus_aux_lm && !(aux_lm_weight > 0.0)) {
    throw ConfigError("phase: aux_lm_weight must be positive under task_plus_aux_lm");
  }
  if (train_cap.has_value() && *train_cap == 0) throw ConfigError("phase: train_cap must be positive");
}

PhaseConfig paper_phase_preset() {
  PhaseConfig p;
  p.batch_size = 24;
  p.base_lr = 2e-5;
  return p;
}

const char* regime_name(Regime r) {
  switch (r) {
    case Regime::baseline: return "baseline";
    case Regime::stilts: return "stilts";
    case Regime::multitask: return "multitask";
    case Regime::multitask_then_target: return "multitask_then_target";
  }
  return "?";
}

Regime regime_from_name(const std::string& name) {
  if (name == "baseline") return Regime::baseline;
  if (name == "stilts") return Regime::stilts;
  if (name == "multitask") return Regime::multitask;
  if (name == "multitask_then_target") return Regime::multitask_then_target;
  throw ConfigError("unknown regime '" + name + "'");
}

std::size_t phase_count(Regime r) {
  return r == Regime::stilts || r == Regime::multitask_then_target ? 2 : 1;
}

void RegimePlan::validate() const {
  target.validate();
  bool needs_intermediate = regime != Regime::baseline;
  if (needs_intermediate && !intermediate.has_value()) {
    throw ConfigError(std::string("plan: regime ") + regime_name(regime) +
                      " requires an intermediate task");
  }
  if (!needs_intermediate && intermediate.has_value()) {
    throw ConfigError("plan: baseline regime forbids an intermediate task");
  }
  if (intermediate.has_value()) intermediate->validate();
  if (phases.size() != phase_count(regime)) {
    throw ConfigError(std::string("plan: regime ") + regime_name(regime) + " takes " +
                      std::to_string(phase_count(regime)) + " phase configs, got " +
                      std::to_string(phases.size()));
  }
  for (const auto& phase : phases) phase.validate();
}

EncodedExample encode_example(const EncoderConfig& config, const TaskSpec& task, const Example& ex,
                              const Vocab& vocab) {
  bool pair = task.arity == Arity::pair;
  if (pair != ex.text_b.has_value()) {
    throw ConfigError("encode_example: example '" + ex.guid + "' does not match task arity");
  }
  EncodedExample out;
  if (pair && config.pooling == Pooling::siamese_pair) {
    if (config.max_len < 3) throw ConfigError("encode_example: max_len too small for a segment");
    out.siamese = true;
    std::size_t budget = config.max_len - 2;
    for (int seg = 0; seg < 2; ++seg) {
      const auto& tokens = seg == 0 ? ex.text_a : *ex.text_b;
      auto& ids = seg == 0 ? out.ids_a : out.ids_b;
      ids.push_back(Vocab::cls);
      for (int id : truncated_ids(vocab, tokens, budget)) ids.push_back(id);
      ids.push_back(Vocab::sep);
    }
    out.mask_a.assign(out.ids_a.size(), 1);
    out.mask_b.assign(out.ids_b.size(), 1);
    return out;
  }
  if (pair) {
    if (config.pooling == Pooling::siamese_pair) {
      throw ConfigError("encode_example: siamese pooling supports pair tasks only");
    }
    if (config.max_len < 5) throw ConfigError("encode_example: max_len too small for a joint pair");
    std::size_t budget = config.max_len - 3;
    std::vector<std::string> a = ex.text_a;
    std::vector<std::string> b = *ex.text_b;
    while (a.size() + b.size() > budget) {
      auto& longer = a.size() >= b.size() ? a : b;
      longer.pop_back();
    }
    out.ids_a.push_back(Vocab::cls);
    for (int id : truncated_ids(vocab, a, budget)) out.ids_a.push_back(id);
    out.ids_a.push_back(Vocab::sep);
    for (int id : truncated_ids(vocab, b, budget)) out.ids_a.push_back(id);
    out.ids_a.push_back(Vocab::sep);
  } else {
    if (config.pooling == Pooling::siamese_pair) {
      throw ConfigError("encode_example: siamese pooling supports pair tasks only");
    }
    if (config.max_len < 3) throw ConfigError("encode_example: max_len too small for a sentence");
    out.ids_a.push_back(Vocab::cls);
    for (int id : truncated_ids(vocab, ex.text_a, config.max_len - 2)) out.ids_a.push_back(id);
    out.ids_a.push_back(Vocab::sep);
  }
  out.mask_a.assign(out.ids_a.size(), 1);
  return out;
}

LmInstance make_lm_instance(const EncoderConfig& config, std::span<const int> ids, const Vocab& vocab,
                            Rng& rng) {
  (void)vocab;
  LmInstance inst;
  inst.ids.assign(ids.begin(), ids.end());
  inst.targets.assign(ids.size(), -1);
  if (config.objective_style == ObjectiveStyle::causal_lm) {
    if (ids.size() < 2) throw ConfigError("make_lm_instance: causal LM needs at least 2 tokens");
    for (std::size_t i = 0; i + 1 < ids.size(); ++i) inst.targets[i] = ids[i + 1];
    return inst;
  }
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    int id = ids[i];
    if (id != Vocab::pad && id != Vocab::cls && id != Vocab::sep) eligible.push_back(i);
  }
  if (eligible.empty()) throw ConfigError("make_lm_instance: nothing to mask");
  std::size_t n_mask = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(0.15 * static_cast<double>(eligible.size()))));
  for (auto pick : rng.sample_without_replacement(eligible.size(), n_mask)) {
    std::size_t pos = eligible[pick];
    inst.targets[pos] = inst.ids[pos];
    inst.ids[pos] = Vocab::mask;
  }
  return inst;
}

int task_loss_nodes(Graph& g, const BoundParams& bp, const EncoderConfig& config, const BoundHead& head,
                    const TaskSpec& task, const EncodedExample& enc, double label, Rng* dropout_rng) {
  int pooled = pooled_feature_nodes(g, bp, config, enc, dropout_rng);
  int logits = head_logits_nodes(g, head, pooled);
  if (task.label_kind == LabelKind::regression) {
    return g.mse(logits, g.constant(Tensor({1, 1}, {label})));
  }
  int target = static_cast<int>(std::lround(label));
  std::array<int, 1> targets{target};
  return g.cross_entropy(logits, targets);
}

int lm_loss_nodes(Graph& g, const BoundParams& bp, const EncoderConfig& config, const LmInstance& inst,
                  Rng* dropout_rng) {
  std::vector<int> mask(inst.ids.size(), 1);
  int h = encode_nodes(g, bp, config, inst.ids, mask, dropout_rng);
  int logits = lm_logits_nodes(g, bp, h);
  return g.cross_entropy(logits, inst.targets);
}

namespace {

/// Shared epoch/batch skeleton for the single-dataset phases.
struct PhaseLoop {
  const PhaseConfig& phase;
  std::size_t n = 0;

  std::size_t steps_per_epoch() const {
    auto b = static_cast<std::size_t>(phase.batch_size);
    return (n + b - 1) / b;
  }
  std::int64_t total_steps() const {
    return static_cast<std::int64_t>(phase.epochs) * static_cast<std::int64_t>(steps_per_epoch());
  }
};

}  // namespace

EncoderParams pretrain_lm(const EncoderConfig& config, std::span<const std::vector<std::string>> corpus,
                          const PhaseConfig& phase, const Vocab& vocab) {
  config.validate();
  phase.validate();
  EncoderParams params = init_params(config, phase.seed);
  if (phase.epochs == 0) return params;
  if (corpus.empty()) throw ConfigError("pretrain_lm: empty corpus");

  std::vector<std::vector<int>> seqs;
  seqs.reserve(corpus.size());
  for (const auto& sentence : corpus) {
    std::vector<int> ids;
    ids.push_back(Vocab::cls);
    for (int id : truncated_ids(vocab, sentence, config.max_len - 2)) ids.push_back(id);
    ids.push_back(Vocab::sep);
    seqs.push_back(std::move(ids));
  }

  AdamState opt;
  Rng shuffle_rng(derive_seed(phase.seed, "shuffle"));
  Rng dropout_rng(derive_seed(phase.seed, "dropout"));
  Rng mlm_rng(derive_seed(phase.seed, "mlm"));
  PhaseLoop loop{phase, seqs.size()};
  std::int64_t step = 0;
  std::vector<double> epoch_losses;
  auto batch = static_cast<std::size_t>(phase.batch_size);

  for (int epoch = 0; epoch < phase.epochs; ++epoch) {
    std::vector<std::size_t> order(seqs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      std::size_t take = std::min(batch, order.size() - start);
      auto ids = std::span(order).subspan(start, take);
      double lr = lr_schedule(step, loop.total_steps(), phase.base_lr, phase.warmup_fraction);
      double loss =
          apply_step(params, {}, opt, lr, [&](Graph& g, const BoundParams& bp, std::span<const BoundHead>) {
            int total = -1;
            for (std::size_t idx : ids) {
              LmInstance inst = make_lm_instance(config, seqs[idx], vocab, mlm_rng);
              int li = lm_loss_nodes(g, bp, config, inst, &dropout_rng);
              total = total < 0 ? li : g.add(total, li);
            }
            return g.scale(total, 1.0 / static_cast<double>(ids.size()));
          });
      loss_sum += loss * static_cast<double>(take);
      ++step;
    }
    epoch_losses.push_back(loss_sum / static_cast<double>(seqs.size()));
    std::fprintf(stderr, "stilts-lab: pretrain epoch %d mean loss %.4f\n", epoch, epoch_losses.back());
  }
  if (epoch_losses.size() >= 2 && epoch_losses[1] > epoch_losses[0]) {
    std::fprintf(stderr, "stilts-lab: warning: LM loss increased over the first two epochs (%.4f -> %.4f)\n",
                 epoch_losses[0], epoch_losses[1]);
  }
  return params;
}

PhaseResult run_phase(EncoderParams params, const TaskSpec& task, const Dataset& data,
                      const PhaseConfig& phase, const Vocab& vocab) {
  phase.validate();
  task.validate();
  if (phase.objective == Objective::lm_only) {
    throw ConfigError("run_phase: lm_only is a pretraining objective; use pretrain_lm");
  }
  const EncoderConfig& config = params.config;
  std::vector<Example> train = phase.train_cap.has_value()
                                   ? downsample(data.train, *phase.train_cap, phase.seed)
                                   : std::vector<Example>(data.train.begin(), data.train.end());
  if (train.empty()) {
    throw ConfigError("run_phase: task '" + task.name + "' has an empty training split");
  }

  PhaseResult out;
  out.head = swap_head(config, head_kind(task), task.n_classes, derive_seed(phase.seed, "head"));
  AdamState opt;  // step 0: a fresh optimizer every phase
  Rng shuffle_rng(derive_seed(phase.seed, "shuffle"));
  Rng dropout_rng(derive_seed(phase.seed, "dropout"));
  Rng mlm_rng(derive_seed(phase.seed, "mlm"));
  PhaseLoop loop{phase, train.size()};
  std::int64_t step = 0;
  auto batch = static_cast<std::size_t>(phase.batch_size);
  std::array<Head*, 1> heads{&out.head};

  for (int epoch = 0; epoch < phase.epochs; ++epoch) {
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      std::size_t take = std::min(batch, order.size() - start);
      auto ids = std::span(order).subspan(start, take);
      double lr = lr_schedule(step, loop.total_steps(), phase.base_lr, phase.warmup_fraction);
      double loss = apply_step(
          params, heads, opt, lr,
          [&](Graph& g, const BoundParams& bp, std::span<const BoundHead> bound) {
            int total = -1;
            for (std::size_t idx : ids) {
              const Example& ex = train[idx];
              EncodedExample enc = encode_example(config, task, ex, vocab);
              int li = task_loss_nodes(g, bp, config, bound[0], task, enc, ex.label, &dropout_rng);
              if (phase.objective == Objective::task_plus_aux_lm) {
                LmInstance inst = make_lm_instance(config, enc.ids_a, vocab, mlm_rng);
                int lm = lm_loss_nodes(g, bp, config, inst, &dropout_rng);
                li = g.add(li, g.scale(lm, phase.aux_lm_weight));
              }
              total = total < 0 ? li : g.add(total, li);
            }
            return g.scale(total, 1.0 / static_cast<double>(ids.size()));
          });
      loss_sum += loss * static_cast<double>(take);
      ++step;
    }
    out.epoch_losses.push_back(loss_sum / static_cast<double>(train.size()));
    if (!data.dev.empty()) {
      auto scores = evaluate(params, out.head, task, data.dev, vocab);
      out.dev_trace.push_back(scores.at(task.primary_metric()));
    }
  }
  out.params = std::move(params);
  return out;
}

double predict_value(const EncoderParams& params, const Head& head, const TaskSpec& task,
                     const Example& ex, const Vocab& vocab) {
  Graph g;
  BoundParams bp = bind_params(g, params);
  BoundHead bh = bind_head(g, head);
  EncodedExample enc = encode_example(params.config, task, ex, vocab);
  int pooled = pooled_feature_nodes(g, bp, params.config, enc, nullptr);
  int logits = head_logits_nodes(g, bh, pooled);
  const Tensor& v = g.value(logits);
  if (task.label_kind == LabelKind::regression) return v[0];
  std::size_t arg = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[arg]) arg = i;
  return static_cast<double>(arg);
}

std::map<std::string, double> evaluate(const EncoderParams& params, const Head& head, const TaskSpec& task,
                                       std::span<const Example> examples, const Vocab& vocab) {
  if (examples.empty()) throw ConfigError("evaluate: empty split");
  std::vector<double> preds, golds;
  preds.reserve(examples.size());
  golds.reserve(examples.size());
  for (const Example& ex : examples) {
    preds.push_back(predict_value(params, head, task, ex, vocab));
    golds.push_back(ex.label);
  }
  try {
    auto values = task_scores(task, preds, golds);
    std::map<std::string, double> out;
    for (std::size_t i = 0; i < task.metrics.size(); ++i) out[task.metrics[i]] = values[i];
    return out;
  } catch (const ConfigError& e) {
    // Collapsed predictions (e.g. a constant regression output) leave a
    // correlation undefined; surface it as a run failure, not a config one.
    throw RunAbort(std::string("evaluate: ") + e.what());
  }
}

RunRecord run_baseline(const EncoderParams& pretrained, const TaskSpec& target, const Dataset& target_data,
                       const PhaseConfig& phase, const Vocab& vocab) {
  double t0 = now_seconds();
  PhaseResult pr = run_phase(pretrained, target, target_data, phase, vocab);
  RunRecord rec;
  rec.regime = Regime::baseline;
  rec.target = target.name;
  rec.seed = phase.seed;
  rec.cap = phase.train_cap;
  rec.train_size = capped_size(phase.train_cap, target_data.train.size());
  rec.dev_scores = evaluate(pr.params, pr.head, target, target_data.dev, vocab);
  rec.primary_score = rec.dev_scores.at(target.primary_metric());
  rec.wall_seconds = now_seconds() - t0;
  return rec;
}

RunRecord run_stilts(const EncoderParams& pretrained, const TaskSpec& intermediate,
                     const Dataset& intermediate_data, const TaskSpec& target, const Dataset& target_data,
                     std::span<const PhaseConfig> phases, const Vocab& vocab) {
  if (phases.size() != 2) throw ConfigError("run_stilts: expected 2 phase configs");
  if (intermediate.name == target.name) {
    throw ConfigError("run_stilts: intermediate task '" + intermediate.name +
                      "' equals the target task; report the baseline result for this cell instead");
  }
  double t0 = now_seconds();
  PhaseResult inter = run_phase(pretrained, intermediate, intermediate_data, phases[0], vocab);
  // The intermediate head is dropped here; the target phase makes its own.
  PhaseResult tgt = run_phase(std::move(inter.params), target, target_data, phases[1], vocab);
  RunRecord rec;
  rec.regime = Regime::stilts;
  rec.intermediate = intermediate.name;
  rec.target = target.name;
  rec.seed = phases[1].seed;
  rec.cap = phases[1].train_cap;
  rec.train_size = capped_size(phases[1].train_cap, target_data.train.size());
  rec.dev_scores = evaluate(tgt.params, tgt.head, target, target_data.dev, vocab);
  rec.primary_score = rec.dev_scores.at(target.primary_metric());
  rec.wall_seconds = now_seconds() - t0;
  return rec;
}

bool draw_first_task(std::size_t n_first, std::size_t n_second, Rng& rng) {
  if (n_first == 0 || n_second == 0) throw ConfigError("draw_first_task: both tasks need examples");
  double p = static_cast<double>(n_first) / static_cast<double>(n_first + n_second);
  return rng.uniform() < p;
}

RunRecord run_multitask(const EncoderParams& pretrained, const RegimePlan& plan,
                        const Dataset& intermediate_data, const Dataset& target_data, const Vocab& vocab) {
  plan.validate();
  if (plan.regime != Regime::multitask && plan.regime != Regime::multitask_then_target) {
    throw ConfigError("run_multitask: plan regime is not a multitask regime");
  }
  const TaskSpec& inter_task = *plan.intermediate;
  const TaskSpec& tgt_task = plan.target;
  const PhaseConfig& joint = plan.phases[0];
  if (joint.objective == Objective::lm_only) {
    throw ConfigError("run_multitask: lm_only is a pretraining objective");
  }
  const EncoderConfig& config = pretrained.config;

  double t0 = now_seconds();
  // The data cap models limited *target* data; the intermediate task is
  // assumed data-rich and runs uncapped.
  std::vector<Example> train_tgt = joint.train_cap.has_value()
                                       ? downsample(target_data.train, *joint.train_cap, joint.seed)
                                       : std::vector<Example>(target_data.train.begin(),
                                                              target_data.train.end());
  std::vector<Example> train_int(intermediate_data.train.begin(), intermediate_data.train.end());
  if (train_int.empty() || train_tgt.empty()) {
    throw ConfigError("run_multitask: both training splits must be non-empty");
  }

  EncoderParams params = pretrained;
  Head head_int = swap_head(config, head_kind(inter_task), inter_task.n_classes,
                            derive_seed(joint.seed, "head-intermediate"));
  Head head_tgt =
      swap_head(config, head_kind(tgt_task), tgt_task.n_classes, derive_seed(joint.seed, "head-target"));
  AdamState opt;
  Rng draw_rng(derive_seed(joint.seed, "multitask-draw"));
  Rng shuffle_int(derive_seed(joint.seed, "shuffle-intermediate"));
  Rng shuffle_tgt(derive_seed(joint.seed, "shuffle-target"));
  Rng dropout_rng(derive_seed(joint.seed, "dropout"));
  Rng mlm_rng(derive_seed(joint.seed, "mlm"));
  BatchCycler cycle_int(train_int.size(), &shuffle_int);
  BatchCycler cycle_tgt(train_tgt.size(), &shuffle_tgt);

  std::size_t n_total = train_int.size() + train_tgt.size();
  auto batch = static_cast<std::size_t>(joint.batch_size);
  std::size_t steps_per_epoch = (n_total + batch - 1) / batch;
  std::int64_t total_steps =
      static_cast<std::int64_t>(joint.epochs) * static_cast<std::int64_t>(steps_per_epoch);
  std::array<Head*, 2> heads{&head_int, &head_tgt};
  std::int64_t step = 0;

  for (int epoch = 0; epoch < joint.epochs; ++epoch) {
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      bool pick_int = draw_first_task(train_int.size(), train_tgt.size(), draw_rng);
      const TaskSpec& task = pick_int ? inter_task : tgt_task;
      const std::vector<Example>& pool = pick_int ? train_int : train_tgt;
      BatchCycler& cycler = pick_int ? cycle_int : cycle_tgt;
      std::vector<std::size_t> batch_ids(std::min(batch, pool.size()));
      for (auto& b : batch_ids) b = cycler.next();
      double lr = lr_schedule(step, total_steps, joint.base_lr, joint.warmup_fraction);
      apply_step(params, heads, opt, lr,
                 [&](Graph& g, const BoundParams& bp, std::span<const BoundHead> bound) {
                   const BoundHead& bh = pick_int ? bound[0] : bound[1];
                   int total = -1;
                   for (std::size_t idx : batch_ids) {
                     const Example& ex = pool[idx];
                     EncodedExample enc = encode_example(config, task, ex, vocab);
                     int li = task_loss_nodes(g, bp, config, bh, task, enc, ex.label, &dropout_rng);
                     if (joint.objective == Objective::task_plus_aux_lm) {
                       LmInstance inst = make_lm_instance(config, enc.ids_a, vocab, mlm_rng);
                       li = g.add(li, g.scale(lm_loss_nodes(g, bp, config, inst, &dropout_rng),
                                              joint.aux_lm_weight));
                     }
                     total = total < 0 ? li : g.add(total, li);
                   }
                   return g.scale(total, 1.0 / static_cast<double>(batch_ids.size()));
                 });
      ++step;
    }
  }

  RunRecord rec;
  rec.regime = plan.regime;
  rec.intermediate = inter_task.name;
  rec.target = tgt_task.name;
  rec.seed = plan.phases.back().seed;
  rec.cap = plan.phases.back().train_cap;
  rec.train_size = capped_size(plan.phases.back().train_cap, target_data.train.size());

  if (plan.regime == Regime::multitask_then_target) {
    PhaseResult pr = run_phase(std::move(params), tgt_task, target_data, plan.phases[1], vocab);
    rec.dev_scores = evaluate(pr.params, pr.head, tgt_task, target_data.dev, vocab);
  } else {
    rec.dev_scores = evaluate(params, head_tgt, tgt_task, target_data.dev, vocab);
  }
  rec.primary_score = rec.dev_scores.at(tgt_task.primary_metric());
  rec.wall_seconds = now_seconds() - t0;
  return rec;
}

RunRecord run_regime(const EncoderParams& pretrained, const RegimePlan& plan,
                     const Dataset* intermediate_data, const Dataset& target_data, const Vocab& vocab,
                     std::uint64_t record_seed) {
  plan.validate();
  RunRecord rec;
  switch (plan.regime) {
    case Regime::baseline:
      rec = run_baseline(pretrained, plan.target, target_data, plan.phases[0], vocab);
      break;
    case Regime::stilts:
      if (intermediate_data == nullptr) throw ConfigError("run_regime: stilts needs intermediate data");
      rec = run_stilts(pretrained, *plan.intermediate, *intermediate_data, plan.target, target_data,
                       plan.phases, vocab);
      break;
    case Regime::multitask:
    case Regime::multitask_then_target:
      if (intermediate_data == nullptr) throw ConfigError("run_regime: multitask needs intermediate data");
      rec = run_multitask(pretrained, plan, *intermediate_data, target_data, vocab);
      break;
  }
  rec.seed = record_seed;
  return rec;
}

}  // namespace stilts
