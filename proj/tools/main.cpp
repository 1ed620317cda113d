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

// stilts-lab command line. Exit codes: 0 success, 1 usage, 2 bad data
// or configuration, 3 runtime abort.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "stilts/datakit.hpp"
#include "stilts/encoder.hpp"
#include "stilts/errors.hpp"
#include "stilts/harness.hpp"
#include "stilts/metrics.hpp"
#include "stilts/optim.hpp"
#include "stilts/pipeline.hpp"
#include "stilts/rng.hpp"
#include "stilts/store.hpp"

namespace fs = std::filesystem;
using namespace stilts;

namespace {

// ------------------------------------------------------------- options

/// Flags shared by the subcommands. The dedicated flags are sugar over
/// --set: they override the matching manifest key and are echoed into
/// the stored manifest copy the same way.
struct CommonOpts {
  std::string manifest_path;
  std::vector<std::string> sets;
  std::optional<int> restarts;
  std::optional<std::size_t> cap;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::string out;
};

void attach_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--manifest", opts.manifest_path, "experiment manifest (JSON document)");
  cmd->add_option("--set", opts.sets, "dotted-path override, key=value (repeatable)");
  cmd->add_option("--restarts", opts.restarts, "override the manifest restart count");
  cmd->add_option("--cap", opts.cap, "override the target training cap");
  cmd->add_option("--seed", opts.seed, "override the base seed");
  cmd->add_option("--workers", opts.workers, "override the worker count");
  cmd->add_option("--out", opts.out, "override the output directory");
}

std::map<std::string, std::string> overrides_from(const CommonOpts& opts) {
  std::map<std::string, std::string> overrides;
  for (const std::string& pair : opts.sets) {
    const std::size_t eq = pair.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("malformed --set '" + pair + "', expected key=value");
    }
    overrides[pair.substr(0, eq)] = pair.substr(eq + 1);
  }
  if (opts.restarts) overrides["restarts"] = std::to_string(*opts.restarts);
  if (opts.cap) overrides["cap"] = std::to_string(*opts.cap);
  if (opts.seed) overrides["seed"] = std::to_string(*opts.seed);
  if (opts.workers) overrides["workers"] = std::to_string(*opts.workers);
  if (!opts.out.empty()) overrides["out_dir"] = opts.out;
  return overrides;
}

Manifest manifest_from(const CommonOpts& opts) {
  const auto overrides = overrides_from(opts);
  if (opts.manifest_path.empty()) return manifest_from_json("{}", overrides);
  return load_manifest(opts.manifest_path, overrides);
}

// ------------------------------------------------------- materializing

std::vector<std::vector<std::string>> corpus_for(const Manifest& m) {
  if (m.corpus_source == "desk") return gen_desk_corpus(m.corpus_sentences, m.corpus_seed);
  return load_sentence_corpus(m.corpus_source);
}

Vocab vocab_for(const Manifest& m, std::span<const std::vector<std::string>> corpus) {
  if (m.vocab_source == "synth") return build_vocab(synth_vocabulary_corpus(), m.vocab_max);
  if (m.vocab_source == "desk") return build_vocab(corpus, m.vocab_max);
  return load_vocab(m.vocab_source);
}

/// Generates or loads one task's splits and renames the spec to the
/// manifest key, which is the name plans and reports go by.
Dataset dataset_for(const TaskSource& src, std::span<const std::vector<std::string>> corpus) {
  Dataset ds;
  if (src.generator == "synth-intermediate") {
    ds = gen_synthetic_pair_tasks(src.seed, src.relatedness).intermediate;
  } else if (src.generator == "synth-target") {
    ds = gen_synthetic_pair_tasks(src.seed, src.relatedness).target;
  } else if (src.generator == "fake-sentences") {
    const auto own = src.corpus == "desk" ? std::vector<std::vector<std::string>>()
                                          : load_sentence_corpus(src.corpus);
    ds = gen_fake_sentences(src.corpus == "desk" ? corpus : std::span(own), src.fake_n, src.seed);
    auto [rest, dev] = split_off_dev(ds.train, 0.2, derive_seed(src.seed, "dev-split"));
    ds.train = std::move(rest);
    ds.dev = std::move(dev);
  } else {
    ds.task = src.spec;
    ds.train = load_tsv(src.train_path, src.spec, src.columns);
    if (!src.dev_path.empty()) ds.dev = load_tsv(src.dev_path, src.spec, src.columns);
  }
  ds.task.name = src.name;
  validate_dataset(ds);
  return ds;
}

const TaskSource& task_source(const Manifest& m, const std::string& name) {
  for (const TaskSource& t : m.tasks) {
    if (t.name == name) return t;
  }
  throw ConfigError("plan references unknown task '" + name + "'");
}

/// Datasets for every task the given plans touch, keyed by name.
std::map<std::string, Dataset> datasets_for_plans(const Manifest& m,
                                                  std::span<const PlanSpec> plans,
                                                  std::span<const std::vector<std::string>> corpus) {
  std::map<std::string, Dataset> data;
  const auto add = [&](const std::string& name) {
    if (!data.count(name)) data.emplace(name, dataset_for(task_source(m, name), corpus));
  };
  for (const PlanSpec& p : plans) {
    add(p.target);
    if (p.intermediate) add(*p.intermediate);
  }
  return data;
}

/// PlanSpec to a runnable RegimePlan. Empty phase lists get the desk
/// defaults; a manifest-level cap lands on the final phase.
RegimePlan plan_for(const PlanSpec& spec, const Manifest& m,
                    const std::map<std::string, Dataset>& data) {
  RegimePlan plan;
  plan.regime = spec.regime;
  plan.target = data.at(spec.target).task;
  if (spec.intermediate) plan.intermediate = data.at(*spec.intermediate).task;
  plan.phases = spec.phases;
  if (plan.phases.empty()) plan.phases.resize(phase_count(spec.regime));
  if (m.cap) plan.phases.back().train_cap = m.cap;
  plan.validate();
  return plan;
}

EncoderConfig config_for(const Manifest& m, const Vocab& vocab) {
  EncoderConfig config = m.encoder;
  config.vocab_size = vocab.size();  // the built vocabulary wins
  config.validate();
  return config;
}

// ----------------------------------------------------------- artifacts

fs::path out_path(const Manifest& m, const std::string& name) {
  return fs::path(m.out_dir) / name;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  out << text;
  out.flush();
  if (!out) throw RunAbort("cannot write '" + path.string() + "'");
}

/// Every artifact-producing subcommand stores the canonical manifest
/// (overrides echoed) next to its outputs.
void write_manifest_copy(const Manifest& m) {
  if (!m.out_dir.empty()) fs::create_directories(m.out_dir);
  write_text(out_path(m, "manifest.json"), manifest_json(m));
}

void store_record(const RunRecord& rec, const std::string& hash, const Manifest& m) {
  append_result(rec, hash, out_path(m, "results.jsonl").string());
  write_text(out_path(m, result_filename(rec)), run_record_json(rec, hash) + "\n");
}

std::string row_label(const RunRecord& rec) {
  std::string label = regime_name(rec.regime);
  if (rec.intermediate) label += ":" + *rec.intermediate;
  return label;
}

// --------------------------------------------------------- subcommands

int cmd_gen_fake(const CommonOpts& opts) {
  const Manifest m = manifest_from(opts);
  const auto corpus = corpus_for(m);
  std::vector<TaskSource> tasks;
  for (const TaskSource& t : m.tasks) {
    if (t.generator == "fake-sentences") tasks.push_back(t);
  }
  if (tasks.empty()) {
    TaskSource def;
    def.name = "fake-sent";
    def.generator = "fake-sentences";
    def.seed = m.seed;
    tasks.push_back(def);
  }
  write_manifest_copy(m);
  for (const TaskSource& t : tasks) {
    const Dataset ds = dataset_for(t, corpus);
    const fs::path train = out_path(m, t.name + "_train.tsv");
    const fs::path dev = out_path(m, t.name + "_dev.tsv");
    save_tsv(train.string(), ds.task, ds.train);
    save_tsv(dev.string(), ds.task, ds.dev);
    std::printf("%s: %zu train + %zu dev rows -> %s, %s\n", t.name.c_str(), ds.train.size(),
                ds.dev.size(), train.string().c_str(), dev.string().c_str());
  }
  return 0;
}

int cmd_gen_synth(const CommonOpts& opts) {
  const Manifest m = manifest_from(opts);
  std::vector<TaskSource> tasks;
  for (const TaskSource& t : m.tasks) {
    if (t.generator == "synth-intermediate" || t.generator == "synth-target") tasks.push_back(t);
  }
  if (tasks.empty()) {
    TaskSource itm;
    itm.name = "synth-itm";
    itm.generator = "synth-intermediate";
    itm.seed = m.seed;
    TaskSource tgt = itm;
    tgt.name = "synth-tgt";
    tgt.generator = "synth-target";
    tasks = {itm, tgt};
  }
  write_manifest_copy(m);
  for (const TaskSource& t : tasks) {
    const Dataset ds = dataset_for(t, {});
    const fs::path train = out_path(m, t.name + "_train.tsv");
    const fs::path dev = out_path(m, t.name + "_dev.tsv");
    save_tsv(train.string(), ds.task, ds.train);
    save_tsv(dev.string(), ds.task, ds.dev);
    std::printf("%s: %zu train + %zu dev rows -> %s, %s\n", t.name.c_str(), ds.train.size(),
                ds.dev.size(), train.string().c_str(), dev.string().c_str());
  }
  return 0;
}

int cmd_build_vocab(const CommonOpts& opts) {
  const Manifest m = manifest_from(opts);
  const auto corpus = corpus_for(m);
  const Vocab vocab = vocab_for(m, corpus);
  write_manifest_copy(m);
  const fs::path path = out_path(m, "vocab.txt");
  save_vocab(vocab, path.string());
  std::printf("vocab: %zu tokens -> %s\n", vocab.size(), path.string().c_str());
  return 0;
}

int cmd_pretrain(const CommonOpts& opts) {
  const Manifest m = manifest_from(opts);
  const auto corpus = corpus_for(m);
  const Vocab vocab = vocab_for(m, corpus);
  const EncoderConfig config = config_for(m, vocab);
  const EncoderParams params = pretrain_lm(config, corpus, m.pretrain, vocab);
  Provenance prov;
  prov.phases = {"pretrain"};
  prov.seeds = {m.pretrain.seed};
  prov.manifest_hash = manifest_hash(m);
  write_manifest_copy(m);
  const fs::path path = out_path(m, "pretrained.stlt");
  save_checkpoint(params, prov, path.string());
  std::printf("pretrained %zu parameters (%d epochs on %zu sentences) -> %s\n",
              params.param_count(), m.pretrain.epochs, corpus.size(), path.string().c_str());
  return 0;
}

/// Shared setup for run/sweep/grid: corpus, vocab, datasets, plans and
/// the in-process pretrained encoder. Pretraining is recomputed rather
/// than loaded so results depend on the manifest alone.
struct Bench {
  Manifest manifest;
  std::string hash;
  Vocab vocab;
  std::map<std::string, Dataset> data;
  std::vector<RegimePlan> plans;
  EncoderParams pretrained;
};

Bench bench_for(const Manifest& m) {
  if (m.plans.empty()) throw ConfigError("manifest defines no plans");
  Bench b;
  b.manifest = m;
  b.hash = manifest_hash(m);
  const auto corpus = corpus_for(m);
  b.vocab = vocab_for(m, corpus);
  b.data = datasets_for_plans(m, m.plans, corpus);
  const EncoderConfig config = config_for(m, b.vocab);
  for (const PlanSpec& spec : m.plans) b.plans.push_back(plan_for(spec, m, b.data));
  b.pretrained = pretrain_lm(config, corpus, m.pretrain, b.vocab);
  return b;
}

const Dataset* intermediate_of(const Bench& b, std::size_t plan_index) {
  const PlanSpec& spec = b.manifest.plans[plan_index];
  return spec.intermediate ? &b.data.at(*spec.intermediate) : nullptr;
}

int cmd_run(const CommonOpts& opts) {
  const Bench b = bench_for(manifest_from(opts));
  const Manifest& m = b.manifest;
  const RegimePlan seeded = restart_plan(b.plans.front(), m.seed);
  const RunRecord rec = run_regime(b.pretrained, seeded, intermediate_of(b, 0),
                                   b.data.at(m.plans.front().target), b.vocab, m.seed);
  write_manifest_copy(m);
  store_record(rec, b.hash, m);
  std::printf("%s on %s, seed %llu: %s %.4f -> %s\n", row_label(rec).c_str(), rec.target.c_str(),
              static_cast<unsigned long long>(rec.seed),
              b.data.at(rec.target).task.primary_metric().c_str(), rec.primary_score,
              result_filename(rec).c_str());
  return 0;
}

int cmd_sweep(const CommonOpts& opts) {
  const Bench b = bench_for(manifest_from(opts));
  const Manifest& m = b.manifest;
  const SweepSummary sum =
      run_restarts(b.pretrained, b.plans.front(), intermediate_of(b, 0),
                   b.data.at(m.plans.front().target), b.vocab, m.restarts, m.seed,
                   effective_workers(m.workers), m.epsilon);
  write_manifest_copy(m);
  for (const RunRecord& rec : sum.records) store_record(rec, b.hash, m);
  write_text(out_path(m, "stability.csv"), stability_export({&sum, 1}));
  const RunRecord& first = sum.records.front();
  std::printf("%s on %s, %d restarts: mean %.4f std %.4f min %.4f max %.4f best seed %llu"
              ", degenerate %zu\n",
              row_label(first).c_str(), first.target.c_str(), m.restarts, sum.mean, sum.std_dev,
              sum.min_score, sum.max_score, static_cast<unsigned long long>(sum.best_seed),
              sum.degenerate);
  return 0;
}

int cmd_grid(const CommonOpts& opts) {
  const Bench b = bench_for(manifest_from(opts));
  const Manifest& m = b.manifest;
  std::vector<SweepSummary> sweeps;
  const Grid grid = comparison_grid(b.pretrained, b.plans, b.data, b.vocab, m.restarts, m.seed,
                                    effective_workers(m.workers), m.epsilon, &sweeps);
  write_manifest_copy(m);
  for (const SweepSummary& sum : sweeps) {
    for (const RunRecord& rec : sum.records) store_record(rec, b.hash, m);
  }
  write_text(out_path(m, "grid.csv"), render_grid_csv(grid));
  write_text(out_path(m, "stability.csv"), stability_export(sweeps));
  std::fputs(render_grid_text(grid).c_str(), stdout);
  return 0;
}

// ------------------------------------------------------------- report

/// Restart groups reassembled from stored records: one sweep per
/// (regime, intermediate, target), records in ascending seed order.
std::vector<SweepSummary> sweeps_from_records(std::span<const RunRecord> recs) {
  std::map<std::pair<std::string, std::string>, std::vector<RunRecord>> groups;
  for (const RunRecord& rec : recs) groups[{row_label(rec), rec.target}].push_back(rec);
  std::vector<SweepSummary> sweeps;
  for (auto& [key, records] : groups) {
    std::sort(records.begin(), records.end(),
              [](const RunRecord& a, const RunRecord& b) { return a.seed < b.seed; });
    SweepSummary s;
    s.records = std::move(records);
    for (const RunRecord& rec : s.records) s.scores.push_back(rec.primary_score);
    double sum = 0.0;
    for (double v : s.scores) sum += v;
    s.mean = sum / static_cast<double>(s.scores.size());
    double sq = 0.0;
    for (double v : s.scores) sq += (v - s.mean) * (v - s.mean);
    s.std_dev = std::sqrt(sq / static_cast<double>(s.scores.size()));
    s.min_score = *std::min_element(s.scores.begin(), s.scores.end());
    s.max_score = *std::max_element(s.scores.begin(), s.scores.end());
    s.best_seed = s.records.front().seed;
    double best = s.records.front().primary_score;
    for (const RunRecord& rec : s.records) {
      if (rec.primary_score > best) {
        best = rec.primary_score;
        s.best_seed = rec.seed;
      }
    }
    for (const RunRecord& rec : s.records) {
      if (rec.degenerate) ++s.degenerate;
    }
    sweeps.push_back(std::move(s));
  }
  return sweeps;
}

/// Rebuilds the comparison table from stored records alone. Metric
/// values inside a cell follow sorted metric-name order; the cell comes
/// from each sweep's best restart. Same-task holes are filled from the
/// baseline row exactly like a live grid.
Grid grid_from_records(std::span<const RunRecord> recs) {
  std::set<std::string> targets;
  for (const RunRecord& rec : recs) targets.insert(rec.target);
  const std::vector<std::string> roster(targets.begin(), targets.end());

  struct RowData {
    std::optional<std::string> intermediate;
    std::map<std::string, const RunRecord*> best;
  };
  std::map<std::string, RowData> by_label;
  for (const RunRecord& rec : recs) {
    RowData& row = by_label[row_label(rec)];
    row.intermediate = rec.intermediate;
    const RunRecord*& best = row.best[rec.target];
    if (best == nullptr || rec.primary_score > best->primary_score ||
        (rec.primary_score == best->primary_score && rec.seed < best->seed)) {
      best = &rec;
    }
  }

  std::vector<ScoreRow> rows;
  bool any_hole = false;
  for (const auto& [label, data] : by_label) {
    ScoreRow row;
    row.label = label;
    row.intermediate_task = data.intermediate;
    for (const std::string& target : roster) {
      const auto it = data.best.find(target);
      if (it != data.best.end()) {
        for (const auto& [metric, value] : it->second->dev_scores) {
          (void)metric;
          row.scores[target].push_back(value);
        }
      } else if (data.intermediate && *data.intermediate == target) {
        row.scores[target] = {};  // placeholder, substituted below
        any_hole = true;
      } else {
        throw ConfigError("stored results for row '" + label + "' are missing task '" + target +
                          "'");
      }
    }
    rows.push_back(std::move(row));
  }

  const auto baseline_it =
      std::find_if(rows.begin(), rows.end(),
                   [](const ScoreRow& r) { return r.label == regime_name(Regime::baseline); });
  const bool has_baseline = baseline_it != rows.end();
  if (has_baseline) std::rotate(rows.begin(), baseline_it, baseline_it + 1);
  if (any_hole) {
    if (!has_baseline) {
      throw ConfigError("same-task cells need a baseline row to substitute from");
    }
    for (ScoreRow& row : rows) {
      if (row.intermediate_task && row.scores.count(*row.intermediate_task)) {
        row.scores[*row.intermediate_task] = rows.front().scores.at(*row.intermediate_task);
      }
    }
    const ScoreRow baseline = rows.front();
    rows = same_task_substitution(std::move(rows), baseline);
  }
  rows.push_back(best_of_each(rows));

  Grid grid;
  grid.roster = roster;
  grid.rows = std::move(rows);
  return grid;
}

int cmd_report(const CommonOpts& opts) {
  const Manifest m = manifest_from(opts);
  const fs::path results = out_path(m, "results.jsonl");
  const std::vector<StoredRecord> stored = load_results(results.string());
  if (stored.empty()) throw ConfigError("no results in '" + results.string() + "'");
  const std::vector<RunRecord> recs = require_single_manifest(stored);

  const Grid grid = grid_from_records(recs);
  const std::vector<SweepSummary> sweeps = sweeps_from_records(recs);
  const std::string text = render_grid_text(grid);
  write_text(out_path(m, "report.txt"), text);
  write_text(out_path(m, "report.csv"), render_grid_csv(grid));
  write_text(out_path(m, "stability.csv"), stability_export(sweeps));
  std::fputs(text.c_str(), stdout);
  return 0;
}

// -------------------------------------------------------------- check

double metric_self_test() {
  std::mt19937_64 rng(31);
  double worst = 0.0;
  const auto track = [&](double a, double b) { worst = std::max(worst, std::fabs(a - b)); };
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 40;
    std::vector<int> preds(n), golds(n);
    std::vector<double> xs(n), ys(n);
    for (std::size_t i = 0; i < n; ++i) {
      preds[i] = static_cast<int>(rng() % 2);
      golds[i] = static_cast<int>(rng() % 2);
      xs[i] = static_cast<double>(rng() % 1000) / 100.0;
      ys[i] = static_cast<double>(rng() % 1000) / 100.0;
    }
    double tp = 0, tn = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (preds[i] == 1 && golds[i] == 1) ++tp;
      if (preds[i] == 0 && golds[i] == 0) ++tn;
      if (preds[i] == 1 && golds[i] == 0) ++fp;
      if (preds[i] == 0 && golds[i] == 1) ++fn;
    }
    // The library reports every metric on the 0-100 table scale.
    const double denom = std::sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn));
    track(matthews(preds, golds), denom == 0.0 ? 0.0 : 100.0 * (tp * tn - fp * fn) / denom);
    const double pr = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    const double rc = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    track(f1_binary(preds, golds), pr + rc > 0 ? 100.0 * 2 * pr * rc / (pr + rc) : 0.0);
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
      mx += xs[i];
      my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < n; ++i) {
      sxy += (xs[i] - mx) * (ys[i] - my);
      sxx += (xs[i] - mx) * (xs[i] - mx);
      syy += (ys[i] - my) * (ys[i] - my);
    }
    track(pearson(xs, ys), 100.0 * sxy / std::sqrt(sxx * syy));
  }
  return worst;
}

int cmd_check() {
  EncoderConfig config;
  config.vocab_size = 30;
  config.max_len = 12;
  config.d_model = 8;
  config.n_heads = 2;
  config.n_layers = 2;
  config.dropout_rate = 0.0;
  const EncoderParams p = init_params(config, 3);
  const Head head = swap_head(config, HeadKind::classification, 2, 7);

  std::vector<Tensor> params;
  p.for_each([&](const std::string&, const Tensor& t) { params.push_back(t); });
  const std::size_t n_encoder = params.size();
  params.push_back(head.w);
  params.push_back(head.b);

  const std::vector<int> ids{2, 5, 6, 7, 8, 3};
  const std::vector<int> mask(ids.size(), 1);
  const std::vector<int> lm_targets{-1, 9, 10, -1, 11, -1};
  const auto build = [&](Graph& g, const std::vector<int>& node_ids) {
    const BoundParams bp =
        bound_from_ordered(config, std::span(node_ids).first(n_encoder));
    const BoundHead bh{node_ids[n_encoder], node_ids[n_encoder + 1]};
    const int hidden = encode_nodes(g, bp, config, ids, mask, nullptr);
    const int pooled = pool_nodes(g, hidden, config.pooling, mask);
    const int task = g.cross_entropy(head_logits_nodes(g, bh, pooled), std::vector<int>{1});
    const int lm = g.cross_entropy(lm_logits_nodes(g, bp, hidden), lm_targets);
    return g.add(task, g.scale(lm, 0.5));
  };

  const double grad_err = grad_check(build, params);
  const double metric_err = metric_self_test();
  std::printf("gradient check: max relative error %.3e over %zu parameters\n", grad_err,
              p.param_count() + head.w.size() + head.b.size());
  std::printf("metric self-test: max deviation %.3e\n", metric_err);
  if (grad_err >= 1e-5) throw RunAbort("gradient check failed");
  if (metric_err >= 1e-10) throw RunAbort("metric self-test failed");
  std::printf("check: ok\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stilts-lab: supplementary training on intermediate labeled-data tasks"};
  app.require_subcommand(1);

  CommonOpts opts;
  int rc = 0;
  const auto add = [&](const char* name, const char* help, auto fn) {
    CLI::App* cmd = app.add_subcommand(name, help);
    attach_common(cmd, opts);
    cmd->callback([&rc, fn] { rc = fn(); });
    return cmd;
  };

  add("gen-fake", "generate the real-vs-fake sentence tasks as TSV", [&] { return cmd_gen_fake(opts); });
  add("gen-synth", "generate the synthetic transfer pair as TSV", [&] { return cmd_gen_synth(opts); });
  add("build-vocab", "build and save the vocabulary", [&] { return cmd_build_vocab(opts); });
  add("pretrain", "LM-pretrain the encoder and save a checkpoint", [&] { return cmd_pretrain(opts); });
  add("run", "execute the first plan once", [&] { return cmd_run(opts); });
  add("sweep", "run the first plan across restarts", [&] { return cmd_sweep(opts); });
  add("grid", "run every plan and render the comparison table", [&] { return cmd_grid(opts); });
  add("report", "re-render tables and plot data from stored results", [&] { return cmd_report(opts); });
  add("check", "gradient check plus metric self-tests", [&] { return cmd_check(); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e);
    return 0;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const RunAbort& e) {
    std::cerr << "runtime abort: " << e.what() << "\n";
    return 3;
  }
  return rc;
}
