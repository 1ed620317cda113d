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
#include "stilts/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>

#include "stilts/errors.hpp"

namespace stilts {

namespace {

std::string format_full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string cap_text(const std::optional<std::size_t>& cap) {
  return cap.has_value() ? std::to_string(*cap) : "full";
}

std::string regime_label(Regime regime, const std::optional<std::string>& intermediate) {
  std::string label = regime_name(regime);
  if (intermediate.has_value()) label += ":" + *intermediate;
  return label;
}

/// Projects a record's dev scores onto the task's metric order.
std::vector<double> cell_scores(const TaskSpec& task, const RunRecord& rec) {
  std::vector<double> out;
  for (const auto& metric : task.metrics) out.push_back(rec.dev_scores.at(metric));
  return out;
}

}  // namespace

std::size_t degenerate_count(std::span<const double> scores, double chance, double eps) {
  if (eps <= 0.0) throw ConfigError("degenerate_count: eps must be positive");
  std::size_t n = 0;
  for (double s : scores)
    if (std::abs(s - chance) <= eps) ++n;
  return n;
}

std::map<double, std::size_t> degenerate_sensitivity(std::span<const double> scores, double chance) {
  std::map<double, std::size_t> out;
  for (double eps : {1.0, 2.0, 5.0}) out[eps] = degenerate_count(scores, chance, eps);
  return out;
}

int effective_workers(int requested) {
  if (requested < 1) throw ConfigError("workers must be at least 1");
  const char* env = std::getenv("STILTS_LAB_THREADS");
  if (env == nullptr || *env == '\0') return requested;
  char* end = nullptr;
  long cap = std::strtol(env, &end, 10);
  if (end == env || *end != '\0' || cap < 1) {
    throw ConfigError("STILTS_LAB_THREADS must be a positive integer, got '" + std::string(env) + "'");
  }
  return static_cast<int>(std::min<long>(requested, cap));
}

RegimePlan restart_plan(const RegimePlan& plan, std::uint64_t restart_seed) {
  RegimePlan out = plan;
  for (std::size_t i = 0; i < out.phases.size(); ++i) {
    out.phases[i].seed = derive_seed(restart_seed, "phase-" + std::to_string(i));
  }
  return out;
}

std::string result_filename(const RunRecord& rec) {
  return rec.target + "_" + regime_name(rec.regime) + "_" + cap_text(rec.cap) + "_" +
         std::to_string(rec.seed) + ".json";
}

SweepSummary run_restarts(const EncoderParams& pretrained, const RegimePlan& plan,
                          const Dataset* intermediate_data, const Dataset& target_data,
                          const Vocab& vocab, int n, std::uint64_t seed_base, int workers,
                          double eps) {
  if (n < 1) throw ConfigError("run_restarts: need at least one restart");
  if (eps <= 0.0) throw ConfigError("run_restarts: eps must be positive");
  plan.validate();

  const double chance = plan.target.primary_chance();
  const std::optional<std::size_t> cap = plan.phases.back().train_cap;
  const std::size_t full = target_data.train.size();

  auto one_restart = [&](int i) -> RunRecord {
    const std::uint64_t seed = seed_base + static_cast<std::uint64_t>(i);
    const auto t0 = std::chrono::steady_clock::now();
    try {
      RunRecord rec =
          run_regime(pretrained, restart_plan(plan, seed), intermediate_data, target_data, vocab, seed);
      rec.degenerate = std::abs(rec.primary_score - chance) <= eps;
      return rec;
    } catch (const RunAbort&) {
      // A diverged run stays in the books, pinned at chance.
      RunRecord rec;
      rec.regime = plan.regime;
      if (plan.intermediate.has_value()) rec.intermediate = plan.intermediate->name;
      rec.target = plan.target.name;
      rec.seed = seed;
      rec.cap = cap;
      rec.train_size = cap.has_value() ? std::min(*cap, full) : full;
      rec.dev_scores = plan.target.chance_scores;
      rec.primary_score = chance;
      rec.degenerate = true;
      rec.aborted = true;
      rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      return rec;
    }
  };

  std::vector<RunRecord> records(static_cast<std::size_t>(n));
  const int pool = std::min(effective_workers(workers), n);
  if (pool <= 1) {
    for (int i = 0; i < n; ++i) records[static_cast<std::size_t>(i)] = one_restart(i);
  } else {
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    auto drain = [&] {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
        try {
          records[static_cast<std::size_t>(i)] = one_restart(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mu);
          if (!failure) failure = std::current_exception();
          return;
        }
      }
    };
    std::vector<std::thread> threads;
    for (int t = 0; t < pool; ++t) threads.emplace_back(drain);
    for (auto& t : threads) t.join();
    if (failure) std::rethrow_exception(failure);
  }

  SweepSummary sum;
  sum.records = std::move(records);
  double total = 0.0;
  for (const RunRecord& rec : sum.records) {
    sum.scores.push_back(rec.primary_score);
    total += rec.primary_score;
    if (rec.degenerate) ++sum.degenerate;
  }
  sum.mean = total / static_cast<double>(n);
  double sq = 0.0;
  for (double s : sum.scores) sq += (s - sum.mean) * (s - sum.mean);
  sum.std_dev = std::sqrt(sq / static_cast<double>(n));
  sum.min_score = *std::min_element(sum.scores.begin(), sum.scores.end());
  sum.max_score = *std::max_element(sum.scores.begin(), sum.scores.end());
  sum.best_seed = sum.records.front().seed;
  double best = sum.records.front().primary_score;
  for (const RunRecord& rec : sum.records) {
    if (rec.primary_score > best) {
      best = rec.primary_score;
      sum.best_seed = rec.seed;
    }
  }
  return sum;
}

Grid comparison_grid(const EncoderParams& pretrained, std::span<const RegimePlan> plans,
                     const std::map<std::string, Dataset>& data_by_task, const Vocab& vocab,
                     int n_restarts, std::uint64_t seed_base, int workers, double eps,
                     std::vector<SweepSummary>* sweeps_out) {
  if (plans.empty()) throw ConfigError("comparison_grid: no plans");

  Grid grid;
  std::vector<ScoreRow> rows;
  bool any_substituted = false;

  auto row_for = [&](const RegimePlan& plan) -> ScoreRow& {
    std::optional<std::string> inter;
    if (plan.intermediate.has_value()) inter = plan.intermediate->name;
    std::string label = regime_label(plan.regime, inter);
    for (ScoreRow& row : rows)
      if (row.label == label) return row;
    ScoreRow row;
    row.label = std::move(label);
    row.intermediate_task = inter;
    rows.push_back(std::move(row));
    return rows.back();
  };

  for (const RegimePlan& plan : plans) {
    plan.validate();
    const std::string& target = plan.target.name;
    if (std::find(grid.roster.begin(), grid.roster.end(), target) == grid.roster.end()) {
      grid.roster.push_back(target);
    }
    ScoreRow& row = row_for(plan);
    if (row.scores.contains(target)) {
      throw ConfigError("comparison_grid: duplicate plan for row '" + row.label + "', target '" +
                        target + "'");
    }
    if (plan.intermediate.has_value() && plan.intermediate->name == target) {
      // Same-task pairing: never run, substitute the baseline cell below.
      row.scores[target] = std::vector<double>(plan.target.metrics.size(), 0.0);
      any_substituted = true;
      continue;
    }
    auto data_it = data_by_task.find(target);
    if (data_it == data_by_task.end()) {
      throw ConfigError("comparison_grid: no dataset for target '" + target + "'");
    }
    const Dataset* inter_data = nullptr;
    if (plan.intermediate.has_value()) {
      auto it = data_by_task.find(plan.intermediate->name);
      if (it == data_by_task.end()) {
        throw ConfigError("comparison_grid: no dataset for intermediate '" + plan.intermediate->name +
                          "'");
      }
      inter_data = &it->second;
    }
    SweepSummary sweep = run_restarts(pretrained, plan, inter_data, data_it->second, vocab, n_restarts,
                                      seed_base, workers, eps);
    for (const RunRecord& rec : sweep.records) {
      if (rec.seed == sweep.best_seed) {
        row.scores[target] = cell_scores(plan.target, rec);
        break;
      }
    }
    if (sweeps_out != nullptr) sweeps_out->push_back(std::move(sweep));
  }

  auto baseline_it = std::find_if(rows.begin(), rows.end(), [](const ScoreRow& row) {
    return row.label == regime_name(Regime::baseline);
  });
  const bool has_baseline = baseline_it != rows.end();
  if (has_baseline) {
    std::rotate(rows.begin(), baseline_it, baseline_it + 1);  // ties favor the baseline
  } else if (any_substituted) {
    throw ConfigError("comparison_grid: same-task cells need a baseline row to substitute from");
  }

  for (const ScoreRow& row : rows) {
    for (const std::string& task : grid.roster) {
      if (!row.scores.contains(task)) {
        throw ConfigError("comparison_grid: row '" + row.label + "' has no plan for target '" + task +
                          "'");
      }
    }
  }

  if (has_baseline) {
    ScoreRow baseline = rows.front();
    rows = same_task_substitution(std::move(rows), baseline);
  }
  rows.push_back(best_of_each(rows));
  grid.rows = std::move(rows);
  return grid;
}

std::string stability_export(std::span<const SweepSummary> sweeps) {
  std::string out = "task,regime,cap,kind,seed,score,std\n";
  for (const SweepSummary& sweep : sweeps) {
    if (sweep.records.empty()) continue;
    const RunRecord& head = sweep.records.front();
    const std::string prefix = head.target + "," + regime_label(head.regime, head.intermediate) + "," +
                               cap_text(head.cap) + ",";
    for (const RunRecord& rec : sweep.records) {
      out += prefix + "point," + std::to_string(rec.seed) + "," + format_full(rec.primary_score) +
             ",\n";
    }
    out += prefix + "summary,," + format_full(sweep.mean) + "," + format_full(sweep.std_dev) + "\n";
  }
  return out;
}

}  // namespace stilts
