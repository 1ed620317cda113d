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
#ifndef STILTS_HARNESS_HPP
#define STILTS_HARNESS_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stilts/metrics.hpp"
#include "stilts/pipeline.hpp"

namespace stilts {

/// Runs close to chance count as degenerate. The paper has no numeric
/// cutoff, so the threshold stays configurable; 2 points is the default.
inline constexpr double kDegenerateEpsilon = 2.0;

/// A restart sweep condensed to the Figure-1 quantities. mean and std
/// (population) are always recomputable from `scores`.
struct SweepSummary {
  double mean = 0.0;
  double std_dev = 0.0;
  double min_score = 0.0;
  double max_score = 0.0;
  std::uint64_t best_seed = 0;  // earliest seed on ties
  std::size_t degenerate = 0;
  std::vector<double> scores;       // primary dev score, ascending seed order
  std::vector<RunRecord> records;   // full records, ascending seed order

  double best_score() const { return max_score; }
};

/// Count of scores within eps of chance. eps must be positive.
std::size_t degenerate_count(std::span<const double> scores, double chance,
                             double eps = kDegenerateEpsilon);

/// degenerate_count at eps 1, 2 and 5, keyed by eps. The cutoff is a
/// judgement call, so report how much the count moves with it.
std::map<double, std::size_t> degenerate_sensitivity(std::span<const double> scores, double chance);

/// Worker count actually used: requested, clamped to the
/// STILTS_LAB_THREADS environment variable when that is set.
int effective_workers(int requested);

/// The concrete plan for one restart: every phase re-seeded from the
/// restart seed, so head init, shuffling, dropout, masking and any
/// train_cap subsample are re-drawn per restart.
RegimePlan restart_plan(const RegimePlan& plan, std::uint64_t restart_seed);

/// `{target}_{regime}_{cap}_{seed}.json`; an uncapped run writes "full".
std::string result_filename(const RunRecord& rec);

/// n independent restarts with seeds seed_base..seed_base+n-1. Up to
/// `workers` run concurrently; the summary is identical to a serial run
/// (results are keyed by seed). A run that aborts is kept as a
/// degenerate record pinned at chance, never dropped.
SweepSummary run_restarts(const EncoderParams& pretrained, const RegimePlan& plan,
                          const Dataset* intermediate_data, const Dataset& target_data,
                          const Vocab& vocab, int n, std::uint64_t seed_base, int workers = 1,
                          double eps = kDegenerateEpsilon);

/// Regime-by-task grid: one row per (regime, intermediate) pair, one
/// column per target, each cell the best-of-restarts dev scores. A plan
/// whose intermediate equals its target is not run; the baseline row's
/// cell is substituted and flagged. A Best-of-Each row is appended.
/// Every executed sweep is appended to *sweeps_out, in plan order, when
/// that is given.
Grid comparison_grid(const EncoderParams& pretrained, std::span<const RegimePlan> plans,
                     const std::map<std::string, Dataset>& data_by_task, const Vocab& vocab,
                     int n_restarts, std::uint64_t seed_base, int workers = 1,
                     double eps = kDegenerateEpsilon, std::vector<SweepSummary>* sweeps_out = nullptr);

/// Plot-data CSV for the restart-distribution figure: one point row per
/// run plus one mean/std summary row per sweep. Header-only when empty.
std::string stability_export(std::span<const SweepSummary> sweeps);

}  // namespace stilts

#endif  // STILTS_HARNESS_HPP
