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

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "stilts/datakit.hpp"

namespace stilts {

// Every metric is reported on the 0-100 scale used in benchmark tables;
// correlations are multiplied by 100 and may be negative.

double accuracy(std::span<const int> preds, std::span<const int> golds);

/// Harmonic mean of precision and recall, 0 when precision + recall is 0.
double f1_binary(std::span<const int> preds, std::span<const int> golds, int positive_class = 1);

/// Matthews correlation over 0/1 labels; 0 when any factor of the
/// denominator is 0.
double matthews(std::span<const int> preds, std::span<const int> golds);

/// Product-moment correlation. Constant input is undefined and rejected.
double pearson(std::span<const double> x, std::span<const double> y);

/// Pearson on fractional ranks; ties get the average rank.
double spearman(std::span<const double> x, std::span<const double> y);

/// 1-based ranks with tied values averaged (the Spearman convention).
std::vector<double> average_ranks(std::span<const double> values);

/// Dispatch by metric name (kAccuracy and friends). Classification
/// metrics round the doubles back to class ids.
double evaluate_metric(const std::string& name, std::span<const double> preds,
                       std::span<const double> golds);

/// The task's full metric list, in declaration order.
std::vector<double> task_scores(const TaskSpec& task, std::span<const double> preds,
                                std::span<const double> golds);

/// Scores of the constant most-frequent-label predictor (ties toward the
/// smaller class id). Classification tasks only.
std::vector<double> majority_baseline(const TaskSpec& task, std::span<const double> golds);

// ----------------------------------------------------------- score rows

/// One table row: per-task metric lists (two entries for dual-metric
/// tasks), plus provenance used by same-task substitution.
struct ScoreRow {
  std::string label;
  /// Name of the intermediate task this row was trained on, if any.
  std::optional<std::string> intermediate_task;
  std::map<std::string, std::vector<double>> scores;
  /// Tasks whose cell was replaced by the baseline cell.
  std::set<std::string> substituted;

  bool operator==(const ScoreRow&) const = default;
};

/// Mean of the task's metric list (dual metrics pre-averaged).
double pooled_score(const ScoreRow& row, const std::string& task);

/// Printed A.Ex columns in the source tables are reproducible with
/// first_metric_only; the default keeps avg and avg_ex on one convention.
enum class AExConvention { pair_averaged, first_metric_only };

struct AggregateScores {
  double avg = 0.0;
  double avg_ex = 0.0;
};

/// Unweighted mean over the roster (dual-metric tasks pre-averaged), and
/// the same mean excluding `exclude`. Missing tasks are rejected by name.
AggregateScores glue_aggregate(const ScoreRow& row, std::span<const std::string> roster,
                               const std::set<std::string>& exclude,
                               AExConvention convention = AExConvention::pair_averaged);

/// Per task, the row with the best pooled score wins and contributes its
/// whole metric pair; ties keep the earliest row, so a baseline listed
/// first beats an identical substituted cell.
ScoreRow best_of_each(std::span<const ScoreRow> rows);

/// Replaces each cell whose column equals the row's intermediate task
/// with the baseline cell and flags it.
std::vector<ScoreRow> same_task_substitution(std::vector<ScoreRow> rows, const ScoreRow& baseline);

// ------------------------------------------------------------ rendering

struct Grid {
  std::vector<std::string> roster;
  std::set<std::string> exclude;
  AExConvention convention = AExConvention::pair_averaged;
  std::vector<ScoreRow> rows;
};

/// Aligned text table: label, Avg, A.Ex, then one column per roster
/// task; dual metrics joined with '/', substituted cells suffixed '*'.
std::string render_grid_text(const Grid& grid);

/// Same layout as CSV (comma-separated, one line per row).
std::string render_grid_csv(const Grid& grid);

}  // namespace stilts
