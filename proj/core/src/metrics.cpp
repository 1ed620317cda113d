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
#include "stilts/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "stilts/errors.hpp"

namespace stilts {

namespace {

void check_lengths(const char* name, std::size_t a, std::size_t b, bool allow_empty) {
  if (a != b) {
    throw ConfigError(std::string(name) + ": length mismatch (" + std::to_string(a) + " vs " +
                      std::to_string(b) + ")");
  }
  if (!allow_empty && a == 0) throw ConfigError(std::string(name) + ": empty input");
}

struct Confusion {
  double tp = 0, tn = 0, fp = 0, fn = 0;
};

Confusion confusion_binary(const char* name, std::span<const int> preds, std::span<const int> golds,
                           int positive) {
  Confusion c;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    bool p = preds[i] == positive;
    bool g = golds[i] == positive;
    if (p && g) c.tp += 1;
    else if (p && !g) c.fp += 1;
    else if (!p && g) c.fn += 1;
    else c.tn += 1;
  }
  (void)name;
  return c;
}

double pearson_impl(const char* name, std::span<const double> x, std::span<const double> y) {
  check_lengths(name, x.size(), y.size(), false);
  if (x.size() < 2) throw ConfigError(std::string(name) + ": need at least 2 points");
  double n = static_cast<double>(x.size());
  double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double cov = 0, vx = 0, vy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double dx = x[i] - mx, dy = y[i] - my;
    cov += dx * dy;
    vx += dx * dx;
    vy += dy * dy;
  }
  if (vx == 0.0 || vy == 0.0) throw ConfigError(std::string(name) + ": constant input");
  return 100.0 * cov / std::sqrt(vx * vy);
}

std::string format_score(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", value);
  return buf;
}

std::string format_cell(const ScoreRow& row, const std::string& task) {
  auto it = row.scores.find(task);
  if (it == row.scores.end()) return "-";
  std::string out;
  for (std::size_t i = 0; i < it->second.size(); ++i) {
    if (i > 0) out.push_back('/');
    out += format_score(it->second[i]);
  }
  if (row.substituted.contains(task)) out.push_back('*');
  return out;
}

std::vector<std::vector<std::string>> grid_cells(const Grid& grid) {
  std::vector<std::vector<std::string>> table;
  std::vector<std::string> header{"model", "Avg", "A.Ex"};
  for (const auto& task : grid.roster) header.push_back(task);
  table.push_back(std::move(header));
  for (const ScoreRow& row : grid.rows) {
    auto agg = glue_aggregate(row, grid.roster, grid.exclude, grid.convention);
    std::vector<std::string> cells{row.label, format_score(agg.avg), format_score(agg.avg_ex)};
    for (const auto& task : grid.roster) cells.push_back(format_cell(row, task));
    table.push_back(std::move(cells));
  }
  return table;
}

}  // namespace

double accuracy(std::span<const int> preds, std::span<const int> golds) {
  check_lengths("accuracy", preds.size(), golds.size(), false);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == golds[i] ? 1 : 0;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(preds.size());
}

double f1_binary(std::span<const int> preds, std::span<const int> golds, int positive_class) {
  check_lengths("f1", preds.size(), golds.size(), true);
  Confusion c = confusion_binary("f1", preds, golds, positive_class);
  double precision = c.tp + c.fp > 0 ? c.tp / (c.tp + c.fp) : 0.0;
  double recall = c.tp + c.fn > 0 ? c.tp / (c.tp + c.fn) : 0.0;
  if (precision + recall == 0.0) return 0.0;
  return 100.0 * 2.0 * precision * recall / (precision + recall);
}

double matthews(std::span<const int> preds, std::span<const int> golds) {
  check_lengths("matthews", preds.size(), golds.size(), true);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if ((preds[i] != 0 && preds[i] != 1) || (golds[i] != 0 && golds[i] != 1)) {
      throw ConfigError("matthews: labels must be 0/1");
    }
  }
  Confusion c = confusion_binary("matthews", preds, golds, 1);
  double f1 = c.tp + c.fp, f2 = c.tp + c.fn, f3 = c.tn + c.fp, f4 = c.tn + c.fn;
  if (f1 == 0 || f2 == 0 || f3 == 0 || f4 == 0) return 0.0;
  return 100.0 * (c.tp * c.tn - c.fp * c.fn) / std::sqrt(f1 * f2 * f3 * f4);
}

double pearson(std::span<const double> x, std::span<const double> y) {
  return pearson_impl("pearson", x, y);
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size(), 0.0);
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  check_lengths("spearman", x.size(), y.size(), false);
  auto rx = average_ranks(x);
  auto ry = average_ranks(y);
  return pearson_impl("spearman", rx, ry);
}

double evaluate_metric(const std::string& name, std::span<const double> preds,
                       std::span<const double> golds) {
  if (name == kPearson) return pearson(preds, golds);
  if (name == kSpearman) return spearman(preds, golds);
  std::vector<int> p, g;
  p.reserve(preds.size());
  g.reserve(golds.size());
  for (double v : preds) p.push_back(static_cast<int>(std::lround(v)));
  for (double v : golds) g.push_back(static_cast<int>(std::lround(v)));
  if (name == kAccuracy) return accuracy(p, g);
  if (name == kF1) return f1_binary(p, g);
  if (name == kMatthews) return matthews(p, g);
  throw ConfigError("evaluate_metric: unknown metric '" + name + "'");
}

std::vector<double> task_scores(const TaskSpec& task, std::span<const double> preds,
                                std::span<const double> golds) {
  std::vector<double> out;
  out.reserve(task.metrics.size());
  for (const auto& m : task.metrics) out.push_back(evaluate_metric(m, preds, golds));
  return out;
}

std::vector<double> majority_baseline(const TaskSpec& task, std::span<const double> golds) {
  if (task.label_kind != LabelKind::classification) {
    throw ConfigError("majority_baseline: task '" + task.name + "' is not classification");
  }
  if (golds.empty()) throw ConfigError("majority_baseline: empty golds");
  std::map<int, std::size_t> counts;
  for (double g : golds) ++counts[static_cast<int>(std::lround(g))];
  int majority = counts.begin()->first;
  std::size_t best = counts.begin()->second;
  for (const auto& [label, count] : counts) {
    if (count > best) {
      majority = label;
      best = count;
    }
  }
  std::vector<double> preds(golds.size(), static_cast<double>(majority));
  return task_scores(task, preds, golds);
}

double pooled_score(const ScoreRow& row, const std::string& task) {
  auto it = row.scores.find(task);
  if (it == row.scores.end()) {
    throw ConfigError("row '" + row.label + "' missing task '" + task + "'");
  }
  if (it->second.empty()) {
    throw ConfigError("row '" + row.label + "' has no scores for task '" + task + "'");
  }
  return std::accumulate(it->second.begin(), it->second.end(), 0.0) /
         static_cast<double>(it->second.size());
}

AggregateScores glue_aggregate(const ScoreRow& row, std::span<const std::string> roster,
                               const std::set<std::string>& exclude, AExConvention convention) {
  if (roster.empty()) throw ConfigError("glue_aggregate: empty roster");
  AggregateScores agg;
  std::size_t kept = 0;
  for (const auto& task : roster) {
    double pooled = pooled_score(row, task);
    agg.avg += pooled;
    if (exclude.contains(task)) continue;
    agg.avg_ex += convention == AExConvention::first_metric_only ? row.scores.at(task).front() : pooled;
    ++kept;
  }
  if (kept == 0) throw ConfigError("glue_aggregate: exclusion removes every task");
  agg.avg /= static_cast<double>(roster.size());
  agg.avg_ex /= static_cast<double>(kept);
  return agg;
}

ScoreRow best_of_each(std::span<const ScoreRow> rows) {
  if (rows.empty()) throw ConfigError("best_of_each: no rows");
  const auto& first = rows.front();
  for (const auto& row : rows) {
    if (row.scores.size() != first.scores.size()) {
      throw ConfigError("best_of_each: row '" + row.label + "' has a different roster");
    }
    for (const auto& [task, values] : first.scores) {
      if (!row.scores.contains(task)) {
        throw ConfigError("best_of_each: row '" + row.label + "' missing task '" + task + "'");
      }
    }
  }
  ScoreRow best;
  best.label = "Best of Each";
  for (const auto& [task, values] : first.scores) {
    const ScoreRow* winner = &first;
    double top = pooled_score(first, task);
    for (const auto& row : rows.subspan(1)) {
      double s = pooled_score(row, task);
      if (s > top) {
        top = s;
        winner = &row;
      }
    }
    best.scores.emplace(task, winner->scores.at(task));
    if (winner->substituted.contains(task)) best.substituted.insert(task);
  }
  return best;
}

std::vector<ScoreRow> same_task_substitution(std::vector<ScoreRow> rows, const ScoreRow& baseline) {
  for (ScoreRow& row : rows) {
    if (!row.intermediate_task.has_value()) continue;
    auto cell = row.scores.find(*row.intermediate_task);
    if (cell == row.scores.end()) continue;
    auto source = baseline.scores.find(*row.intermediate_task);
    if (source == baseline.scores.end()) {
      throw ConfigError("same_task_substitution: baseline missing task '" + *row.intermediate_task +
                        "'");
    }
    cell->second = source->second;
    row.substituted.insert(*row.intermediate_task);
  }
  return rows;
}

std::string render_grid_text(const Grid& grid) {
  auto table = grid_cells(grid);
  std::vector<std::size_t> widths(table[0].size(), 0);
  for (const auto& cells : table)
    for (std::size_t c = 0; c < cells.size(); ++c) widths[c] = std::max(widths[c], cells[c].size());
  std::string out;
  for (const auto& cells : table) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c > 0) out += "  ";
      std::size_t pad = widths[c] - cells[c].size();
      if (c == 0) {  // label column is left-aligned, numbers right-aligned
        out += cells[c];
        out.append(pad, ' ');
      } else {
        out.append(pad, ' ');
        out += cells[c];
      }
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    out.push_back('\n');
  }
  bool any_sub = false;
  for (const auto& row : grid.rows) any_sub = any_sub || !row.substituted.empty();
  if (any_sub) out += "* baseline substituted (intermediate task == target task)\n";
  return out;
}

std::string render_grid_csv(const Grid& grid) {
  auto table = grid_cells(grid);
  std::string out;
  for (const auto& cells : table) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c > 0) out.push_back(',');
      out += cells[c];
    }
    out.push_back('\n');
  }
  return out;
}

}  // namespace stilts
