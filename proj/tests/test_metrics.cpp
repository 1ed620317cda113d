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
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "stilts/errors.hpp"
#include "stilts/metrics.hpp"
#include "stilts/rng.hpp"

using namespace stilts;

namespace {

// Definitional oracles, kept deliberately naive and separate from the
// library implementations.

double oracle_accuracy(const std::vector<int>& preds, const std::vector<int>& golds) {
  int hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i)
    if (preds[i] == golds[i]) ++hits;
  return 100.0 * hits / static_cast<double>(preds.size());
}

double oracle_matthews(const std::vector<int>& preds, const std::vector<int>& golds) {
  double tp = 0, tn = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (golds[i] == 1 && preds[i] == 1) tp += 1;
    if (golds[i] == 0 && preds[i] == 0) tn += 1;
    if (golds[i] == 0 && preds[i] == 1) fp += 1;
    if (golds[i] == 1 && preds[i] == 0) fn += 1;
  }
  double denom = std::sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn));
  if (denom == 0.0) return 0.0;
  return 100.0 * (tp * tn - fp * fn) / denom;
}

double oracle_f1(const std::vector<int>& preds, const std::vector<int>& golds) {
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] == 1 && golds[i] == 1) tp += 1;
    if (preds[i] == 1 && golds[i] == 0) fp += 1;
    if (preds[i] == 0 && golds[i] == 1) fn += 1;
  }
  double p = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  double r = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  return p + r > 0 ? 100.0 * 2 * p * r / (p + r) : 0.0;
}

// Quadratic-time average ranks: 1 + (#smaller) + (#equal - 1)/2.
std::vector<double> oracle_ranks(const std::vector<double>& v) {
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double smaller = 0, equal = 0;
    for (double other : v) {
      if (other < v[i]) smaller += 1;
      if (other == v[i]) equal += 1;
    }
    ranks[i] = 1.0 + smaller + (equal - 1.0) / 2.0;
  }
  return ranks;
}

double oracle_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    syy += y[i] * y[i];
    sxy += x[i] * y[i];
  }
  double cov = sxy / n - (sx / n) * (sy / n);
  double vx = sxx / n - (sx / n) * (sx / n);
  double vy = syy / n - (sy / n) * (sy / n);
  return 100.0 * cov / std::sqrt(vx * vy);
}

// The benchmark roster used by the aggregation examples.
const std::vector<std::string> kRoster{"cola", "sst", "mrpc", "qqp", "sts", "mnli", "qnli", "rte", "wnli"};
const std::set<std::string> kExclude{"mnli", "qqp"};

ScoreRow make_row(const std::string& label, double cola, double sst, std::vector<double> mrpc,
                  std::vector<double> qqp, std::vector<double> sts, double mnli, double qnli, double rte,
                  double wnli) {
  ScoreRow row;
  row.label = label;
  row.scores["cola"] = {cola};
  row.scores["sst"] = {sst};
  row.scores["mrpc"] = std::move(mrpc);
  row.scores["qqp"] = std::move(qqp);
  row.scores["sts"] = std::move(sts);
  row.scores["mnli"] = {mnli};
  row.scores["qnli"] = {qnli};
  row.scores["rte"] = {rte};
  row.scores["wnli"] = {wnli};
  return row;
}

// Development-set section rows of the reference result table.
ScoreRow bert_base() {
  return make_row("bert", 62.1, 92.5, {89.0, 92.3}, {91.5, 88.5}, {90.3, 90.1}, 86.2, 89.4, 70.0, 56.3);
}

std::vector<ScoreRow> bert_section() {
  std::vector<ScoreRow> rows;
  rows.push_back(bert_base());
  ScoreRow qqp =
      make_row("bert-qqp", 56.8, 93.1, {88.7, 92.0}, {0.0, 0.0}, {90.9, 90.7}, 86.1, 89.5, 74.7, 56.3);
  qqp.intermediate_task = "qqp";
  rows.push_back(std::move(qqp));
  ScoreRow mnli =
      make_row("bert-mnli", 59.8, 93.2, {89.5, 92.3}, {91.4, 88.4}, {91.0, 90.8}, 0.0, 90.5, 83.4, 56.3);
  mnli.intermediate_task = "mnli";
  rows.push_back(std::move(mnli));
  ScoreRow snli =
      make_row("bert-snli", 57.0, 92.7, {88.5, 91.7}, {91.4, 88.4}, {90.7, 90.6}, 86.1, 89.8, 80.1, 56.3);
  snli.intermediate_task = "snli";  // not a target column; substitution must skip it
  rows.push_back(std::move(snli));
  ScoreRow fake =
      make_row("bert-fake", 52.4, 92.1, {82.8, 88.5}, {90.8, 87.5}, {88.7, 88.6}, 84.5, 88.0, 59.6, 56.3);
  fake.intermediate_task = "fake-sent";
  rows.push_back(std::move(fake));
  ScoreRow baseline = rows.front();
  return same_task_substitution(std::move(rows), baseline);
}

}  // namespace

TEST_CASE("accuracy matches the counting oracle and rejects bad input") {
  std::vector<int> all{1, 1, 0, 2};
  CHECK(accuracy(all, all) == 100.0);
  std::vector<int> zeros{0, 0, 0, 0};
  std::vector<int> balanced{0, 0, 1, 1};
  CHECK(accuracy(zeros, balanced) == 50.0);

  Rng rng(3);
  for (int round = 0; round < 20; ++round) {
    std::vector<int> preds, golds;
    for (int i = 0; i < 57; ++i) {
      preds.push_back(rng.uniform_int(0, 2));
      golds.push_back(rng.uniform_int(0, 2));
    }
    CHECK(accuracy(preds, golds) == doctest::Approx(oracle_accuracy(preds, golds)).epsilon(1e-12));
  }

  CHECK_THROWS_AS(accuracy({}, {}), ConfigError);
  std::vector<int> a{1}, b{1, 0};
  CHECK_THROWS_AS(accuracy(a, b), ConfigError);
}

TEST_CASE("f1 handles the degenerate no-positive case and the hand example") {
  std::vector<int> perfect{1, 0, 1};
  CHECK(f1_binary(perfect, perfect) == 100.0);

  std::vector<int> no_pos_preds{0, 0, 0};
  std::vector<int> golds_with_pos{1, 1, 0};
  CHECK(f1_binary(no_pos_preds, golds_with_pos) == 0.0);

  // TP=2, FP=1, FN=1: precision = recall = 2/3.
  std::vector<int> preds{1, 1, 0, 1};
  std::vector<int> golds{1, 1, 1, 0};
  CHECK(std::abs(f1_binary(preds, golds) - 66.67) < 0.01);

  Rng rng(4);
  for (int round = 0; round < 20; ++round) {
    std::vector<int> p, g;
    for (int i = 0; i < 41; ++i) {
      p.push_back(rng.uniform_int(0, 1));
      g.push_back(rng.uniform_int(0, 1));
    }
    CHECK(f1_binary(p, g) == doctest::Approx(oracle_f1(p, g)).epsilon(1e-12));
  }
}

TEST_CASE("matthews agrees with the confusion-matrix oracle and is symmetric") {
  std::vector<int> perfect{1, 0, 1, 0};
  CHECK(matthews(perfect, perfect) == 100.0);

  std::vector<int> p1{1, 1, 0, 0};
  std::vector<int> g1{1, 0, 1, 0};  // TP=TN=FP=FN=1
  CHECK(matthews(p1, g1) == 0.0);

  Rng rng(5);
  for (int round = 0; round < 100; ++round) {
    std::vector<int> p, g;
    int n = rng.uniform_int(5, 60);
    for (int i = 0; i < n; ++i) {
      p.push_back(rng.uniform_int(0, 1));
      g.push_back(rng.uniform_int(0, 1));
    }
    double ours = matthews(p, g);
    CHECK(std::abs(ours - oracle_matthews(p, g)) < 1e-10);
    CHECK(std::abs(ours - matthews(g, p)) < 1e-12);
  }

  std::vector<int> bad{2, 0};
  std::vector<int> ok{1, 0};
  CHECK_THROWS_AS(matthews(bad, ok), ConfigError);
}

TEST_CASE("pearson and spearman match their oracles") {
  std::vector<double> x{1.0, 2.0, 3.0, 4.0, 5.0};
  CHECK(pearson(x, x) == doctest::Approx(100.0).epsilon(1e-12));
  CHECK(spearman(x, x) == doctest::Approx(100.0).epsilon(1e-12));

  std::vector<double> rev{5.0, 4.0, 3.0, 2.0, 1.0};
  CHECK(spearman(x, rev) == doctest::Approx(-100.0).epsilon(1e-12));

  SUBCASE("tied data uses average ranks") {
    std::vector<double> tied{1, 2, 2, 3};
    std::vector<double> plain{1, 2, 3, 4};
    auto ranks = average_ranks(tied);
    CHECK(ranks == oracle_ranks(tied));
    CHECK(ranks == std::vector<double>{1.0, 2.5, 2.5, 4.0});
    double expected = oracle_pearson(oracle_ranks(tied), oracle_ranks(plain));
    CHECK(std::abs(spearman(tied, plain) - expected) < 1e-10);
  }

  SUBCASE("random instances against the oracles") {
    Rng rng(6);
    for (int round = 0; round < 50; ++round) {
      std::vector<double> a, b;
      int n = rng.uniform_int(3, 40);
      for (int i = 0; i < n; ++i) {
        // integer-ish values so ties actually occur
        a.push_back(static_cast<double>(rng.uniform_int(0, 9)));
        b.push_back(rng.normal(0.0, 2.0));
      }
      if (std::all_of(a.begin(), a.end(), [&](double v) { return v == a[0]; })) continue;
      CHECK(std::abs(pearson(a, b) - oracle_pearson(a, b)) < 1e-9);
      CHECK(std::abs(spearman(a, b) - oracle_pearson(oracle_ranks(a), oracle_ranks(b))) < 1e-9);
    }
  }

  SUBCASE("spearman is invariant under strictly monotone transforms") {
    Rng rng(7);
    std::vector<double> a, b, cubed;
    for (int i = 0; i < 25; ++i) {
      a.push_back(static_cast<double>(rng.uniform_int(-5, 5)));
      b.push_back(rng.normal(0.0, 1.0));
    }
    for (double v : a) cubed.push_back(v * v * v);
    CHECK(std::abs(spearman(a, b) - spearman(cubed, b)) < 1e-10);
  }

  SUBCASE("constant input is rejected with the metric named") {
    std::vector<double> flat{2.0, 2.0, 2.0};
    std::vector<double> live{1.0, 2.0, 3.0};
    try {
      pearson(flat, live);
      FAIL("expected rejection");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("pearson") != std::string::npos);
    }
    try {
      spearman(live, flat);
      FAIL("expected rejection");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("spearman") != std::string::npos);
    }
    std::vector<double> one{1.0};
    CHECK_THROWS_AS(pearson(one, one), ConfigError);
  }
}

TEST_CASE("metrics are invariant under joint permutation") {
  Rng rng(8);
  std::vector<int> p, g;
  std::vector<double> x, y;
  for (int i = 0; i < 60; ++i) {
    p.push_back(rng.uniform_int(0, 1));
    g.push_back(rng.uniform_int(0, 1));
    x.push_back(rng.normal(0.0, 1.0));
    y.push_back(rng.normal(0.0, 1.0));
  }
  std::vector<std::size_t> perm(60);
  std::iota(perm.begin(), perm.end(), 0);
  Rng shuffler(9);
  shuffler.shuffle(perm);
  std::vector<int> ps, gs;
  std::vector<double> xs, ys;
  for (auto i : perm) {
    ps.push_back(p[i]);
    gs.push_back(g[i]);
    xs.push_back(x[i]);
    ys.push_back(y[i]);
  }
  CHECK(accuracy(ps, gs) == doctest::Approx(accuracy(p, g)).epsilon(1e-12));
  CHECK(f1_binary(ps, gs) == doctest::Approx(f1_binary(p, g)).epsilon(1e-12));
  CHECK(matthews(ps, gs) == doctest::Approx(matthews(p, g)).epsilon(1e-12));
  CHECK(pearson(xs, ys) == doctest::Approx(pearson(x, y)).epsilon(1e-10));
  CHECK(spearman(xs, ys) == doctest::Approx(spearman(x, y)).epsilon(1e-10));
}

TEST_CASE("evaluate_metric dispatches by name") {
  std::vector<double> preds{1, 0, 1, 1};
  std::vector<double> golds{1, 0, 0, 1};
  std::vector<int> pi{1, 0, 1, 1}, gi{1, 0, 0, 1};
  CHECK(evaluate_metric(kAccuracy, preds, golds) == accuracy(pi, gi));
  CHECK(evaluate_metric(kF1, preds, golds) == f1_binary(pi, gi));
  CHECK(evaluate_metric(kMatthews, preds, golds) == matthews(pi, gi));
  std::vector<double> x{1, 2, 3, 4}, y{1.5, 1.9, 3.2, 3.8};
  CHECK(evaluate_metric(kPearson, x, y) == pearson(x, y));
  CHECK(evaluate_metric(kSpearman, x, y) == spearman(x, y));
  CHECK_THROWS_AS(evaluate_metric("bleu", preds, golds), ConfigError);

  TaskSpec dual;
  dual.name = "dual";
  dual.metrics = {kF1, kAccuracy};
  dual.chance_scores = {{kF1, 0.0}, {kAccuracy, 50.0}};
  auto scores = task_scores(dual, preds, golds);
  REQUIRE(scores.size() == 2);
  CHECK(scores[0] == f1_binary(pi, gi));
  CHECK(scores[1] == accuracy(pi, gi));
}

TEST_CASE("majority baseline reproduces the constant-predictor rows") {
  TaskSpec task;
  task.name = "wnli-style";

  // 40 of 71 dev examples carry the majority label.
  std::vector<double> wnli;
  for (int i = 0; i < 40; ++i) wnli.push_back(1.0);
  for (int i = 0; i < 31; ++i) wnli.push_back(0.0);
  auto scores = majority_baseline(task, wnli);
  REQUIRE(scores.size() == 1);
  CHECK(std::abs(scores[0] - 56.3) < 0.05);

  std::vector<double> balanced{0, 0, 1, 1};
  CHECK(majority_baseline(task, balanced)[0] == 50.0);
  std::vector<double> single{1, 1, 1};
  CHECK(majority_baseline(task, single)[0] == 100.0);

  TaskSpec reg;
  reg.name = "sts-style";
  reg.label_kind = LabelKind::regression;
  reg.metrics = {kPearson};
  reg.chance_scores = {{kPearson, 0.0}};
  CHECK_THROWS_AS(majority_baseline(reg, balanced), ConfigError);
}

TEST_CASE("glue_aggregate reproduces the published averages") {
  auto bert = glue_aggregate(bert_base(), kRoster, kExclude);
  CHECK(std::abs(bert.avg - 80.8) < 0.05);

  ScoreRow gpt =
      make_row("gpt", 50.2, 93.2, {80.1, 85.9}, {89.4, 85.9}, {86.4, 86.5}, 81.2, 82.4, 58.1, 56.3);
  auto gpt_agg = glue_aggregate(gpt, kRoster, kExclude);
  CHECK(std::abs(gpt_agg.avg - 75.4) < 0.05);

  // The printed excluding-average matches the first-metric-only reading.
  auto gpt_first = glue_aggregate(gpt, kRoster, kExclude, AExConvention::first_metric_only);
  CHECK(std::abs(gpt_first.avg_ex - 72.4) < 0.05);
  CHECK(std::abs(gpt_agg.avg_ex - 72.8) < 0.05);

  SUBCASE("uniform scores collapse both averages") {
    ScoreRow flat = make_row("flat", 70, 70, {70, 70}, {70, 70}, {70, 70}, 70, 70, 70, 70);
    auto agg = glue_aggregate(flat, kRoster, kExclude);
    CHECK(agg.avg == doctest::Approx(70.0).epsilon(1e-12));
    CHECK(agg.avg_ex == doctest::Approx(70.0).epsilon(1e-12));
  }

  SUBCASE("missing tasks are rejected by name") {
    ScoreRow partial = bert_base();
    partial.scores.erase("rte");
    try {
      glue_aggregate(partial, kRoster, kExclude);
      FAIL("expected missing-task error");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("rte") != std::string::npos);
    }
  }

  SUBCASE("aggregate is linear in each per-task score with weight 1/n") {
    ScoreRow row = bert_base();
    auto before = glue_aggregate(row, kRoster, kExclude);
    row.scores["qnli"][0] += 9.0;
    auto after = glue_aggregate(row, kRoster, kExclude);
    CHECK(after.avg - before.avg == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(after.avg_ex - before.avg_ex == doctest::Approx(9.0 / 7.0).epsilon(1e-12));
  }

  SUBCASE("task order does not matter") {
    auto shuffled = kRoster;
    std::reverse(shuffled.begin(), shuffled.end());
    auto agg = glue_aggregate(bert_base(), shuffled, kExclude);
    CHECK(agg.avg == doctest::Approx(bert.avg).epsilon(1e-12));
    CHECK(agg.avg_ex == doctest::Approx(bert.avg_ex).epsilon(1e-12));
  }
}

TEST_CASE("same_task_substitution swaps in baseline cells and flags them") {
  auto rows = bert_section();
  REQUIRE(rows.size() == 5);
  const ScoreRow& qqp_row = rows[1];
  CHECK(qqp_row.scores.at("qqp") == std::vector<double>{91.5, 88.5});
  CHECK(qqp_row.substituted.contains("qqp"));
  const ScoreRow& mnli_row = rows[2];
  CHECK(mnli_row.scores.at("mnli") == std::vector<double>{86.2});
  CHECK(mnli_row.substituted.contains("mnli"));

  // Rows whose intermediate task is not a target column pass through.
  CHECK(rows[3].substituted.empty());
  CHECK(rows[4].substituted.empty());
  CHECK(rows[0].substituted.empty());

  // Published row averages for the substituted rows. Cells are printed
  // rounded to one decimal, so a mean recomputed from them can sit up to
  // ~0.1 from the printed average.
  CHECK(std::abs(glue_aggregate(rows[1], kRoster, kExclude).avg - 80.9) < 0.1);
  CHECK(std::abs(glue_aggregate(rows[2], kRoster, kExclude).avg - 82.4) < 0.1);

  auto untouched = same_task_substitution({bert_base()}, bert_base());
  CHECK(untouched[0] == bert_base());
}

TEST_CASE("best_of_each keeps whole pairs and reproduces the published row") {
  auto rows = bert_section();
  ScoreRow best = best_of_each(rows);
  CHECK(std::abs(glue_aggregate(best, kRoster, kExclude).avg - 82.6) < 0.05);
  CHECK(best.scores.at("mrpc") == std::vector<double>{89.5, 92.3});
  CHECK(best.scores.at("sts") == std::vector<double>{91.0, 90.8});
  CHECK(best.scores.at("rte") == std::vector<double>{83.4});
  CHECK(best.scores.at("cola") == std::vector<double>{62.1});

  SUBCASE("single row is returned as-is") {
    auto solo = best_of_each(std::vector<ScoreRow>{bert_base()});
    CHECK(solo.scores == bert_base().scores);
  }

  SUBCASE("a dominated row contributes nothing") {
    ScoreRow low = bert_base();
    for (auto& [task, values] : low.scores)
      for (double& v : values) v -= 5.0;
    low.label = "low";
    auto best2 = best_of_each(std::vector<ScoreRow>{bert_base(), low});
    CHECK(best2.scores == bert_base().scores);
  }

  SUBCASE("dual metrics come from the winning row, never mixed") {
    ScoreRow a, b;
    a.label = "a";
    b.label = "b";
    a.scores["d"] = {80.0, 60.0};  // pooled 70
    b.scores["d"] = {65.0, 71.0};  // pooled 68, higher second entry
    auto best3 = best_of_each(std::vector<ScoreRow>{a, b});
    CHECK(best3.scores.at("d") == std::vector<double>{80.0, 60.0});
  }

  SUBCASE("substituted cell never beats the identical baseline") {
    // The substituted qqp cell equals the baseline cell; the winner must
    // be the earlier, unsubstituted row.
    CHECK(rows[1].scores.at("qqp") == rows[0].scores.at("qqp"));
    CHECK(!best.substituted.contains("qqp"));
  }

  SUBCASE("mismatched rosters are rejected") {
    ScoreRow odd = bert_base();
    odd.scores.erase("wnli");
    CHECK_THROWS_AS(best_of_each(std::vector<ScoreRow>{bert_base(), odd}), ConfigError);
  }
}

TEST_CASE("grid renderers emit the table layout deterministically") {
  Grid grid;
  grid.roster = kRoster;
  grid.exclude = kExclude;
  grid.rows = bert_section();
  grid.rows.push_back(best_of_each(grid.rows));

  std::string text = render_grid_text(grid);
  CHECK(text.find("model") != std::string::npos);
  CHECK(text.find("Avg") != std::string::npos);
  CHECK(text.find("A.Ex") != std::string::npos);
  CHECK(text.find("91.5/88.5*") != std::string::npos);  // substituted dual cell
  CHECK(text.find("* baseline substituted") != std::string::npos);
  CHECK(text == render_grid_text(grid));

  std::string csv = render_grid_csv(grid);
  std::size_t lines = static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n'));
  CHECK(lines == grid.rows.size() + 1);
  CHECK(csv.find("model,Avg,A.Ex,cola,") != std::string::npos);
  CHECK(csv == render_grid_csv(grid));
}
