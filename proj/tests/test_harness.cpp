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

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "stilts/errors.hpp"
#include "stilts/harness.hpp"

using namespace stilts;

namespace {

std::size_t oracle_degenerate(const std::vector<double>& scores, double chance, double eps) {
  std::size_t n = 0;
  for (double s : scores) {
    if (s >= chance - eps && s <= chance + eps) ++n;
  }
  return n;
}

struct SweepFixture {
  Vocab vocab;
  EncoderConfig config;
  Dataset inter;
  Dataset target;
  EncoderParams pretrained;

  SweepFixture() {
    SynthPair pair = gen_synthetic_pair_tasks(11, Relatedness::related);
    vocab = build_vocab(synth_vocabulary_corpus(), 400);
    config.vocab_size = vocab.size();
    config.max_len = 16;
    config.d_model = 16;
    config.n_heads = 2;
    config.n_layers = 1;
    config.dropout_rate = 0.0;
    inter = std::move(pair.intermediate);
    inter.train.resize(24);
    inter.dev.resize(8);
    target = std::move(pair.target);
    target.train.resize(16);
    target.dev.resize(10);
    pretrained = init_params(config, 99);
  }

  PhaseConfig quick_phase(int epochs = 1) const {
    PhaseConfig p;
    p.epochs = epochs;
    p.batch_size = 8;
    p.base_lr = 1e-3;
    p.warmup_fraction = 0.0;
    return p;
  }

  RegimePlan baseline_plan() const {
    RegimePlan plan;
    plan.target = target.task;
    plan.phases = {quick_phase()};
    return plan;
  }

  RegimePlan stilts_plan() const {
    RegimePlan plan;
    plan.regime = Regime::stilts;
    plan.intermediate = inter.task;
    plan.target = target.task;
    plan.phases = {quick_phase(), quick_phase()};
    return plan;
  }
};

/// Everything but wall clock.
void check_equivalent(const SweepSummary& a, const SweepSummary& b) {
  CHECK(a.scores == b.scores);
  CHECK(a.mean == b.mean);
  CHECK(a.std_dev == b.std_dev);
  CHECK(a.min_score == b.min_score);
  CHECK(a.max_score == b.max_score);
  CHECK(a.best_seed == b.best_seed);
  CHECK(a.degenerate == b.degenerate);
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].seed == b.records[i].seed);
    CHECK(a.records[i].dev_scores == b.records[i].dev_scores);
    CHECK(a.records[i].train_size == b.records[i].train_size);
    CHECK(a.records[i].aborted == b.records[i].aborted);
    CHECK(a.records[i].degenerate == b.records[i].degenerate);
  }
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream fields(line);
    while (std::getline(fields, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.push_back("");
    rows.push_back(std::move(cells));
  }
  return rows;
}

}  // namespace

TEST_CASE("degenerate_count matches a hand count and respects the boundary") {
  std::vector<double> scores{50.0, 52.0, 47.9, 48.0, 60.0, 50.5, 44.9, 55.1};
  for (double eps : {0.5, 1.0, 2.0, 5.0, 10.0}) {
    CHECK(degenerate_count(scores, 50.0, eps) == oracle_degenerate(scores, 50.0, eps));
  }
  CHECK(degenerate_count(scores, 50.0) == 4);  // 50, 52, 48, 50.5 at the default 2.0
  CHECK(degenerate_count(std::vector<double>{52.0}, 50.0, 2.0) == 1);  // boundary included

  std::vector<double> at_chance(7, 33.3);
  CHECK(degenerate_count(at_chance, 33.3) == 7);
  std::vector<double> clear(7, 43.3);
  CHECK(degenerate_count(clear, 33.3) == 0);

  CHECK_THROWS_AS(degenerate_count(scores, 50.0, 0.0), ConfigError);
  CHECK_THROWS_AS(degenerate_count(scores, 50.0, -1.0), ConfigError);

  auto sens = degenerate_sensitivity(scores, 50.0);
  REQUIRE(sens.size() == 3);
  CHECK(sens.at(1.0) == oracle_degenerate(scores, 50.0, 1.0));
  CHECK(sens.at(2.0) == oracle_degenerate(scores, 50.0, 2.0));
  CHECK(sens.at(5.0) == oracle_degenerate(scores, 50.0, 5.0));
  CHECK(sens.at(1.0) <= sens.at(2.0));
  CHECK(sens.at(2.0) <= sens.at(5.0));
}

TEST_CASE("result_filename spells out target, regime, cap and seed") {
  RunRecord rec;
  rec.target = "fake-sent";
  rec.regime = Regime::stilts;
  rec.cap = 200;
  rec.seed = 7;
  CHECK(result_filename(rec) == "fake-sent_stilts_200_7.json");
  rec.cap.reset();
  rec.regime = Regime::baseline;
  CHECK(result_filename(rec) == "fake-sent_baseline_full_7.json");
}

TEST_CASE("restart_plan re-seeds every phase from the restart seed") {
  SweepFixture fx;
  RegimePlan plan = fx.stilts_plan();
  RegimePlan r1 = restart_plan(plan, 5);
  RegimePlan r2 = restart_plan(plan, 6);
  CHECK(r1.phases[0].seed == derive_seed(5, "phase-0"));
  CHECK(r1.phases[1].seed == derive_seed(5, "phase-1"));
  CHECK(r1.phases[0].seed != r1.phases[1].seed);
  CHECK(r1.phases[0].seed != r2.phases[0].seed);
  CHECK(r1.phases[0].epochs == plan.phases[0].epochs);
  CHECK(r1.regime == plan.regime);
}

TEST_CASE("effective_workers respects the environment cap") {
  unsetenv("STILTS_LAB_THREADS");
  CHECK(effective_workers(8) == 8);
  CHECK(effective_workers(1) == 1);
  CHECK_THROWS_AS(effective_workers(0), ConfigError);

  setenv("STILTS_LAB_THREADS", "2", 1);
  CHECK(effective_workers(8) == 2);
  CHECK(effective_workers(1) == 1);

  setenv("STILTS_LAB_THREADS", "zebra", 1);
  CHECK_THROWS_AS(effective_workers(4), ConfigError);
  setenv("STILTS_LAB_THREADS", "0", 1);
  CHECK_THROWS_AS(effective_workers(4), ConfigError);
  unsetenv("STILTS_LAB_THREADS");
}

TEST_CASE("a single restart summarizes to itself") {
  SweepFixture fx;
  RegimePlan plan = fx.baseline_plan();
  SweepSummary sum = run_restarts(fx.pretrained, plan, nullptr, fx.target, fx.vocab, 1, 40);
  REQUIRE(sum.records.size() == 1);
  REQUIRE(sum.scores.size() == 1);
  CHECK(sum.mean == sum.scores[0]);
  CHECK(sum.std_dev == 0.0);
  CHECK(sum.min_score == sum.max_score);
  CHECK(sum.best_seed == 40);
  CHECK(sum.records[0].seed == 40);

  RunRecord direct = run_regime(fx.pretrained, restart_plan(plan, 40), nullptr, fx.target, fx.vocab, 40);
  CHECK(sum.scores[0] == direct.primary_score);
  CHECK(sum.records[0].dev_scores == direct.dev_scores);

  CHECK_THROWS_AS(run_restarts(fx.pretrained, plan, nullptr, fx.target, fx.vocab, 0, 40), ConfigError);
  CHECK_THROWS_AS(run_restarts(fx.pretrained, plan, nullptr, fx.target, fx.vocab, 2, 40, 1, -1.0),
                  ConfigError);
}

TEST_CASE("sweeps are reproducible, worker-count independent, and seed-keyed") {
  SweepFixture fx;
  RegimePlan plan = fx.baseline_plan();
  SweepSummary serial = run_restarts(fx.pretrained, plan, nullptr, fx.target, fx.vocab, 4, 100, 1);
  SweepSummary pooled = run_restarts(fx.pretrained, plan, nullptr, fx.target, fx.vocab, 4, 100, 3);
  check_equivalent(serial, pooled);

  for (std::size_t i = 0; i < serial.records.size(); ++i) {
    CHECK(serial.records[i].seed == 100 + i);  // ascending seed order
  }

  // mean and std are recomputable from the retained score list.
  double total = 0.0;
  for (double s : serial.scores) total += s;
  double mean = total / static_cast<double>(serial.scores.size());
  double sq = 0.0;
  for (double s : serial.scores) sq += (s - mean) * (s - mean);
  CHECK(serial.mean == mean);
  CHECK(serial.std_dev == doctest::Approx(std::sqrt(sq / 4.0)).epsilon(1e-15));

  // best-of-restarts is the max and monotone in n over nested seed sets.
  double best = serial.scores[0];
  for (double s : serial.scores) best = std::max(best, s);
  CHECK(serial.max_score == best);
  SweepSummary one = run_restarts(fx.pretrained, plan, nullptr, fx.target, fx.vocab, 1, 100, 1);
  SweepSummary two = run_restarts(fx.pretrained, plan, nullptr, fx.target, fx.vocab, 2, 100, 1);
  CHECK(one.max_score <= two.max_score);
  CHECK(two.max_score <= serial.max_score);
  CHECK(one.scores[0] == serial.scores[0]);  // same seed, same run

  // every degenerate flag honors the epsilon rule around chance.
  double chance = plan.target.primary_chance();
  for (const RunRecord& rec : serial.records) {
    CHECK(rec.degenerate == (std::abs(rec.primary_score - chance) <= kDegenerateEpsilon));
  }
  CHECK(serial.degenerate ==
        degenerate_count(serial.scores, chance, kDegenerateEpsilon));
}

TEST_CASE("capped sweeps cap every restart's train size") {
  SweepFixture fx;
  RegimePlan plan = fx.baseline_plan();
  plan.phases[0].train_cap = 8;
  SweepSummary sum = run_restarts(fx.pretrained, plan, nullptr, fx.target, fx.vocab, 3, 300, 2);
  for (const RunRecord& rec : sum.records) {
    CHECK(rec.train_size == 8);
    CHECK(rec.cap == std::optional<std::size_t>(8));
  }

  RegimePlan big = fx.baseline_plan();
  big.phases[0].train_cap = 500;  // larger than the split
  SweepSummary uncapped = run_restarts(fx.pretrained, big, nullptr, fx.target, fx.vocab, 1, 300);
  CHECK(uncapped.records[0].train_size == fx.target.train.size());
}

TEST_CASE("aborted restarts are kept as degenerate chance-level records") {
  SweepFixture fx;
  RegimePlan plan = fx.baseline_plan();
  plan.phases[0].train_cap = 8;
  EncoderParams sick = fx.pretrained;
  sick.layers[0].wq.data()[0] = std::numeric_limits<double>::quiet_NaN();  // non-finite loss at step one
  SweepSummary sum = run_restarts(sick, plan, nullptr, fx.target, fx.vocab, 3, 500, 2);
  REQUIRE(sum.records.size() == 3);  // never dropped
  double chance = plan.target.primary_chance();
  for (const RunRecord& rec : sum.records) {
    CHECK(rec.aborted);
    CHECK(rec.degenerate);
    CHECK(rec.primary_score == chance);
    CHECK(rec.dev_scores == plan.target.chance_scores);
    CHECK(rec.train_size == 8);
  }
  CHECK(sum.degenerate == 3);
  CHECK(sum.mean == chance);
  CHECK(sum.std_dev == 0.0);
}

TEST_CASE("comparison_grid assembles regimes by tasks with substitution and Best-of-Each") {
  SweepFixture fx;
  const std::string tgt = fx.target.task.name;
  const std::string itm = fx.inter.task.name;
  std::map<std::string, Dataset> data;
  data[tgt] = fx.target;
  data[itm] = fx.inter;

  RegimePlan base_t = fx.baseline_plan();
  RegimePlan base_i = fx.baseline_plan();
  base_i.target = fx.inter.task;
  RegimePlan stilts_t = fx.stilts_plan();
  RegimePlan stilts_i = fx.stilts_plan();
  stilts_i.target = fx.inter.task;  // same-task cell, substituted

  // baseline listed last on purpose: the grid still puts it first.
  std::vector<RegimePlan> plans{stilts_t, stilts_i, base_t, base_i};
  std::vector<SweepSummary> sweeps;
  Grid grid = comparison_grid(fx.pretrained, plans, data, fx.vocab, 2, 900, 1, kDegenerateEpsilon,
                              &sweeps);

  CHECK(grid.roster == std::vector<std::string>{tgt, itm});
  REQUIRE(grid.rows.size() == 3);
  CHECK(grid.rows[0].label == "baseline");
  CHECK(grid.rows[1].label == "stilts:" + itm);
  CHECK(grid.rows[2].label == "Best of Each");
  CHECK(sweeps.size() == 3);  // the same-task plan never ran

  const ScoreRow& baseline = grid.rows[0];
  const ScoreRow& stilts = grid.rows[1];
  CHECK(baseline.substituted.empty());
  CHECK(stilts.substituted == std::set<std::string>{itm});
  CHECK(stilts.scores.at(itm) == baseline.scores.at(itm));

  // cells hold the best restart's dev scores.
  SweepSummary direct = run_restarts(fx.pretrained, base_t, nullptr, fx.target, fx.vocab, 2, 900, 1);
  double best_primary = 0.0;
  for (const RunRecord& rec : direct.records) {
    if (rec.seed == direct.best_seed) best_primary = rec.primary_score;
  }
  CHECK(baseline.scores.at(tgt) == std::vector<double>{best_primary});

  // Best-of-Each picks the pooled max per column.
  for (const std::string& task : grid.roster) {
    double top = std::max(pooled_score(baseline, task), pooled_score(stilts, task));
    CHECK(pooled_score(grid.rows[2], task) == top);
  }

  SUBCASE("grid CSV re-parses to the same cell values") {
    std::string csv = render_grid_csv(grid);
    auto rows = parse_csv(csv);
    REQUIRE(rows.size() == 4);  // header + 3 rows
    REQUIRE(rows[0].size() == 3 + grid.roster.size());
    CHECK(rows[0][0] == "model");
    for (std::size_t r = 0; r < grid.rows.size(); ++r) {
      const auto& cells = rows[r + 1];
      CHECK(cells[0] == grid.rows[r].label);
      for (std::size_t c = 0; c < grid.roster.size(); ++c) {
        const auto& values = grid.rows[r].scores.at(grid.roster[c]);
        std::string expect;
        for (std::size_t v = 0; v < values.size(); ++v) {
          char buf[32];
          std::snprintf(buf, sizeof(buf), "%.1f", values[v]);
          if (v > 0) expect += "/";
          expect += buf;
        }
        if (grid.rows[r].substituted.contains(grid.roster[c])) expect += "*";
        CHECK(cells[3 + c] == expect);
      }
    }
  }

  SUBCASE("substitution without a baseline row is rejected") {
    std::vector<RegimePlan> no_base{stilts_t, stilts_i};
    CHECK_THROWS_AS(
        comparison_grid(fx.pretrained, no_base, data, fx.vocab, 1, 900, 1, kDegenerateEpsilon, nullptr),
        ConfigError);
  }

  SUBCASE("incomplete rows are rejected") {
    std::vector<RegimePlan> partial{base_t, base_i, stilts_t};
    try {
      comparison_grid(fx.pretrained, partial, data, fx.vocab, 1, 900);
      FAIL("expected a missing-cell error");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find(itm) != std::string::npos);
    }
  }

  SUBCASE("a single baseline plan yields itself plus an identical Best-of-Each") {
    std::vector<RegimePlan> solo{base_t};
    std::map<std::string, Dataset> solo_data{{tgt, fx.target}};
    Grid g = comparison_grid(fx.pretrained, solo, solo_data, fx.vocab, 1, 900);
    REQUIRE(g.rows.size() == 2);
    CHECK(g.rows[1].scores == g.rows[0].scores);
  }
}

TEST_CASE("stability_export writes point rows plus matching summary rows") {
  SweepFixture fx;
  RegimePlan base = fx.baseline_plan();
  RegimePlan stilts = fx.stilts_plan();
  std::vector<SweepSummary> sweeps;
  sweeps.push_back(run_restarts(fx.pretrained, base, nullptr, fx.target, fx.vocab, 3, 700, 2));
  sweeps.push_back(run_restarts(fx.pretrained, stilts, &fx.inter, fx.target, fx.vocab, 3, 700, 2));

  std::string csv = stability_export(sweeps);
  auto rows = parse_csv(csv);
  REQUIRE(rows.size() == 9);  // header + 2 * (3 points + 1 summary)
  CHECK(rows[0] == std::vector<std::string>{"task", "regime", "cap", "kind", "seed", "score", "std"});

  for (std::size_t block = 0; block < 2; ++block) {
    std::size_t first = 1 + block * 4;
    std::vector<double> points;
    for (std::size_t i = first; i < first + 3; ++i) {
      REQUIRE(rows[i].size() == 7);
      CHECK(rows[i][3] == "point");
      CHECK(rows[i][0] == fx.target.task.name);
      points.push_back(std::strtod(rows[i][5].c_str(), nullptr));
    }
    const auto& summary = rows[first + 3];
    CHECK(summary[3] == "summary");
    CHECK(summary[4] == "");
    double total = 0.0;
    for (double p : points) total += p;
    double mean = total / 3.0;
    double sq = 0.0;
    for (double p : points) sq += (p - mean) * (p - mean);
    CHECK(std::strtod(summary[5].c_str(), nullptr) == mean);
    CHECK(std::strtod(summary[6].c_str(), nullptr) == doctest::Approx(std::sqrt(sq / 3.0)).epsilon(1e-14));
  }
  CHECK(rows[1][1] == "baseline");
  CHECK(rows[5][1] == "stilts:" + fx.inter.task.name);
  CHECK(rows[1][2] == "full");

  CHECK(stability_export({}) == "task,regime,cap,kind,seed,score,std\n");
}
