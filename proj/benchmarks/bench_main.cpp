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
#include <benchmark/benchmark.h>

#include <vector>

#include "stilts/datakit.hpp"
#include "stilts/encoder.hpp"
#include "stilts/graph.hpp"
#include "stilts/metrics.hpp"
#include "stilts/optim.hpp"
#include "stilts/pipeline.hpp"
#include "stilts/rng.hpp"

namespace {

using namespace stilts;

EncoderConfig bench_config() {
  EncoderConfig c;
  c.vocab_size = 400;
  c.max_len = 32;
  c.d_model = 32;
  c.n_heads = 4;
  c.n_layers = 2;
  c.dropout_rate = 0.0;
  return c;
}

void BM_matmul_backward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Tensor a = rng.normal_tensor({n, n}, 1.0);
  const Tensor b = rng.normal_tensor({n, n}, 1.0);
  for (auto _ : state) {
    Graph g;
    const int pa = g.parameter(a);
    const int pb = g.parameter(b);
    const int loss = g.mse(g.matmul(pa, pb), g.constant(Tensor({n, n})));
    g.backward(loss);
    benchmark::DoNotOptimize(g.grad(pa).data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}

void BM_encoder_forward(benchmark::State& state) {
  const EncoderConfig config = bench_config();
  const EncoderParams params = init_params(config, 3);
  std::vector<int> ids(config.max_len), mask(config.max_len, 1);
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = 5 + static_cast<int>(i % 50);
  for (auto _ : state) {
    const Tensor hidden = encode(params, ids, mask);
    benchmark::DoNotOptimize(hidden.data());
  }
}

void BM_encoder_train_step(benchmark::State& state) {
  const EncoderConfig config = bench_config();
  EncoderParams params = init_params(config, 3);
  const Head head = swap_head(config, HeadKind::classification, 2, 7);
  TaskSpec task;
  task.name = "bench";
  Example ex;
  ex.guid = "b-0";
  for (int i = 0; i < 12; ++i) ex.text_a.push_back("tok" + std::to_string(i));
  ex.label = 1.0;
  const Vocab vocab = build_vocab(std::vector<std::vector<std::string>>{ex.text_a}, 400);
  const EncodedExample enc = encode_example(config, task, ex, vocab);
  for (auto _ : state) {
    Graph g;
    const BoundParams bp = bind_params(g, params);
    const BoundHead bh = bind_head(g, head);
    const int loss = task_loss_nodes(g, bp, config, bh, task, enc, ex.label, nullptr);
    g.backward(loss);
    benchmark::DoNotOptimize(g.grad(bp.tok_emb).data());
  }
}

void BM_matthews(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(5);
  std::vector<int> preds(n), golds(n);
  for (std::size_t i = 0; i < n; ++i) {
    preds[i] = static_cast<int>(rng.uniform_int(0, 1));
    golds[i] = static_cast<int>(rng.uniform_int(0, 1));
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(matthews(preds, golds));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}

void BM_spearman(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(6);
  std::vector<double> xs(n), ys(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = rng.uniform();
    ys[i] = rng.uniform();
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(spearman(xs, ys));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}

void BM_gen_fake_sentences(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto corpus = gen_desk_corpus(50, 2);
  std::uint64_t seed = 0;
  for (auto _ : state) {
    const Dataset ds = gen_fake_sentences(corpus, n, ++seed);
    benchmark::DoNotOptimize(ds.train.size());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}

BENCHMARK(BM_matmul_backward)->Arg(16)->Arg(64);
BENCHMARK(BM_encoder_forward);
BENCHMARK(BM_encoder_train_step);
BENCHMARK(BM_matthews)->Arg(10000);
BENCHMARK(BM_spearman)->Arg(10000);
BENCHMARK(BM_gen_fake_sentences)->Arg(1000);

}  // namespace

BENCHMARK_MAIN();
