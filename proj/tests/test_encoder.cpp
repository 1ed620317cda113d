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
#include <cstdlib>
#include <vector>

#include "stilts/encoder.hpp"
#include "stilts/errors.hpp"
#include "stilts/optim.hpp"
#include "stilts/rng.hpp"

using namespace stilts;

namespace {

EncoderConfig tiny_config() {
  EncoderConfig cfg;
  cfg.vocab_size = 17;
  cfg.max_len = 8;
  cfg.d_model = 12;
  cfg.n_heads = 2;
  cfg.n_layers = 2;
  cfg.dropout_rate = 0.0;
  return cfg;
}

std::vector<Tensor> collect_params(const EncoderParams& p) {
  std::vector<Tensor> out;
  p.for_each([&](const std::string&, const Tensor& t) { out.push_back(t); });
  return out;
}

}  // namespace

TEST_CASE("config validation") {
  EncoderConfig cfg = tiny_config();
  CHECK_NOTHROW(cfg.validate());
  cfg.n_heads = 5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny_config();
  cfg.dropout_rate = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny_config();
  cfg.vocab_size = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("init is deterministic in seed and distinct across seeds") {
  EncoderConfig cfg = tiny_config();
  EncoderParams a = init_params(cfg, 42);
  EncoderParams b = init_params(cfg, 42);
  EncoderParams c = init_params(cfg, 43);
  CHECK(collect_params(a) == collect_params(b));
  CHECK(collect_params(a) != collect_params(c));
  CHECK(a.all_finite());

  bool gains_are_one = true;
  bool biases_are_zero = true;
  a.for_each([&](const std::string& name, const Tensor& t) {
    if (t.ndim() == 2) return;
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (name.ends_with("_g")) gains_are_one = gains_are_one && t[i] == 1.0;
      else biases_are_zero = biases_are_zero && t[i] == 0.0;
    }
  });
  CHECK(gains_are_one);
  CHECK(biases_are_zero);
}

TEST_CASE("parameter count equals the closed-form hand count") {
  EncoderConfig cfg;
  cfg.vocab_size = 100;
  cfg.max_len = 32;
  cfg.d_model = 32;
  cfg.n_heads = 4;
  cfg.n_layers = 2;

  // Hand count, spelled out shape by shape.
  std::size_t embeddings = 100 * 32 + 32 * 32;
  std::size_t attn = 4 * (32 * 32 + 32);
  std::size_t layer_norms = 2 * (32 + 32);
  std::size_t ffn = (32 * 128 + 128) + (128 * 32 + 32);
  std::size_t per_layer = attn + layer_norms + ffn;
  std::size_t final_norm = 32 + 32;
  std::size_t lm_head = 32 * 100 + 100;
  std::size_t pool_proj = 32 * 32 + 32;
  std::size_t expected = embeddings + 2 * per_layer + final_norm + lm_head + pool_proj;

  CHECK(param_count(cfg) == expected);
  CHECK(init_params(cfg, 1).param_count() == expected);
}

TEST_CASE("padding invariance for hidden states and pooling") {
  EncoderConfig cfg = tiny_config();
  EncoderParams p = init_params(cfg, 7);
  std::vector<int> ids{2, 5, 6, 7, 8};
  std::vector<int> mask{1, 1, 1, 1, 1};
  Tensor bare = encode(p, ids, mask);

  std::vector<int> padded_ids = ids;
  std::vector<int> padded_mask = mask;
  padded_ids.insert(padded_ids.end(), {0, 0, 0});
  padded_mask.insert(padded_mask.end(), {0, 0, 0});
  Tensor padded = encode(p, padded_ids, padded_mask);

  for (std::size_t i = 0; i < ids.size(); ++i)
    for (std::size_t j = 0; j < cfg.d_model; ++j)
      CHECK(std::abs(bare.at(i, j) - padded.at(i, j)) <= 1e-9);

  for (Pooling pooling : {Pooling::cls_token, Pooling::last_token}) {
    Graph g1;
    BoundParams bp1 = bind_params(g1, p);
    int pooled1 = pool_nodes(g1, encode_nodes(g1, bp1, cfg, ids, mask, nullptr), pooling, mask);
    Graph g2;
    BoundParams bp2 = bind_params(g2, p);
    int pooled2 =
        pool_nodes(g2, encode_nodes(g2, bp2, cfg, padded_ids, padded_mask, nullptr), pooling, padded_mask);
    for (std::size_t j = 0; j < cfg.d_model; ++j)
      CHECK(std::abs(g1.value(pooled1)[j] - g2.value(pooled2)[j]) <= 1e-9);
  }
}

TEST_CASE("cls pooling is exactly the first hidden state") {
  EncoderConfig cfg = tiny_config();
  EncoderParams p = init_params(cfg, 19);
  std::vector<int> ids{2, 9, 10, 3};
  std::vector<int> mask{1, 1, 1, 1};
  Graph g;
  BoundParams bp = bind_params(g, p);
  int hidden = encode_nodes(g, bp, cfg, ids, mask, nullptr);
  int pooled = pool_nodes(g, hidden, Pooling::cls_token, mask);
  for (std::size_t j = 0; j < cfg.d_model; ++j) CHECK(g.value(pooled)[j] == g.value(hidden).at(0, j));
}

TEST_CASE("causal encoder is blind to the future") {
  EncoderConfig cfg = tiny_config();
  cfg.objective_style = ObjectiveStyle::causal_lm;
  EncoderParams p = init_params(cfg, 5);
  std::vector<int> ids{5, 6, 7, 8, 9, 10};
  std::vector<int> mask(6, 1);
  Tensor before = encode(p, ids, mask);
  std::vector<int> changed = ids;
  changed[3] = 16;
  Tensor after = encode(p, changed, mask);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < cfg.d_model; ++j) CHECK(before.at(i, j) == after.at(i, j));
  bool pos3_changed = false;
  for (std::size_t j = 0; j < cfg.d_model; ++j) pos3_changed = pos3_changed || before.at(3, j) != after.at(3, j);
  CHECK(pos3_changed);
}

TEST_CASE("causal gradients at future positions are exactly zero") {
  EncoderConfig cfg = tiny_config();
  cfg.objective_style = ObjectiveStyle::causal_lm;
  EncoderParams p = init_params(cfg, 6);
  std::vector<int> ids{5, 6, 7, 8, 9};
  std::vector<int> mask(5, 1);
  Graph g;
  BoundParams bp = bind_params(g, p);
  int hidden = encode_nodes(g, bp, cfg, ids, mask, nullptr);
  std::size_t probe = 2;  // loss reads only position 2
  int loss = g.reduce_sum(g.slice(hidden, 0, probe, probe + 1));
  g.backward(loss);
  const Tensor& pos_grad = g.grad(bp.pos_emb);
  for (std::size_t i = probe + 1; i < ids.size(); ++i)
    for (std::size_t j = 0; j < cfg.d_model; ++j) CHECK(pos_grad.at(i, j) == 0.0);
  bool past_nonzero = false;
  for (std::size_t j = 0; j < cfg.d_model; ++j) past_nonzero = past_nonzero || pos_grad.at(1, j) != 0.0;
  CHECK(past_nonzero);
}

TEST_CASE("masked lm attends bidirectionally") {
  EncoderConfig cfg = tiny_config();
  cfg.objective_style = ObjectiveStyle::masked_lm;
  EncoderParams p = init_params(cfg, 8);
  std::vector<int> ids{5, 6, 7, 8, 9, 10};
  std::vector<int> mask(6, 1);
  Tensor before = encode(p, ids, mask);
  std::vector<int> changed = ids;
  changed[3] = 16;
  Tensor after = encode(p, changed, mask);
  for (std::size_t i = 0; i < 6; ++i) {
    bool row_changed = false;
    for (std::size_t j = 0; j < cfg.d_model; ++j) row_changed = row_changed || before.at(i, j) != after.at(i, j);
    CHECK(row_changed);
  }
}

TEST_CASE("full encoder gradient check stays under 1e-5") {
  EncoderConfig cfg = tiny_config();
  EncoderParams p = init_params(cfg, 3);
  CHECK(p.param_count() <= 5000);
  std::vector<Tensor> params = collect_params(p);
  std::vector<int> ids{2, 5, 6, 3, 7, 3};
  std::vector<int> mask(6, 1);

  SUBCASE("joint encoding with LM loss") {
    std::vector<int> targets{-1, 8, 9, -1, 10, -1};
    auto build = [&](Graph& g, const std::vector<int>& node_ids) {
      BoundParams bp = bound_from_ordered(cfg, node_ids);
      int hidden = encode_nodes(g, bp, cfg, ids, mask, nullptr);
      return g.cross_entropy(lm_logits_nodes(g, bp, hidden), targets);
    };
    CHECK(grad_check(build, params) < 1e-5);
  }

  SUBCASE("siamese feature path") {
    std::vector<int> ids_a{5, 6, 7};
    std::vector<int> ids_b{8, 9};
    std::vector<int> mask_a(3, 1), mask_b(2, 1);
    Rng rng(50);
    Tensor target = rng.normal_tensor({1, 4 * cfg.d_model}, 1.0);
    auto build = [&](Graph& g, const std::vector<int>& node_ids) {
      BoundParams bp = bound_from_ordered(cfg, node_ids);
      int ha = encode_nodes(g, bp, cfg, ids_a, mask_a, nullptr);
      int hb = encode_nodes(g, bp, cfg, ids_b, mask_b, nullptr);
      int feat = siamese_feature_nodes(g, bp, ha, 3, hb, 2);
      return g.mse(feat, g.constant(target));
    };
    CHECK(grad_check(build, params) < 1e-5);
  }
}

TEST_CASE("siamese feature blocks behave on identical segments") {
  EncoderConfig cfg = tiny_config();
  cfg.pooling = Pooling::siamese_pair;
  EncoderParams p = init_params(cfg, 9);
  std::vector<int> ids{5, 6, 7, 8};
  std::vector<int> mask(4, 1);
  Graph g;
  BoundParams bp = bind_params(g, p);
  int ha = encode_nodes(g, bp, cfg, ids, mask, nullptr);
  int hb = encode_nodes(g, bp, cfg, ids, mask, nullptr);
  int feat = siamese_feature_nodes(g, bp, ha, 4, hb, 4);
  const Tensor& f = g.value(feat);
  std::size_t d = cfg.d_model;
  CHECK(f.cols() == 4 * d);
  for (std::size_t j = 0; j < d; ++j) {
    double u = f.at(0, j);
    CHECK(f.at(0, d + j) == u);                                // v' == u'
    CHECK(f.at(0, 2 * d + j) == 0.0);                          // |u'-v'| == 0
    CHECK(f.at(0, 3 * d + j) == doctest::Approx(u * u).epsilon(1e-12));  // u'*v' == u'^2
  }
}

TEST_CASE("pooling rejects misuse") {
  EncoderConfig cfg = tiny_config();
  EncoderParams p = init_params(cfg, 14);
  std::vector<int> ids{2, 5};
  std::vector<int> mask{1, 1};
  Graph g;
  BoundParams bp = bind_params(g, p);
  int hidden = encode_nodes(g, bp, cfg, ids, mask, nullptr);
  CHECK_THROWS_AS(pool_nodes(g, hidden, Pooling::siamese_pair, mask), ConfigError);
  std::vector<int> all_pad{0, 0};
  CHECK_THROWS_AS(pool_nodes(g, hidden, Pooling::last_token, all_pad), ConfigError);
}

TEST_CASE("encode input validation") {
  EncoderConfig cfg = tiny_config();
  EncoderParams p = init_params(cfg, 15);
  std::vector<int> mask{1};
  std::vector<int> bad_id{17};
  CHECK_THROWS_AS(encode(p, bad_id, mask), ConfigError);
  std::vector<int> too_long(cfg.max_len + 1, 5);
  std::vector<int> long_mask(cfg.max_len + 1, 1);
  CHECK_THROWS_AS(encode(p, too_long, long_mask), ConfigError);
  std::vector<int> empty;
  CHECK_THROWS_AS(encode(p, empty, empty), ConfigError);
}

TEST_CASE("swap_head sizes outputs and leaves the encoder alone") {
  EncoderConfig cfg = tiny_config();
  EncoderParams p = init_params(cfg, 30);
  std::vector<int> ids{2, 5, 6};
  std::vector<int> mask{1, 1, 1};
  Tensor before = encode(p, ids, mask);

  Head h3 = swap_head(cfg, HeadKind::classification, 3, 100);
  CHECK(h3.out_dim() == 3);
  CHECK(h3.w.rows() == cfg.pooled_dim());
  Head again = swap_head(cfg, HeadKind::classification, 3, 101);
  CHECK(h3.w != again.w);
  Head reg = swap_head(cfg, HeadKind::regression, 0, 102);
  CHECK(reg.out_dim() == 1);
  CHECK_THROWS_AS(swap_head(cfg, HeadKind::classification, 1, 103), ConfigError);

  CHECK(encode(p, ids, mask) == before);
}

TEST_CASE("task gradients reach the encoder through the head") {
  EncoderConfig cfg = tiny_config();
  EncoderParams p = init_params(cfg, 31);
  Head head = swap_head(cfg, HeadKind::classification, 2, 32);
  std::vector<int> ids{2, 5, 6, 9};
  std::vector<int> mask(4, 1);
  Graph g;
  BoundParams bp = bind_params(g, p);
  BoundHead bh = bind_head(g, head);
  int pooled = pool_nodes(g, encode_nodes(g, bp, cfg, ids, mask, nullptr), Pooling::cls_token, mask);
  std::vector<int> label{1};
  int loss = g.cross_entropy(head_logits_nodes(g, bh, pooled), label);
  g.backward(loss);
  auto nonzero = [&](int id) {
    const Tensor& t = g.grad(id);
    for (std::size_t i = 0; i < t.size(); ++i)
      if (t[i] != 0.0) return true;
    return false;
  };
  CHECK(nonzero(bh.w));
  CHECK(nonzero(bp.tok_emb));
  CHECK(nonzero(bp.layers[0].wq));
  CHECK(nonzero(bp.layers[1].w2));
}

TEST_CASE("lm_logits covers boundaries and softmax rows normalize") {
  EncoderConfig cfg = tiny_config();
  cfg.objective_style = ObjectiveStyle::causal_lm;
  EncoderParams p = init_params(cfg, 33);
  std::vector<int> one{5};
  std::vector<int> one_mask{1};
  Tensor hidden = encode(p, one, one_mask);
  auto positions = predictable_positions(cfg, 1, {});
  CHECK(positions.empty());
  CHECK(lm_logits(p, hidden, positions).empty());

  std::vector<int> ids{5, 6, 7};
  std::vector<int> mask(3, 1);
  Tensor hidden3 = encode(p, ids, mask);
  auto pos3 = predictable_positions(cfg, 3, {});
  CHECK(pos3 == std::vector<std::size_t>{0, 1});
  auto rows = lm_logits(p, hidden3, pos3);
  CHECK(rows.size() == 2);
  for (const Tensor& row : rows) {
    CHECK(row.size() == cfg.vocab_size);
    double m = row[0];
    for (std::size_t i = 1; i < row.size(); ++i) m = std::max(m, row[i]);
    double sum = 0.0;
    for (std::size_t i = 0; i < row.size(); ++i) sum += std::exp(row[i] - m);
    double total = 0.0;
    for (std::size_t i = 0; i < row.size(); ++i) total += std::exp(row[i] - m) / sum;
    CHECK(std::abs(total - 1.0) < 1e-12);
  }
  std::vector<std::size_t> bad{9};
  CHECK_THROWS_AS(lm_logits(p, hidden3, bad), ConfigError);
}

TEST_CASE("dropout only fires in training mode and follows its stream") {
  EncoderConfig cfg = tiny_config();
  cfg.dropout_rate = 0.5;
  EncoderParams p = init_params(cfg, 40);
  std::vector<int> ids{2, 5, 6};
  std::vector<int> mask(3, 1);
  auto run = [&](Rng* rng) {
    Graph g;
    BoundParams bp = bind_params(g, p);
    return g.value(encode_nodes(g, bp, cfg, ids, mask, rng));
  };
  Tensor eval1 = run(nullptr);
  Tensor eval2 = run(nullptr);
  CHECK(eval1 == eval2);
  Rng r1(derive_seed(7, "dropout"));
  Rng r2(derive_seed(7, "dropout"));
  Rng r3(derive_seed(8, "dropout"));
  Tensor t1 = run(&r1);
  Tensor t2 = run(&r2);
  Tensor t3 = run(&r3);
  CHECK(t1 == t2);
  CHECK(t1 != t3);
  CHECK(t1 != eval1);
}

TEST_CASE("a tiny causal model overfits a repeating corpus") {
  EncoderConfig cfg;
  cfg.vocab_size = 12;
  cfg.max_len = 10;
  cfg.d_model = 16;
  cfg.n_heads = 2;
  cfg.n_layers = 1;
  cfg.objective_style = ObjectiveStyle::causal_lm;
  EncoderParams p = init_params(cfg, 77);

  // 5-token repeating pattern 5 6 7 8 9 5 6 7 8 9.
  std::vector<int> ids{5, 6, 7, 8, 9, 5, 6, 7, 8, 9};
  std::vector<int> mask(ids.size(), 1);
  std::vector<int> targets(ids.size());
  for (std::size_t i = 0; i + 1 < ids.size(); ++i) targets[i] = ids[i + 1];
  targets.back() = -1;

  AdamState opt;
  double first_loss = 0.0, last_loss = 0.0;
  for (int step = 0; step < 200; ++step) {
    Graph g;
    BoundParams bp = bind_params(g, p);
    int hidden = encode_nodes(g, bp, cfg, ids, mask, nullptr);
    int loss = g.cross_entropy(lm_logits_nodes(g, bp, hidden), targets);
    if (step == 0) first_loss = g.value(loss)[0];
    last_loss = g.value(loss)[0];
    g.backward(loss);
    std::vector<Tensor*> slots;
    p.for_each([&](const std::string&, Tensor& t) { slots.push_back(&t); });
    std::vector<const Tensor*> grads;
    for (int id : bp.ordered) grads.push_back(&g.grad(id));
    adam_step(slots, grads, opt, 1e-2);
  }
  CHECK(last_loss < first_loss * 0.2);

  Tensor hidden = encode(p, ids, mask);
  auto positions = predictable_positions(cfg, ids.size(), {});
  auto rows = lm_logits(p, hidden, positions);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::size_t argmax = 0;
    for (std::size_t j = 1; j < rows[i].size(); ++j)
      if (rows[i][j] > rows[i][argmax]) argmax = j;
    CHECK(argmax == static_cast<std::size_t>(ids[i + 1]));
  }
}
