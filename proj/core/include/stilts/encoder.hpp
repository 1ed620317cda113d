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

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stilts/graph.hpp"
#include "stilts/rng.hpp"
#include "stilts/tensor.hpp"

namespace stilts {

enum class Pooling { cls_token, last_token, siamese_pair };
enum class ObjectiveStyle { masked_lm, causal_lm };

const char* pooling_name(Pooling p);
const char* objective_style_name(ObjectiveStyle s);
Pooling pooling_from_name(const std::string& name);
ObjectiveStyle objective_style_from_name(const std::string& name);

/// Architecture of the small pre-norm Transformer encoder. The
/// feed-forward hidden width is fixed at 4 * d_model; the siamese
/// pooling projection width is d_model.
struct EncoderConfig {
  std::size_t vocab_size = 0;
  std::size_t max_len = 32;
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t n_layers = 2;
  double dropout_rate = 0.0;
  Pooling pooling = Pooling::cls_token;
  ObjectiveStyle objective_style = ObjectiveStyle::masked_lm;

  void validate() const;  // throws ConfigError on violation
  std::size_t head_dim() const { return d_model / n_heads; }
  std::size_t pooled_dim() const { return pooling == Pooling::siamese_pair ? 4 * d_model : d_model; }

  bool operator==(const EncoderConfig&) const = default;
};

struct LayerParams {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln1_g, ln1_b, ln2_g, ln2_b;
  Tensor w1, b1, w2, b2;  // feed-forward, hidden 4*d_model
};

/// All trainable weights. for_each visits tensors in one canonical order;
/// the optimizer, the parameter binder and the checkpoint store all key
/// off that order (and the names it reports).
struct EncoderParams {
  EncoderConfig config;
  Tensor tok_emb;  // (vocab, d)
  Tensor pos_emb;  // (max_len, d)
  std::vector<LayerParams> layers;
  Tensor final_ln_g, final_ln_b;
  Tensor lm_w, lm_b;      // LM head: (d, vocab), (vocab)
  Tensor proj_w, proj_b;  // siamese pooling projection: (d, d), (d)

  template <typename F>
  void for_each(F&& f) {
    f("tok_emb", tok_emb);
    f("pos_emb", pos_emb);
    for (std::size_t i = 0; i < layers.size(); ++i) {
      auto n = [&](const char* field) { return "layers." + std::to_string(i) + "." + field; };
      LayerParams& l = layers[i];
      f(n("wq"), l.wq);
      f(n("bq"), l.bq);
      f(n("wk"), l.wk);
      f(n("bk"), l.bk);
      f(n("wv"), l.wv);
      f(n("bv"), l.bv);
      f(n("wo"), l.wo);
      f(n("bo"), l.bo);
      f(n("ln1_g"), l.ln1_g);
      f(n("ln1_b"), l.ln1_b);
      f(n("w1"), l.w1);
      f(n("b1"), l.b1);
      f(n("w2"), l.w2);
      f(n("b2"), l.b2);
      f(n("ln2_g"), l.ln2_g);
      f(n("ln2_b"), l.ln2_b);
    }
    f("final_ln_g", final_ln_g);
    f("final_ln_b", final_ln_b);
    f("lm_w", lm_w);
    f("lm_b", lm_b);
    f("proj_w", proj_w);
    f("proj_b", proj_b);
  }

  template <typename F>
  void for_each(F&& f) const {
    const_cast<EncoderParams*>(this)->for_each(
        [&](const std::string& name, Tensor& t) { f(name, static_cast<const Tensor&>(t)); });
  }

  std::size_t param_count() const;
  bool all_finite() const;
};

/// Closed-form parameter count for a config (matches EncoderParams).
std::size_t param_count(const EncoderConfig& config);

/// Weights ~ normal(0, 0.02), biases and layer-norm shifts zero,
/// layer-norm gains one. Deterministic in (config, seed).
EncoderParams init_params(const EncoderConfig& config, std::uint64_t seed);

enum class HeadKind { classification, regression };

/// Task output layer on the pooled representation. Regression heads have
/// out_dim 1. Fresh heads never reuse weights from an earlier head.
struct Head {
  HeadKind kind = HeadKind::classification;
  std::size_t n_classes = 2;
  Tensor w;  // (pooled_dim, out_dim)
  Tensor b;  // (out_dim)

  std::size_t out_dim() const { return kind == HeadKind::regression ? 1 : n_classes; }
};

/// Randomly initialized replacement head; the encoder is untouched.
Head swap_head(const EncoderConfig& config, HeadKind kind, std::size_t n_classes, std::uint64_t seed);

struct BoundLayer {
  int wq, bq, wk, bk, wv, bv, wo, bo;
  int ln1_g, ln1_b, ln2_g, ln2_b;
  int w1, b1, w2, b2;
};

/// Parameter node ids for one graph. `ordered` follows
/// EncoderParams::for_each, which keeps optimizer state aligned.
struct BoundParams {
  int tok_emb = -1, pos_emb = -1;
  std::vector<BoundLayer> layers;
  int final_ln_g = -1, final_ln_b = -1;
  int lm_w = -1, lm_b = -1;
  int proj_w = -1, proj_b = -1;
  std::vector<int> ordered;
};

struct BoundHead {
  int w = -1, b = -1;
};

BoundParams bind_params(Graph& g, const EncoderParams& params);
BoundHead bind_head(Graph& g, const Head& head);

/// Rebuilds the named view from node ids laid out in for_each order
/// (e.g. parameter nodes created by a gradient-check harness).
BoundParams bound_from_ordered(const EncoderConfig& config, std::span<const int> ordered);

/// Forward pass over one sequence; returns the (len, d_model) hidden-state
/// node after the final layer norm. mask[i] == 1 marks a real token,
/// 0 a padding position; padding never influences non-pad outputs.
/// causal_lm additionally hides positions j > i from position i.
/// dropout_rng == nullptr runs in eval mode (no dropout).
int encode_nodes(Graph& g, const BoundParams& bp, const EncoderConfig& config, std::span<const int> ids,
                 std::span<const int> mask, Rng* dropout_rng);

/// Pooled (1, d_model) node for cls_token / last_token pooling.
int pool_nodes(Graph& g, int hidden, Pooling pooling, std::span<const int> mask);

/// Appendix-style siamese feature [u'; v'; |u'-v'|; u'*v'] of shape
/// (1, 4*d_model); u', v' are projected masked max-pools of the two
/// independently encoded segments.
int siamese_feature_nodes(Graph& g, const BoundParams& bp, int hidden_a, std::size_t len_a, int hidden_b,
                          std::size_t len_b);

/// Task logits (1, out_dim) from a pooled representation.
int head_logits_nodes(Graph& g, const BoundHead& head, int pooled);

/// Full-sequence LM logits node (len, vocab): hidden * lm_w + lm_b.
int lm_logits_nodes(Graph& g, const BoundParams& bp, int hidden);

/// Value-level convenience: runs encode_nodes in a throwaway graph.
Tensor encode(const EncoderParams& params, std::span<const int> ids, std::span<const int> mask);

/// Logits rows for the requested hidden-state positions, one (vocab)
/// tensor per position. Empty positions give an empty result (e.g. a
/// length-1 causal sequence has nothing to predict).
std::vector<Tensor> lm_logits(const EncoderParams& params, const Tensor& hidden,
                              std::span<const std::size_t> positions);

/// The positions whose next/masked token an LM objective predicts:
/// causal_lm -> 0..len-2; masked_lm -> the supplied masked positions.
std::vector<std::size_t> predictable_positions(const EncoderConfig& config, std::size_t len,
                                               std::span<const std::size_t> masked_positions);

}  // namespace stilts
