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
#include "stilts/encoder.hpp"

#include <cmath>
#include <stdexcept>

#include "stilts/errors.hpp"

namespace stilts {

namespace {

constexpr double kInitStd = 0.02;
constexpr double kAttnMaskFill = -1e30;

bool ends_with(const std::string& s, const char* suffix) {
  std::string suf(suffix);
  return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
}

}  // namespace

const char* pooling_name(Pooling p) {
  switch (p) {
    case Pooling::cls_token: return "cls_token";
    case Pooling::last_token: return "last_token";
    case Pooling::siamese_pair: return "siamese_pair";
  }
  return "?";
}

const char* objective_style_name(ObjectiveStyle s) {
  return s == ObjectiveStyle::masked_lm ? "masked_lm" : "causal_lm";
}

Pooling pooling_from_name(const std::string& name) {
  if (name == "cls_token") return Pooling::cls_token;
  if (name == "last_token") return Pooling::last_token;
  if (name == "siamese_pair") return Pooling::siamese_pair;
  throw ConfigError("unknown pooling '" + name + "'");
}

ObjectiveStyle objective_style_from_name(const std::string& name) {
  if (name == "masked_lm") return ObjectiveStyle::masked_lm;
  if (name == "causal_lm") return ObjectiveStyle::causal_lm;
  throw ConfigError("unknown objective_style '" + name + "'");
}

void EncoderConfig::validate() const {
  if (vocab_size == 0) throw ConfigError("encoder config: vocab_size must be positive");
  if (max_len == 0) throw ConfigError("encoder config: max_len must be positive");
  if (d_model == 0) throw ConfigError("encoder config: d_model must be positive");
  if (n_layers == 0) throw ConfigError("encoder config: n_layers must be positive");
  if (n_heads == 0 || d_model % n_heads != 0) {
    throw ConfigError("encoder config: n_heads must divide d_model (" + std::to_string(n_heads) + " vs " +
                      std::to_string(d_model) + ")");
  }
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
    throw ConfigError("encoder config: dropout_rate must be in [0, 1)");
  }
}

std::size_t EncoderParams::param_count() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const Tensor& t) { n += t.size(); });
  return n;
}

bool EncoderParams::all_finite() const {
  bool ok = true;
  for_each([&](const std::string&, const Tensor& t) { ok = ok && t.all_finite(); });
  return ok;
}

std::size_t param_count(const EncoderConfig& config) {
  std::size_t v = config.vocab_size, l = config.max_len, d = config.d_model, h = 4 * config.d_model;
  std::size_t attn = 4 * (d * d + d);
  std::size_t norms = 4 * d;
  std::size_t ffn = (d * h + h) + (h * d + d);
  return v * d + l * d + config.n_layers * (attn + norms + ffn) + 2 * d + (d * v + v) + (d * d + d);
}

EncoderParams init_params(const EncoderConfig& config, std::uint64_t seed) {
  config.validate();
  std::size_t v = config.vocab_size, l = config.max_len, d = config.d_model, h = 4 * config.d_model;

  EncoderParams p;
  p.config = config;
  p.tok_emb = Tensor({v, d});
  p.pos_emb = Tensor({l, d});
  p.layers.resize(config.n_layers);
  for (LayerParams& lp : p.layers) {
    lp.wq = Tensor({d, d});
    lp.bq = Tensor({d});
    lp.wk = Tensor({d, d});
    lp.bk = Tensor({d});
    lp.wv = Tensor({d, d});
    lp.bv = Tensor({d});
    lp.wo = Tensor({d, d});
    lp.bo = Tensor({d});
    lp.ln1_g = Tensor({d});
    lp.ln1_b = Tensor({d});
    lp.w1 = Tensor({d, h});
    lp.b1 = Tensor({h});
    lp.w2 = Tensor({h, d});
    lp.b2 = Tensor({d});
    lp.ln2_g = Tensor({d});
    lp.ln2_b = Tensor({d});
  }
  p.final_ln_g = Tensor({d});
  p.final_ln_b = Tensor({d});
  p.lm_w = Tensor({d, v});
  p.lm_b = Tensor({v});
  p.proj_w = Tensor({d, d});
  p.proj_b = Tensor({d});

  Rng rng(derive_seed(seed, "encoder-init"));
  p.for_each([&](const std::string& name, Tensor& t) {
    if (t.ndim() == 2) {
      for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, kInitStd);
    } else if (ends_with(name, "_g")) {
      t.fill(1.0);  // layer-norm gains
    }  // biases and layer-norm shifts stay zero
  });
  return p;
}

Head swap_head(const EncoderConfig& config, HeadKind kind, std::size_t n_classes, std::uint64_t seed) {
  if (kind == HeadKind::classification && n_classes < 2) {
    throw ConfigError("head: classification needs at least 2 classes");
  }
  Head head;
  head.kind = kind;
  head.n_classes = kind == HeadKind::regression ? 1 : n_classes;
  std::size_t out = head.out_dim();
  head.w = Tensor({config.pooled_dim(), out});
  head.b = Tensor({out});
  Rng rng(derive_seed(seed, "head-init"));
  for (std::size_t i = 0; i < head.w.size(); ++i) head.w[i] = rng.normal(0.0, kInitStd);
  return head;
}

namespace {

void assign_bound(BoundParams& bp, const std::string& name, int id) {
  if (name == "tok_emb") {
      bp.tok_emb = id;
    } else if (name == "pos_emb") {
      bp.pos_emb = id;
    } else if (name == "final_ln_g") {
      bp.final_ln_g = id;
    } else if (name == "final_ln_b") {
      bp.final_ln_b = id;
    } else if (name == "lm_w") {
      bp.lm_w = id;
    } else if (name == "lm_b") {
      bp.lm_b = id;
    } else if (name == "proj_w") {
      bp.proj_w = id;
    } else if (name == "proj_b") {
      bp.proj_b = id;
    } else {
      std::size_t dot1 = name.find('.');
      std::size_t dot2 = name.find('.', dot1 + 1);
      std::size_t layer = std::stoul(name.substr(dot1 + 1, dot2 - dot1 - 1));
      std::string field = name.substr(dot2 + 1);
      BoundLayer& bl = bp.layers[layer];
      if (field == "wq") bl.wq = id;
      else if (field == "bq") bl.bq = id;
      else if (field == "wk") bl.wk = id;
      else if (field == "bk") bl.bk = id;
      else if (field == "wv") bl.wv = id;
      else if (field == "bv") bl.bv = id;
      else if (field == "wo") bl.wo = id;
      else if (field == "bo") bl.bo = id;
      else if (field == "ln1_g") bl.ln1_g = id;
      else if (field == "ln1_b") bl.ln1_b = id;
      else if (field == "w1") bl.w1 = id;
      else if (field == "b1") bl.b1 = id;
      else if (field == "w2") bl.w2 = id;
      else if (field == "b2") bl.b2 = id;
      else if (field == "ln2_g") bl.ln2_g = id;
      else if (field == "ln2_b") bl.ln2_b = id;
      else throw std::logic_error("bind_params: unknown field " + name);
    }
}

}  // namespace

BoundParams bind_params(Graph& g, const EncoderParams& params) {
  BoundParams bp;
  bp.layers.resize(params.layers.size());
  params.for_each([&](const std::string& name, const Tensor& t) {
    int id = g.parameter(t);
    bp.ordered.push_back(id);
    assign_bound(bp, name, id);
  });
  return bp;
}

BoundParams bound_from_ordered(const EncoderConfig& config, std::span<const int> ordered) {
  EncoderParams shapes = init_params(config, 0);  // names and order only
  BoundParams bp;
  bp.layers.resize(config.n_layers);
  std::size_t next = 0;
  shapes.for_each([&](const std::string& name, const Tensor&) {
    if (next >= ordered.size()) throw std::invalid_argument("bound_from_ordered: too few node ids");
    int id = ordered[next++];
    bp.ordered.push_back(id);
    assign_bound(bp, name, id);
  });
  if (next != ordered.size()) throw std::invalid_argument("bound_from_ordered: too many node ids");
  return bp;
}

BoundHead bind_head(Graph& g, const Head& head) {
  return BoundHead{g.parameter(head.w), g.parameter(head.b)};
}

int encode_nodes(Graph& g, const BoundParams& bp, const EncoderConfig& config, std::span<const int> ids,
                 std::span<const int> mask, Rng* dropout_rng) {
  std::size_t len = ids.size();
  if (len == 0) throw ConfigError("encode: empty sequence");
  if (len > config.max_len) {
    throw ConfigError("encode: sequence length " + std::to_string(len) + " exceeds max_len " +
                      std::to_string(config.max_len));
  }
  if (mask.size() != len) throw ConfigError("encode: mask length differs from sequence length");
  for (int m : mask)
    if (m != 0 && m != 1) throw ConfigError("encode: attention mask entries must be 0 or 1");
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= config.vocab_size) {
      throw ConfigError("encode: token id " + std::to_string(id) + " outside vocabulary of size " +
                        std::to_string(config.vocab_size));
    }
  }

  bool train = dropout_rng != nullptr && config.dropout_rate > 0.0;
  std::size_t d = config.d_model, dh = config.head_dim();

  // (len, len) attention mask: 1 hides key j from query i.
  Tensor attn_mask({len, len});
  for (std::size_t i = 0; i < len; ++i) {
    for (std::size_t j = 0; j < len; ++j) {
      bool hidden = mask[j] == 0;
      if (config.objective_style == ObjectiveStyle::causal_lm && j > i) hidden = true;
      attn_mask.at(i, j) = hidden ? 1.0 : 0.0;
    }
  }

  int x = g.add(g.embedding(bp.tok_emb, ids), g.slice(bp.pos_emb, 0, 0, len));
  for (const BoundLayer& l : bp.layers) {
    int h = g.add(g.multiply(g.layer_norm(x), l.ln1_g), l.ln1_b);
    int q = g.add(g.matmul(h, l.wq), l.bq);
    int k = g.add(g.matmul(h, l.wk), l.bk);
    int v = g.add(g.matmul(h, l.wv), l.bv);
    std::vector<int> heads;
    heads.reserve(config.n_heads);
    for (std::size_t hd = 0; hd < config.n_heads; ++hd) {
      int qi = g.slice(q, 1, hd * dh, (hd + 1) * dh);
      int ki = g.slice(k, 1, hd * dh, (hd + 1) * dh);
      int vi = g.slice(v, 1, hd * dh, (hd + 1) * dh);
      int scores = g.scale(g.matmul(qi, g.transpose(ki)), 1.0 / std::sqrt(static_cast<double>(dh)));
      int attn = g.softmax(g.masked_fill(scores, attn_mask, kAttnMaskFill));
      heads.push_back(g.matmul(attn, vi));
    }
    int ctx = g.concat(heads);
    int o = g.add(g.matmul(ctx, l.wo), l.bo);
    if (train) o = g.dropout(o, dropout_rng->dropout_mask({len, d}, config.dropout_rate));
    x = g.add(x, o);

    int h2 = g.add(g.multiply(g.layer_norm(x), l.ln2_g), l.ln2_b);
    int f = g.add(g.matmul(g.gelu(g.add(g.matmul(h2, l.w1), l.b1)), l.w2), l.b2);
    if (train) f = g.dropout(f, dropout_rng->dropout_mask({len, d}, config.dropout_rate));
    x = g.add(x, f);
  }
  return g.add(g.multiply(g.layer_norm(x), bp.final_ln_g), bp.final_ln_b);
}

int pool_nodes(Graph& g, int hidden, Pooling pooling, std::span<const int> mask) {
  if (pooling == Pooling::siamese_pair) {
    throw ConfigError("pool: siamese_pair needs two segments (see siamese_feature_nodes)");
  }
  if (pooling == Pooling::cls_token) return g.slice(hidden, 0, 0, 1);
  std::size_t last = mask.size();
  while (last > 0 && mask[last - 1] == 0) --last;
  if (last == 0) throw ConfigError("pool: mask has no real tokens");
  return g.slice(hidden, 0, last - 1, last);
}

int siamese_feature_nodes(Graph& g, const BoundParams& bp, int hidden_a, std::size_t len_a, int hidden_b,
                          std::size_t len_b) {
  auto project = [&](int hidden, std::size_t len) {
    int pooled = g.reduce_max(g.slice(hidden, 0, 0, len));
    return g.add(g.matmul(pooled, bp.proj_w), bp.proj_b);
  };
  int u = project(hidden_a, len_a);
  int v = project(hidden_b, len_b);
  int diff = g.abs_fn(g.add(u, g.scale(v, -1.0)));
  int prod = g.multiply(u, v);
  std::vector<int> parts{u, v, diff, prod};
  return g.concat(parts);
}

int head_logits_nodes(Graph& g, const BoundHead& head, int pooled) {
  return g.add(g.matmul(pooled, head.w), head.b);
}

int lm_logits_nodes(Graph& g, const BoundParams& bp, int hidden) {
  return g.add(g.matmul(hidden, bp.lm_w), bp.lm_b);
}

Tensor encode(const EncoderParams& params, std::span<const int> ids, std::span<const int> mask) {
  Graph g;
  BoundParams bp = bind_params(g, params);
  int hidden = encode_nodes(g, bp, params.config, ids, mask, nullptr);
  return g.value(hidden);
}

std::vector<Tensor> lm_logits(const EncoderParams& params, const Tensor& hidden,
                              std::span<const std::size_t> positions) {
  std::size_t d = params.config.d_model, v = params.config.vocab_size;
  if (hidden.ndim() != 2 || hidden.cols() != d) {
    throw ConfigError("lm_logits: hidden states must be (len, " + std::to_string(d) + "), got " +
                      hidden.shape_str());
  }
  std::vector<Tensor> out;
  out.reserve(positions.size());
  for (std::size_t pos : positions) {
    if (pos >= hidden.rows()) {
      throw ConfigError("lm_logits: position " + std::to_string(pos) + " outside sequence of length " +
                        std::to_string(hidden.rows()));
    }
    Tensor row({v});
    for (std::size_t j = 0; j < v; ++j) {
      double acc = params.lm_b[j];
      for (std::size_t i = 0; i < d; ++i) acc += hidden.at(pos, i) * params.lm_w.at(i, j);
      row[j] = acc;
    }
    out.push_back(std::move(row));
  }
  return out;
}

std::vector<std::size_t> predictable_positions(const EncoderConfig& config, std::size_t len,
                                               std::span<const std::size_t> masked_positions) {
  std::vector<std::size_t> out;
  if (config.objective_style == ObjectiveStyle::causal_lm) {
    for (std::size_t i = 0; i + 1 < len; ++i) out.push_back(i);
    return out;
  }
  for (std::size_t pos : masked_positions) {
    if (pos >= len) {
      throw ConfigError("predictable_positions: masked position " + std::to_string(pos) +
                        " outside sequence of length " + std::to_string(len));
    }
    out.push_back(pos);
  }
  return out;
}

}  // namespace stilts
