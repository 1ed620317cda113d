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

#include <span>
#include <unordered_map>
#include <vector>

#include "stilts/tensor.hpp"

namespace stilts {

enum class Op {
  constant,
  parameter,
  matmul,        // (m,k) x (k,n) -> (m,n)
  add,           // elementwise; rhs may broadcast over leading axes
  multiply,      // elementwise; rhs may broadcast over leading axes
  scale,         // x * c for a fixed scalar c
  softmax,       // last axis, numerically stable
  layer_norm,    // last axis: (x - mean) / sqrt(pop_var + 1e-5)
  gelu,          // exact erf form
  tanh_fn,
  embedding,     // row gather from a (V, d) table by fixed ids
  concat,        // along the last axis
  slice,         // [start, stop) along a chosen axis of a 2-D value
  transpose,     // 2-D
  cross_entropy, // mean NLL of logits rows vs fixed class ids (-1 = skip row)
  mse,           // mean squared difference of two equal-shape values
  dropout,       // elementwise product with a fixed externally supplied mask
  masked_fill,   // value where mask == 0, fill constant where mask != 0
  reduce_sum,    // all elements -> scalar
  reduce_max,    // column-wise max over rows: (r,c) -> (1,c)
  abs_fn,
};

const char* op_name(Op op);

struct Node {
  Op op;
  std::vector<int> inputs;
  Tensor value;
  Tensor grad;  // allocated by backward(); same shape as value

  // Op-specific attributes. Fixed at construction; never differentiated.
  double scalar = 0.0;       // scale factor / masked_fill constant
  std::vector<int> indices;  // embedding ids / cross-entropy targets
  Tensor aux;                // dropout or masked-fill mask
  int axis = 0;              // slice axis
  std::size_t start = 0, stop = 0;
};

/// Reverse-mode tape over dense tensors. Nodes are appended in topological
/// order; backward() fills a gradient for every node reachable from the
/// loss, in particular every parameter node. Single-threaded, never shared.
class Graph {
 public:
  int constant(Tensor value);
  int parameter(Tensor value);

  int matmul(int a, int b);
  int add(int a, int b);
  int multiply(int a, int b);
  int scale(int a, double factor);
  int softmax(int a);
  int layer_norm(int a);
  int gelu(int a);
  int tanh_fn(int a);
  int embedding(int table, std::span<const int> ids);
  int concat(std::span<const int> parts);
  int slice(int a, int axis, std::size_t start, std::size_t stop);
  int transpose(int a);
  /// Mean negative log-likelihood over the rows of `logits` whose target
  /// id is >= 0. logits may be (n, C) with n targets, or (C) with one.
  int cross_entropy(int logits, std::span<const int> targets);
  int mse(int a, int b);
  int dropout(int a, Tensor mask);
  int masked_fill(int a, Tensor mask, double fill);
  int reduce_sum(int a);
  int reduce_max(int a);
  int abs_fn(int a);

  std::size_t size() const { return nodes_.size(); }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  const Tensor& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  const std::vector<int>& parameters() const { return params_; }

  /// Populates gradients for every node; rejects a non-scalar loss.
  /// Grads are recomputed from scratch, so repeated calls agree exactly.
  void backward(int loss);

  /// Valid after backward(). Zero tensor for nodes the loss does not reach.
  const Tensor& grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }

  /// Gradients keyed by parameter node id (copies; see grad() for the
  /// zero-copy accessor used in training loops).
  std::unordered_map<int, Tensor> parameter_grads() const;

 private:
  int push(Node n);
  void check_id(int id) const;

  std::vector<Node> nodes_;
  std::vector<int> params_;
};

}  // namespace stilts
