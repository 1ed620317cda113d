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
#include "stilts/graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace stilts {

namespace {

constexpr double kLayerNormEps = 1e-5;

[[noreturn]] void shape_error(Op op, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string(op_name(op)) + ": shape mismatch " + a.shape_str() + " vs " +
                              b.shape_str());
}

[[noreturn]] void op_error(Op op, const std::string& msg) {
  throw std::invalid_argument(std::string(op_name(op)) + ": " + msg);
}

Node make_node(Op op, std::vector<int> inputs, Tensor value) {
  Node n;
  n.op = op;
  n.inputs = std::move(inputs);
  n.value = std::move(value);
  return n;
}

// Elementwise ops accept a rhs whose shape is a trailing suffix of the lhs
// shape; in row-major order the rhs then tiles with period rhs.size().
bool is_suffix_shape(const Tensor& a, const Tensor& b) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  if (bs.size() > as.size()) return false;
  return std::equal(bs.rbegin(), bs.rend(), as.rbegin());
}

void softmax_row(const double* x, double* y, std::size_t n) {
  double m = x[0];
  for (std::size_t i = 1; i < n; ++i) m = std::max(m, x[i]);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = std::exp(x[i] - m);
    sum += y[i];
  }
  for (std::size_t i = 0; i < n; ++i) y[i] /= sum;
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::constant: return "constant";
    case Op::parameter: return "parameter";
    case Op::matmul: return "matmul";
    case Op::add: return "add";
    case Op::multiply: return "multiply";
    case Op::scale: return "scale";
    case Op::softmax: return "softmax";
    case Op::layer_norm: return "layer-norm";
    case Op::gelu: return "gelu";
    case Op::tanh_fn: return "tanh";
    case Op::embedding: return "embedding-lookup";
    case Op::concat: return "concat";
    case Op::slice: return "slice";
    case Op::transpose: return "transpose";
    case Op::cross_entropy: return "cross-entropy-loss";
    case Op::mse: return "mean-squared-error-loss";
    case Op::dropout: return "dropout";
    case Op::masked_fill: return "masked-fill";
    case Op::reduce_sum: return "reduce-sum";
    case Op::reduce_max: return "reduce-max";
    case Op::abs_fn: return "abs";
  }
  return "?";
}

int Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

void Graph::check_id(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
    throw std::invalid_argument("graph: bad node id " + std::to_string(id));
  }
}

int Graph::constant(Tensor value) { return push(make_node(Op::constant, {}, std::move(value))); }

int Graph::parameter(Tensor value) {
  int id = push(make_node(Op::parameter, {}, std::move(value)));
  params_.push_back(id);
  return id;
}

int Graph::matmul(int a, int b) {
  check_id(a);
  check_id(b);
  const Tensor& A = nodes_[a].value;
  const Tensor& B = nodes_[b].value;
  if (A.ndim() != 2 || B.ndim() != 2 || A.cols() != B.rows()) shape_error(Op::matmul, A, B);
  std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  Tensor C({m, n});
  const double* pa = A.data();
  const double* pb = B.data();
  double* pc = C.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t l = 0; l < k; ++l) {
      double aik = pa[i * k + l];
      const double* brow = pb + l * n;
      double* crow = pc + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
  return push(make_node(Op::matmul, {a, b}, std::move(C)));
}

int Graph::add(int a, int b) {
  check_id(a);
  check_id(b);
  const Tensor& A = nodes_[a].value;
  const Tensor& B = nodes_[b].value;
  if (!is_suffix_shape(A, B)) shape_error(Op::add, A, B);
  Tensor out(A.shape());
  std::size_t bs = B.size();
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = A[i] + B[i % bs];
  return push(make_node(Op::add, {a, b}, std::move(out)));
}

int Graph::multiply(int a, int b) {
  check_id(a);
  check_id(b);
  const Tensor& A = nodes_[a].value;
  const Tensor& B = nodes_[b].value;
  if (!is_suffix_shape(A, B)) shape_error(Op::multiply, A, B);
  Tensor out(A.shape());
  std::size_t bs = B.size();
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = A[i] * B[i % bs];
  return push(make_node(Op::multiply, {a, b}, std::move(out)));
}

int Graph::scale(int a, double factor) {
  check_id(a);
  const Tensor& A = nodes_[a].value;
  Tensor out(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = A[i] * factor;
  Node n = make_node(Op::scale, {a}, std::move(out));
  n.scalar = factor;
  return push(std::move(n));
}

int Graph::softmax(int a) {
  check_id(a);
  const Tensor& A = nodes_[a].value;
  if (A.empty()) op_error(Op::softmax, "empty input");
  Tensor out(A.shape());
  std::size_t c = A.last_dim();
  for (std::size_t r = 0; r < A.lead_size(); ++r) softmax_row(A.data() + r * c, out.data() + r * c, c);
  return push(make_node(Op::softmax, {a}, std::move(out)));
}

int Graph::layer_norm(int a) {
  check_id(a);
  const Tensor& A = nodes_[a].value;
  if (A.empty()) op_error(Op::layer_norm, "empty input");
  Tensor out(A.shape());
  std::size_t c = A.last_dim();
  for (std::size_t r = 0; r < A.lead_size(); ++r) {
    const double* x = A.data() + r * c;
    double* y = out.data() + r * c;
    double mean = 0.0;
    for (std::size_t i = 0; i < c; ++i) mean += x[i];
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t i = 0; i < c; ++i) var += (x[i] - mean) * (x[i] - mean);
    var /= static_cast<double>(c);  // population variance
    double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    for (std::size_t i = 0; i < c; ++i) y[i] = (x[i] - mean) * inv;
  }
  return push(make_node(Op::layer_norm, {a}, std::move(out)));
}

int Graph::gelu(int a) {
  check_id(a);
  const Tensor& A = nodes_[a].value;
  Tensor out(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = 0.5 * A[i] * (1.0 + std::erf(A[i] * M_SQRT1_2));
  return push(make_node(Op::gelu, {a}, std::move(out)));
}

int Graph::tanh_fn(int a) {
  check_id(a);
  const Tensor& A = nodes_[a].value;
  Tensor out(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = std::tanh(A[i]);
  return push(make_node(Op::tanh_fn, {a}, std::move(out)));
}

int Graph::embedding(int table, std::span<const int> ids) {
  check_id(table);
  const Tensor& T = nodes_[table].value;
  if (T.ndim() != 2) op_error(Op::embedding, "table must be 2-D, got " + T.shape_str());
  if (ids.empty()) op_error(Op::embedding, "empty id list");
  std::size_t v = T.rows(), d = T.cols();
  Tensor out({ids.size(), d});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    int id = ids[r];
    if (id < 0 || static_cast<std::size_t>(id) >= v) {
      op_error(Op::embedding, "id " + std::to_string(id) + " out of range for table " + T.shape_str());
    }
    std::copy_n(T.data() + static_cast<std::size_t>(id) * d, d, out.data() + r * d);
  }
  Node n = make_node(Op::embedding, {table}, std::move(out));
  n.indices.assign(ids.begin(), ids.end());
  return push(std::move(n));
}

int Graph::concat(std::span<const int> parts) {
  if (parts.empty()) op_error(Op::concat, "no inputs");
  for (int p : parts) check_id(p);
  const Tensor& first = nodes_[parts[0]].value;
  std::size_t lead = first.lead_size();
  std::size_t total = 0;
  for (int p : parts) {
    const Tensor& t = nodes_[p].value;
    if (t.ndim() != first.ndim() || t.lead_size() != lead ||
        !std::equal(t.shape().begin(), t.shape().end() - 1, first.shape().begin())) {
      shape_error(Op::concat, first, t);
    }
    total += t.last_dim();
  }
  std::vector<std::size_t> shape = first.shape();
  shape.back() = total;
  Tensor out(shape);
  std::size_t off = 0;
  for (int p : parts) {
    const Tensor& t = nodes_[p].value;
    std::size_t c = t.last_dim();
    for (std::size_t r = 0; r < lead; ++r) std::copy_n(t.data() + r * c, c, out.data() + r * total + off);
    off += c;
  }
  return push(make_node(Op::concat, {parts.begin(), parts.end()}, std::move(out)));
}

int Graph::slice(int a, int axis, std::size_t start, std::size_t stop) {
  check_id(a);
  const Tensor& A = nodes_[a].value;
  if (A.ndim() != 2) op_error(Op::slice, "input must be 2-D, got " + A.shape_str());
  if (axis != 0 && axis != 1) op_error(Op::slice, "axis must be 0 or 1");
  std::size_t dim = A.shape()[static_cast<std::size_t>(axis)];
  if (start >= stop || stop > dim) {
    op_error(Op::slice, "range [" + std::to_string(start) + ", " + std::to_string(stop) + ") invalid for " +
                            A.shape_str());
  }
  std::size_t r = A.rows(), c = A.cols();
  Tensor out(axis == 0 ? std::vector<std::size_t>{stop - start, c} : std::vector<std::size_t>{r, stop - start});
  if (axis == 0) {
    std::copy_n(A.data() + start * c, (stop - start) * c, out.data());
  } else {
    for (std::size_t i = 0; i < r; ++i) std::copy_n(A.data() + i * c + start, stop - start, out.data() + i * (stop - start));
  }
  Node n = make_node(Op::slice, {a}, std::move(out));
  n.axis = axis;
  n.start = start;
  n.stop = stop;
  return push(std::move(n));
}

int Graph::transpose(int a) {
  check_id(a);
  const Tensor& A = nodes_[a].value;
  if (A.ndim() != 2) op_error(Op::transpose, "input must be 2-D, got " + A.shape_str());
  std::size_t r = A.rows(), c = A.cols();
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.at(j, i) = A.at(i, j);
  return push(make_node(Op::transpose, {a}, std::move(out)));
}

int Graph::cross_entropy(int logits, std::span<const int> targets) {
  check_id(logits);
  const Tensor& L = nodes_[logits].value;
  if (L.ndim() != 1 && L.ndim() != 2) op_error(Op::cross_entropy, "logits must be 1-D or 2-D, got " + L.shape_str());
  std::size_t rows = L.ndim() == 2 ? L.rows() : 1;
  std::size_t c = L.last_dim();
  if (targets.size() != rows) {
    op_error(Op::cross_entropy,
             "expected " + std::to_string(rows) + " targets, got " + std::to_string(targets.size()));
  }
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    int y = targets[r];
    if (y < 0) continue;
    if (static_cast<std::size_t>(y) >= c) {
      op_error(Op::cross_entropy, "target " + std::to_string(y) + " out of range for " + L.shape_str());
    }
    const double* x = L.data() + r * c;
    double m = x[0];
    for (std::size_t i = 1; i < c; ++i) m = std::max(m, x[i]);
    double lse = 0.0;
    for (std::size_t i = 0; i < c; ++i) lse += std::exp(x[i] - m);
    total += m + std::log(lse) - x[y];
    ++counted;
  }
  if (counted == 0) op_error(Op::cross_entropy, "all targets skipped");
  Node n = make_node(Op::cross_entropy, {logits}, Tensor::scalar(total / static_cast<double>(counted)));
  n.indices.assign(targets.begin(), targets.end());
  return push(std::move(n));
}

int Graph::mse(int a, int b) {
  check_id(a);
  check_id(b);
  const Tensor& A = nodes_[a].value;
  const Tensor& B = nodes_[b].value;
  if (!A.same_shape(B)) shape_error(Op::mse, A, B);
  double total = 0.0;
  for (std::size_t i = 0; i < A.size(); ++i) total += (A[i] - B[i]) * (A[i] - B[i]);
  return push(make_node(Op::mse, {a, b}, Tensor::scalar(total / static_cast<double>(A.size()))));
}

int Graph::dropout(int a, Tensor mask) {
  check_id(a);
  const Tensor& A = nodes_[a].value;
  if (!A.same_shape(mask)) shape_error(Op::dropout, A, mask);
  Tensor out(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = A[i] * mask[i];
  Node n = make_node(Op::dropout, {a}, std::move(out));
  n.aux = std::move(mask);
  return push(std::move(n));
}

int Graph::masked_fill(int a, Tensor mask, double fill) {
  check_id(a);
  const Tensor& A = nodes_[a].value;
  if (!A.same_shape(mask)) shape_error(Op::masked_fill, A, mask);
  Tensor out(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = mask[i] != 0.0 ? fill : A[i];
  Node n = make_node(Op::masked_fill, {a}, std::move(out));
  n.aux = std::move(mask);
  n.scalar = fill;
  return push(std::move(n));
}

int Graph::reduce_sum(int a) {
  check_id(a);
  const Tensor& A = nodes_[a].value;
  double total = 0.0;
  for (std::size_t i = 0; i < A.size(); ++i) total += A[i];
  return push(make_node(Op::reduce_sum, {a}, Tensor::scalar(total)));
}

int Graph::reduce_max(int a) {
  check_id(a);
  const Tensor& A = nodes_[a].value;
  if (A.ndim() != 2) op_error(Op::reduce_max, "input must be 2-D, got " + A.shape_str());
  std::size_t r = A.rows(), c = A.cols();
  Tensor out({1, c});
  for (std::size_t j = 0; j < c; ++j) {
    double m = A.at(0, j);
    for (std::size_t i = 1; i < r; ++i) m = std::max(m, A.at(i, j));
    out.at(0, j) = m;
  }
  return push(make_node(Op::reduce_max, {a}, std::move(out)));
}

int Graph::abs_fn(int a) {
  check_id(a);
  const Tensor& A = nodes_[a].value;
  Tensor out(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = std::abs(A[i]);
  return push(make_node(Op::abs_fn, {a}, std::move(out)));
}

void Graph::backward(int loss) {
  check_id(loss);
  if (nodes_[loss].value.size() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got " + nodes_[loss].value.shape_str());
  }
  for (Node& n : nodes_) {
    n.grad = Tensor(n.value.shape());
  }
  nodes_[loss].grad[0] = 1.0;

  for (int id = loss; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    const Tensor& g = n.grad;
    switch (n.op) {
      case Op::constant:
      case Op::parameter:
        break;
      case Op::matmul: {
        const Tensor& A = nodes_[n.inputs[0]].value;
        const Tensor& B = nodes_[n.inputs[1]].value;
        Tensor& dA = nodes_[n.inputs[0]].grad;
        Tensor& dB = nodes_[n.inputs[1]].grad;
        std::size_t m = A.rows(), k = A.cols(), c = B.cols();
        // dA += g * B^T
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < c; ++j) {
            double gij = g[i * c + j];
            if (gij == 0.0) continue;
            const double* brow = B.data() + 0;
            for (std::size_t l = 0; l < k; ++l) dA[i * k + l] += gij * brow[l * c + j];
          }
        }
        // dB += A^T * g
        for (std::size_t l = 0; l < k; ++l) {
          for (std::size_t i = 0; i < m; ++i) {
            double ail = A[i * k + l];
            if (ail == 0.0) continue;
            const double* grow = g.data() + i * c;
            double* brow = dB.data() + l * c;
            for (std::size_t j = 0; j < c; ++j) brow[j] += ail * grow[j];
          }
        }
        break;
      }
      case Op::add: {
        Tensor& dA = nodes_[n.inputs[0]].grad;
        Tensor& dB = nodes_[n.inputs[1]].grad;
        std::size_t bs = dB.size();
        for (std::size_t i = 0; i < g.size(); ++i) {
          dA[i] += g[i];
          dB[i % bs] += g[i];
        }
        break;
      }
      case Op::multiply: {
        const Tensor& A = nodes_[n.inputs[0]].value;
        const Tensor& B = nodes_[n.inputs[1]].value;
        Tensor& dA = nodes_[n.inputs[0]].grad;
        Tensor& dB = nodes_[n.inputs[1]].grad;
        std::size_t bs = B.size();
        for (std::size_t i = 0; i < g.size(); ++i) {
          dA[i] += g[i] * B[i % bs];
          dB[i % bs] += g[i] * A[i];
        }
        break;
      }
      case Op::scale: {
        Tensor& dA = nodes_[n.inputs[0]].grad;
        for (std::size_t i = 0; i < g.size(); ++i) dA[i] += g[i] * n.scalar;
        break;
      }
      case Op::softmax: {
        Tensor& dA = nodes_[n.inputs[0]].grad;
        const Tensor& y = n.value;
        std::size_t c = y.last_dim();
        for (std::size_t r = 0; r < y.lead_size(); ++r) {
          const double* yr = y.data() + r * c;
          const double* gr = g.data() + r * c;
          double dot = 0.0;
          for (std::size_t i = 0; i < c; ++i) dot += yr[i] * gr[i];
          double* da = dA.data() + r * c;
          for (std::size_t i = 0; i < c; ++i) da[i] += yr[i] * (gr[i] - dot);
        }
        break;
      }
      case Op::layer_norm: {
        const Tensor& x = nodes_[n.inputs[0]].value;
        Tensor& dA = nodes_[n.inputs[0]].grad;
        const Tensor& y = n.value;  // y == x_hat
        std::size_t c = x.last_dim();
        for (std::size_t r = 0; r < x.lead_size(); ++r) {
          const double* xr = x.data() + r * c;
          const double* yr = y.data() + r * c;
          const double* gr = g.data() + r * c;
          double mean = 0.0;
          for (std::size_t i = 0; i < c; ++i) mean += xr[i];
          mean /= static_cast<double>(c);
          double var = 0.0;
          for (std::size_t i = 0; i < c; ++i) var += (xr[i] - mean) * (xr[i] - mean);
          var /= static_cast<double>(c);
          double inv = 1.0 / std::sqrt(var + kLayerNormEps);
          double gmean = 0.0, gymean = 0.0;
          for (std::size_t i = 0; i < c; ++i) {
            gmean += gr[i];
            gymean += gr[i] * yr[i];
          }
          gmean /= static_cast<double>(c);
          gymean /= static_cast<double>(c);
          double* da = dA.data() + r * c;
          for (std::size_t i = 0; i < c; ++i) da[i] += inv * (gr[i] - gmean - yr[i] * gymean);
        }
        break;
      }
      case Op::gelu: {
        const Tensor& x = nodes_[n.inputs[0]].value;
        Tensor& dA = nodes_[n.inputs[0]].grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
          double xi = x[i];
          double cdf = 0.5 * (1.0 + std::erf(xi * M_SQRT1_2));
          double pdf = std::exp(-0.5 * xi * xi) / std::sqrt(2.0 * M_PI);
          dA[i] += g[i] * (cdf + xi * pdf);
        }
        break;
      }
      case Op::tanh_fn: {
        Tensor& dA = nodes_[n.inputs[0]].grad;
        const Tensor& y = n.value;
        for (std::size_t i = 0; i < g.size(); ++i) dA[i] += g[i] * (1.0 - y[i] * y[i]);
        break;
      }
      case Op::embedding: {
        Tensor& dT = nodes_[n.inputs[0]].grad;
        std::size_t d = dT.cols();
        for (std::size_t r = 0; r < n.indices.size(); ++r) {
          double* trow = dT.data() + static_cast<std::size_t>(n.indices[r]) * d;
          const double* grow = g.data() + r * d;
          for (std::size_t i = 0; i < d; ++i) trow[i] += grow[i];
        }
        break;
      }
      case Op::concat: {
        std::size_t total = n.value.last_dim();
        std::size_t lead = n.value.lead_size();
        std::size_t off = 0;
        for (int p : n.inputs) {
          Tensor& dP = nodes_[p].grad;
          std::size_t c = dP.last_dim();
          for (std::size_t r = 0; r < lead; ++r) {
            const double* grow = g.data() + r * total + off;
            double* drow = dP.data() + r * c;
            for (std::size_t i = 0; i < c; ++i) drow[i] += grow[i];
          }
          off += c;
        }
        break;
      }
      case Op::slice: {
        Tensor& dA = nodes_[n.inputs[0]].grad;
        std::size_t c = dA.cols();
        if (n.axis == 0) {
          for (std::size_t i = 0; i < g.size(); ++i) dA[n.start * c + i] += g[i];
        } else {
          std::size_t w = n.stop - n.start;
          for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < w; ++j) dA[i * c + n.start + j] += g[i * w + j];
        }
        break;
      }
      case Op::transpose: {
        Tensor& dA = nodes_[n.inputs[0]].grad;
        std::size_t r = g.rows(), c = g.cols();
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) dA[j * r + i] += g[i * c + j];
        break;
      }
      case Op::cross_entropy: {
        const Tensor& L = nodes_[n.inputs[0]].value;
        Tensor& dL = nodes_[n.inputs[0]].grad;
        std::size_t rows = L.ndim() == 2 ? L.rows() : 1;
        std::size_t c = L.last_dim();
        std::size_t counted = 0;
        for (int y : n.indices)
          if (y >= 0) ++counted;
        double go = g[0] / static_cast<double>(counted);
        std::vector<double> sm(c);
        for (std::size_t r = 0; r < rows; ++r) {
          int y = n.indices[r];
          if (y < 0) continue;
          softmax_row(L.data() + r * c, sm.data(), c);
          double* dl = dL.data() + r * c;
          for (std::size_t i = 0; i < c; ++i) dl[i] += go * sm[i];
          dl[y] -= go;
        }
        break;
      }
      case Op::mse: {
        const Tensor& A = nodes_[n.inputs[0]].value;
        const Tensor& B = nodes_[n.inputs[1]].value;
        Tensor& dA = nodes_[n.inputs[0]].grad;
        Tensor& dB = nodes_[n.inputs[1]].grad;
        double go = 2.0 * g[0] / static_cast<double>(A.size());
        for (std::size_t i = 0; i < A.size(); ++i) {
          double diff = go * (A[i] - B[i]);
          dA[i] += diff;
          dB[i] -= diff;
        }
        break;
      }
      case Op::dropout: {
        Tensor& dA = nodes_[n.inputs[0]].grad;
        for (std::size_t i = 0; i < g.size(); ++i) dA[i] += g[i] * n.aux[i];
        break;
      }
      case Op::masked_fill: {
        Tensor& dA = nodes_[n.inputs[0]].grad;
        for (std::size_t i = 0; i < g.size(); ++i)
          if (n.aux[i] == 0.0) dA[i] += g[i];
        break;
      }
      case Op::reduce_sum: {
        Tensor& dA = nodes_[n.inputs[0]].grad;
        for (std::size_t i = 0; i < dA.size(); ++i) dA[i] += g[0];
        break;
      }
      case Op::reduce_max: {
        const Tensor& A = nodes_[n.inputs[0]].value;
        Tensor& dA = nodes_[n.inputs[0]].grad;
        std::size_t r = A.rows(), c = A.cols();
        for (std::size_t j = 0; j < c; ++j) {
          std::size_t arg = 0;
          double m = A.at(0, j);
          for (std::size_t i = 1; i < r; ++i) {
            if (A.at(i, j) > m) {
              m = A.at(i, j);
              arg = i;
            }
          }
          dA[arg * c + j] += g[j];
        }
        break;
      }
      case Op::abs_fn: {
        const Tensor& x = nodes_[n.inputs[0]].value;
        Tensor& dA = nodes_[n.inputs[0]].grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (x[i] > 0.0) dA[i] += g[i];
          else if (x[i] < 0.0) dA[i] -= g[i];
        }
        break;
      }
    }
  }
}

std::unordered_map<int, Tensor> Graph::parameter_grads() const {
  std::unordered_map<int, Tensor> out;
  out.reserve(params_.size());
  for (int p : params_) out.emplace(p, nodes_[static_cast<std::size_t>(p)].grad);
  return out;
}

}  // namespace stilts
