// Copyright 2026 The seqvc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "seqvc/tensor.hpp"

namespace seqvc::num {

class Tape;

// Handle to a node on a tape. Cheap to copy; valid for the tape's lifetime.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  bool valid() const { return tape_ != nullptr; }
  int id() const { return id_; }
  Tape* tape() const { return tape_; }
  const Tensor& value() const;

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Reverse-mode tape. One evaluation is single threaded; distinct tapes are
// independent. Every op checks its output for non-finite values and throws
// NumericError on violation.
class Tape {
 public:
  explicit Tape(bool check_finite = true) : check_finite_(check_finite) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var input(Tensor value, bool needs_grad = false);
  Var constant(Tensor value) { return input(std::move(value), false); }

  const Tensor& value(Var v) const { return nodes_[static_cast<std::size_t>(v.id())].value; }
  const Tensor& grad(Var v) const;
  bool has_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id())].grad.size() != 0; }
  bool needs_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id())].needs_grad; }

  // Accumulates d(root)/d(node) into every node with needs_grad. root must be
  // a [1x1] scalar.
  void backward(Var root);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;  // allocated on first touch during backward
    std::function<void(Tape&)> backward_fn;
    bool needs_grad = false;
  };

  int add_node(Tensor value, bool needs_grad, std::function<void(Tape&)> fn,
               const char* op_name);
  Tensor& grad_buf(int id);
  bool node_needs(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }

  std::vector<Node> nodes_;
  bool check_finite_;

  friend struct OpAccess;
};

// --- op vocabulary ---------------------------------------------------------
// Elementwise arithmetic (same shape).
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var divide(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
// Elementwise transcendental.
Var sigmoid(Var a);
Var tanh_op(Var a);
Var relu(Var a);
Var prelu(Var a, Var alpha);  // alpha: [1] or [1x1], shared slope
Var exp_op(Var a);
Var log_op(Var a);
Var softplus(Var a);
// Matrix product. matmul_nt(A, B) = A * B^T.
Var matmul(Var a, Var b);
Var matmul_nt(Var a, Var b);
// Affine map over rows: Y[T x out] = X[T x in] * W^T + b.
Var linear(Var x, Var w, Var b);
Var linear_nobias(Var x, Var w);
// 1-D convolution along rows (time). x: [T x Cin], w: [Cout x Cin x K],
// b: [Cout]. Zero padded so output is [T x Cout]; pad_left = (K-1)/2.
Var conv1d_same(Var x, Var w, Var b);
// Row-wise softmax / log-sum-exp. logsumexp_rows: [T x C] -> [T x 1].
Var softmax_rows(Var x);
Var logsumexp_rows(Var x);
// Structure ops.
Var concat_cols(const std::vector<Var>& xs);
Var concat_rows(const std::vector<Var>& xs);
Var slice_cols(Var x, int c0, int len);
Var slice_rows(Var x, int r0, int len);
Var reshape(Var x, std::vector<int> shape);
// Per-row layer normalization with affine gain/bias (both [C]).
Var layer_norm(Var x, Var gain, Var bias);
// Dropout-style masking: y = x .* mask * s (mask is a plain tensor).
Var mask_scale(Var x, const Tensor& mask, double s);
// Zoneout-style blend: y = mask .* prev + (1 - mask) .* next.
Var mask_blend(Var next, Var prev, const Tensor& mask);
// Broadcast multiply by a [1x1] node: y = x * s.
Var mul_scalar_node(Var x, Var s);
// Reductions to [1x1].
Var sum_all(Var x);
Var mean_all(Var x);

// Fused LSTM cell: one tape node for the composition
//   a = [x, h_prev] * W^T (+ b | layer-normalized with gain/bias)
//   i,f,g,o = sigmoid/tanh gate slices of a
//   c = f .* c_prev + i .* g;  h = o .* tanh(c)
// Gate order i, f, g, o. x and h_prev are [1 x *]; W is [4H x (in+H)].
// Returned h and c are views (row slices) of the fused output.
struct LstmOut {
  Var h, c;
};
LstmOut lstm_cell_plain(Var x, Var h_prev, Var c_prev, Var w, Var b);
LstmOut lstm_cell_ln(Var x, Var h_prev, Var c_prev, Var w, Var ln_gain, Var ln_bias);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

// --- parameter binding ------------------------------------------------------
// Bridges a ParamStore and a tape: binds parameters as leaf inputs (at most
// once per name), and copies leaf gradients back into the store afterwards.
class ParamBinder {
 public:
  ParamBinder(Tape& tape, ParamStore& store, bool needs_grad = true)
      : tape_(&tape), store_(&store), needs_grad_(needs_grad) {}

  Var operator()(const std::string& name);
  ParamStore& store() { return *store_; }

  // Adds tape gradients of every bound parameter into the store accumulators.
  void accumulate_grads();

 private:
  Tape* tape_;
  ParamStore* store_;
  bool needs_grad_;
  std::map<std::string, Var> bound_;
};

// A differentiable computation: builds a graph on the tape, binds parameters
// through the binder, and returns the scalar loss node.
using GraphFn = std::function<Var(Tape&, ParamBinder&)>;

// Evaluates the graph, backpropagates from its scalar result, and accumulates
// parameter gradients into the store. Returns the loss value. check_finite
// controls the per-op output scan; with it off the caller is responsible for
// guarding the loss and gradients (the trainer does both).
double forward_backward(ParamStore& params, const GraphFn& graph,
                        bool check_finite = true);
// Evaluates the graph without building gradients. Returns the loss value.
double forward_only(ParamStore& params, const GraphFn& graph);

struct FdReport {
  std::map<std::string, double> per_param;  // max relative error per parameter
  double worst = 0.0;
  std::string worst_param;
  bool within(double tol) const { return worst < tol; }
};

// Central finite differences on every parameter entry versus the analytic
// gradients. Relative error per entry: |analytic - fd| / (|fd| + 1e-12).
FdReport finite_difference_check(ParamStore& params, const GraphFn& graph,
                                 double step);

}  // namespace seqvc::num
