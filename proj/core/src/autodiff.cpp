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

#include "seqvc/autodiff.hpp"

#include <cmath>
#include <cstring>
#include <memory>

namespace seqvc::num {

namespace {
void require(bool cond, const std::string& msg) {
  if (!cond) throw NumericError(msg);
}

void require_same_tape(Var a, Var b) {
  require(a.tape() == b.tape(), "vars belong to different tapes");
}
}  // namespace

const Tensor& Var::value() const { return tape_->value(*this); }

int Tape::add_node(Tensor value, bool needs_grad, std::function<void(Tape&)> fn,
                   const char* op_name) {
  if (check_finite_ && !value.all_finite()) {
    throw NumericError(std::string("non-finite values produced by op '") + op_name + "'");
  }
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  if (needs_grad) n.backward_fn = std::move(fn);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Var Tape::input(Tensor value, bool needs_grad) {
  int id = add_node(std::move(value), needs_grad, nullptr, "input");
  return Var(this, id);
}

Tensor& Tape::grad_buf(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.size() == 0) n.grad = Tensor::zeros(n.value.shape());
  return n.grad;
}

const Tensor& Tape::grad(Var v) const {
  const Node& n = nodes_[static_cast<std::size_t>(v.id())];
  require(n.grad.size() != 0, "gradient not computed for this node");
  return n.grad;
}

void Tape::backward(Var root) {
  require(root.tape() == this, "backward: root from another tape");
  const Tensor& rv = value(root);
  require(rv.size() == 1, "backward: root must be scalar");
  grad_buf(root.id()).at(0) = 1.0;
  for (int i = root.id(); i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.needs_grad && n.backward_fn && n.grad.size() != 0) {
      n.backward_fn(*this);
    }
  }
}

// Shared access for op implementations.
struct OpAccess {
  static int emit(Tape& t, Tensor v, bool ng, std::function<void(Tape&)> fn,
                  const char* name) {
    return t.add_node(std::move(v), ng, std::move(fn), name);
  }
  static int next_id(const Tape& t) { return static_cast<int>(t.nodes_.size()); }
  static Tensor& gbuf(Tape& t, int id) { return t.grad_buf(id); }
  static const Tensor& val(Tape& t, int id) {
    return t.nodes_[static_cast<std::size_t>(id)].value;
  }
  static bool needs(Tape& t, int id) { return t.node_needs(id); }
  static bool has_grad(Tape& t, int id) {
    return t.nodes_[static_cast<std::size_t>(id)].grad.size() != 0;
  }
};

namespace {

using OA = OpAccess;

// Every op below captures parent ids and the output id; tensors are fetched
// through OpAccess inside the closure so node-vector reallocation is safe.
// The output id equals the node count at emission time.
template <typename Fn>
Var emit_node(Tape& t, Tensor v, bool ng, const char* name, Fn fn) {
  if (!ng) return Var(&t, OA::emit(t, std::move(v), false, nullptr, name));
  const int oid = OA::next_id(t);
  int id = OA::emit(t, std::move(v), true,
                    [oid, fn = std::move(fn)](Tape& tp) { fn(tp, oid); }, name);
  return Var(&t, id);
}

}  // namespace

Var add(Var a, Var b) {
  require_same_tape(a, b);
  Tape& t = *a.tape();
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require(av.same_shape(bv), "add: shape mismatch " + av.shape_str() + " vs " + bv.shape_str());
  Tensor out(av.shape());
  for (std::int64_t i = 0; i < av.size(); ++i) out.at(i) = av.at(i) + bv.at(i);
  bool ng = t.needs_grad(a) || t.needs_grad(b);
  int aid = a.id(), bid = b.id();
  return emit_node(t, std::move(out), ng, "add", [aid, bid](Tape& tp, int oid) {
    const Tensor& g = OA::gbuf(tp, oid);
    if (OA::needs(tp, aid)) OA::gbuf(tp, aid).add_scaled(g, 1.0);
    if (OA::needs(tp, bid)) OA::gbuf(tp, bid).add_scaled(g, 1.0);
  });
}

Var sub(Var a, Var b) {
  require_same_tape(a, b);
  Tape& t = *a.tape();
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require(av.same_shape(bv), "sub: shape mismatch " + av.shape_str() + " vs " + bv.shape_str());
  Tensor out(av.shape());
  for (std::int64_t i = 0; i < av.size(); ++i) out.at(i) = av.at(i) - bv.at(i);
  bool ng = t.needs_grad(a) || t.needs_grad(b);
  int aid = a.id(), bid = b.id();
  return emit_node(t, std::move(out), ng, "sub", [aid, bid](Tape& tp, int oid) {
    const Tensor& g = OA::gbuf(tp, oid);
    if (OA::needs(tp, aid)) OA::gbuf(tp, aid).add_scaled(g, 1.0);
    if (OA::needs(tp, bid)) OA::gbuf(tp, bid).add_scaled(g, -1.0);
  });
}

Var mul(Var a, Var b) {
  require_same_tape(a, b);
  Tape& t = *a.tape();
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require(av.same_shape(bv), "mul: shape mismatch " + av.shape_str() + " vs " + bv.shape_str());
  Tensor out(av.shape());
  for (std::int64_t i = 0; i < av.size(); ++i) out.at(i) = av.at(i) * bv.at(i);
  bool ng = t.needs_grad(a) || t.needs_grad(b);
  int aid = a.id(), bid = b.id();
  return emit_node(t, std::move(out), ng, "mul", [aid, bid](Tape& tp, int oid) {
    const Tensor& g = OA::gbuf(tp, oid);
    const Tensor& av2 = OA::val(tp, aid);
    const Tensor& bv2 = OA::val(tp, bid);
    if (OA::needs(tp, aid)) {
      Tensor& da = OA::gbuf(tp, aid);
      for (std::int64_t i = 0; i < g.size(); ++i) da.at(i) += g.at(i) * bv2.at(i);
    }
    if (OA::needs(tp, bid)) {
      Tensor& db = OA::gbuf(tp, bid);
      for (std::int64_t i = 0; i < g.size(); ++i) db.at(i) += g.at(i) * av2.at(i);
    }
  });
}

Var divide(Var a, Var b) {
  require_same_tape(a, b);
  Tape& t = *a.tape();
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require(av.same_shape(bv), "div: shape mismatch " + av.shape_str() + " vs " + bv.shape_str());
  Tensor out(av.shape());
  for (std::int64_t i = 0; i < av.size(); ++i) out.at(i) = av.at(i) / bv.at(i);
  bool ng = t.needs_grad(a) || t.needs_grad(b);
  int aid = a.id(), bid = b.id();
  return emit_node(t, std::move(out), ng, "div", [aid, bid](Tape& tp, int oid) {
    const Tensor& g = OA::gbuf(tp, oid);
    const Tensor& ov = OA::val(tp, oid);
    const Tensor& bv2 = OA::val(tp, bid);
    if (OA::needs(tp, aid)) {
      Tensor& da = OA::gbuf(tp, aid);
      for (std::int64_t i = 0; i < g.size(); ++i) da.at(i) += g.at(i) / bv2.at(i);
    }
    if (OA::needs(tp, bid)) {
      Tensor& db = OA::gbuf(tp, bid);
      for (std::int64_t i = 0; i < g.size(); ++i)
        db.at(i) -= g.at(i) * ov.at(i) / bv2.at(i);
    }
  });
}

Var neg(Var a) { return scale(a, -1.0); }

Var scale(Var a, double s) {
  Tape& t = *a.tape();
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::int64_t i = 0; i < av.size(); ++i) out.at(i) = s * av.at(i);
  bool ng = t.needs_grad(a);
  int aid = a.id();
  return emit_node(t, std::move(out), ng, "scale", [aid, s](Tape& tp, int oid) {
    if (OA::needs(tp, aid)) OA::gbuf(tp, aid).add_scaled(OA::gbuf(tp, oid), s);
  });
}

Var add_scalar(Var a, double s) {
  Tape& t = *a.tape();
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::int64_t i = 0; i < av.size(); ++i) out.at(i) = av.at(i) + s;
  bool ng = t.needs_grad(a);
  int aid = a.id();
  return emit_node(t, std::move(out), ng, "add_scalar", [aid](Tape& tp, int oid) {
    if (OA::needs(tp, aid)) OA::gbuf(tp, aid).add_scaled(OA::gbuf(tp, oid), 1.0);
  });
}

namespace {

template <typename F, typename DF>
Var unary_op(Var a, const char* name, F fwd, DF dfwd) {
  Tape& t = *a.tape();
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::int64_t i = 0; i < av.size(); ++i) out.at(i) = fwd(av.at(i));
  bool ng = t.needs_grad(a);
  int aid = a.id();
  return emit_node(t, std::move(out), ng, name, [aid, dfwd](Tape& tp, int oid) {
    if (!OA::needs(tp, aid)) return;
    const Tensor& g = OA::gbuf(tp, oid);
    const Tensor& x = OA::val(tp, aid);
    const Tensor& y = OA::val(tp, oid);
    Tensor& da = OA::gbuf(tp, aid);
    for (std::int64_t i = 0; i < g.size(); ++i)
      da.at(i) += g.at(i) * dfwd(x.at(i), y.at(i));
  });
}

}  // namespace

Var sigmoid(Var a) {
  return unary_op(
      a, "sigmoid",
      [](double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh_op(Var a) {
  return unary_op(a, "tanh", [](double x) { return std::tanh(x); },
                  [](double, double y) { return 1.0 - y * y; });
}

Var relu(Var a) {
  return unary_op(a, "relu", [](double x) { return x > 0 ? x : 0.0; },
                  [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Var exp_op(Var a) {
  return unary_op(a, "exp", [](double x) { return std::exp(x); },
                  [](double, double y) { return y; });
}

Var log_op(Var a) {
  return unary_op(a, "log", [](double x) { return std::log(x); },
                  [](double x, double) { return 1.0 / x; });
}

Var softplus(Var a) {
  return unary_op(
      a, "softplus",
      [](double x) { return (x > 0 ? x : 0.0) + std::log1p(std::exp(-std::fabs(x))); },
      [](double x, double) {
        return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
      });
}

Var prelu(Var a, Var alpha) {
  require_same_tape(a, alpha);
  Tape& t = *a.tape();
  const Tensor& av = a.value();
  const Tensor& sv = alpha.value();
  require(sv.size() == 1, "prelu: alpha must be a single shared slope");
  double s = sv.at(0);
  Tensor out(av.shape());
  for (std::int64_t i = 0; i < av.size(); ++i)
    out.at(i) = av.at(i) > 0 ? av.at(i) : s * av.at(i);
  bool ng = t.needs_grad(a) || t.needs_grad(alpha);
  int aid = a.id(), sid = alpha.id();
  return emit_node(t, std::move(out), ng, "prelu", [aid, sid](Tape& tp, int oid) {
    const Tensor& g = OA::gbuf(tp, oid);
    const Tensor& x = OA::val(tp, aid);
    double s2 = OA::val(tp, sid).at(0);
    if (OA::needs(tp, aid)) {
      Tensor& da = OA::gbuf(tp, aid);
      for (std::int64_t i = 0; i < g.size(); ++i)
        da.at(i) += g.at(i) * (x.at(i) > 0 ? 1.0 : s2);
    }
    if (OA::needs(tp, sid)) {
      double acc = 0;
      for (std::int64_t i = 0; i < g.size(); ++i)
        if (x.at(i) <= 0) acc += g.at(i) * x.at(i);
      OA::gbuf(tp, sid).at(0) += acc;
    }
  });
}

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  Tape& t = *a.tape();
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require(av.rank() == 2 && bv.rank() == 2 && av.cols() == bv.rows(),
          "matmul: incompatible shapes " + av.shape_str() + " * " + bv.shape_str());
  int m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor out({m, n});
  for (int i = 0; i < m; ++i) {
    const double* arow = av.data() + static_cast<std::size_t>(i) * k;
    double* orow = out.data() + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      double aip = arow[p];
      const double* brow = bv.data() + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  bool ng = t.needs_grad(a) || t.needs_grad(b);
  int aid = a.id(), bid = b.id();
  return emit_node(t, std::move(out), ng, "matmul", [aid, bid, m, k, n](Tape& tp, int oid) {
    const Tensor& g = OA::gbuf(tp, oid);
    const Tensor& av2 = OA::val(tp, aid);
    const Tensor& bv2 = OA::val(tp, bid);
    if (OA::needs(tp, aid)) {  // dA += g * B^T
      Tensor& da = OA::gbuf(tp, aid);
      for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
          double acc = 0;
          const double* grow = g.data() + static_cast<std::size_t>(i) * n;
          const double* brow = bv2.data() + static_cast<std::size_t>(p) * n;
          for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
          da.at(i, p) += acc;
        }
    }
    if (OA::needs(tp, bid)) {  // dB += A^T * g
      Tensor& db = OA::gbuf(tp, bid);
      for (int p = 0; p < k; ++p)
        for (int i = 0; i < m; ++i) {
          double aip = av2.at(i, p);
          if (aip == 0) continue;
          const double* grow = g.data() + static_cast<std::size_t>(i) * n;
          double* drow = db.data() + static_cast<std::size_t>(p) * n;
          for (int j = 0; j < n; ++j) drow[j] += aip * grow[j];
        }
    }
  });
}

Var matmul_nt(Var a, Var b) {
  require_same_tape(a, b);
  Tape& t = *a.tape();
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require(av.rank() == 2 && bv.rank() == 2 && av.cols() == bv.cols(),
          "matmul_nt: incompatible shapes " + av.shape_str() + " * " + bv.shape_str() + "^T");
  int m = av.rows(), k = av.cols(), n = bv.rows();
  Tensor out({m, n});
  for (int i = 0; i < m; ++i) {
    const double* arow = av.data() + static_cast<std::size_t>(i) * k;
    for (int j = 0; j < n; ++j) {
      const double* brow = bv.data() + static_cast<std::size_t>(j) * k;
      double acc = 0;
      for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
      out.at(i, j) = acc;
    }
  }
  bool ng = t.needs_grad(a) || t.needs_grad(b);
  int aid = a.id(), bid = b.id();
  return emit_node(t, std::move(out), ng, "matmul_nt", [aid, bid, m, k, n](Tape& tp, int oid) {
    const Tensor& g = OA::gbuf(tp, oid);
    const Tensor& av2 = OA::val(tp, aid);
    const Tensor& bv2 = OA::val(tp, bid);
    if (OA::needs(tp, aid)) {  // dA += g * B
      Tensor& da = OA::gbuf(tp, aid);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
          double gij = g.at(i, j);
          if (gij == 0) continue;
          const double* brow = bv2.data() + static_cast<std::size_t>(j) * k;
          double* drow = da.data() + static_cast<std::size_t>(i) * k;
          for (int p = 0; p < k; ++p) drow[p] += gij * brow[p];
        }
    }
    if (OA::needs(tp, bid)) {  // dB += g^T * A
      Tensor& db = OA::gbuf(tp, bid);
      for (int j = 0; j < n; ++j)
        for (int i = 0; i < m; ++i) {
          double gij = g.at(i, j);
          if (gij == 0) continue;
          const double* arow = av2.data() + static_cast<std::size_t>(i) * k;
          double* drow = db.data() + static_cast<std::size_t>(j) * k;
          for (int p = 0; p < k; ++p) drow[p] += gij * arow[p];
        }
    }
  });
}

Var linear_nobias(Var x, Var w) { return matmul_nt(x, w); }

Var linear(Var x, Var w, Var b) {
  require_same_tape(x, w);
  require_same_tape(x, b);
  Tape& t = *x.tape();
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const Tensor& bv = b.value();
  require(xv.rank() == 2 && wv.rank() == 2 && xv.cols() == wv.cols(),
          "linear: incompatible shapes " + xv.shape_str() + ", W " + wv.shape_str());
  require(bv.rank() == 1 && bv.dim(0) == wv.rows(), "linear: bad bias shape");
  int T = xv.rows(), in = xv.cols(), out_dim = wv.rows();
  Tensor out({T, out_dim});
  for (int i = 0; i < T; ++i) {
    const double* xrow = xv.data() + static_cast<std::size_t>(i) * in;
    double* orow = out.data() + static_cast<std::size_t>(i) * out_dim;
    for (int o = 0; o < out_dim; ++o) {
      const double* wrow = wv.data() + static_cast<std::size_t>(o) * in;
      double acc = bv.at(o);
      for (int p = 0; p < in; ++p) acc += xrow[p] * wrow[p];
      orow[o] = acc;
    }
  }
  bool ng = t.needs_grad(x) || t.needs_grad(w) || t.needs_grad(b);
  int xid = x.id(), wid = w.id(), bid = b.id();
  return emit_node(t, std::move(out), ng, "linear",
                   [xid, wid, bid, T, in, out_dim](Tape& tp, int oid) {
    const Tensor& g = OA::gbuf(tp, oid);
    const Tensor& xv2 = OA::val(tp, xid);
    const Tensor& wv2 = OA::val(tp, wid);
    if (OA::needs(tp, xid)) {  // dX += g * W
      Tensor& dx = OA::gbuf(tp, xid);
      for (int i = 0; i < T; ++i)
        for (int o = 0; o < out_dim; ++o) {
          double gio = g.at(i, o);
          if (gio == 0) continue;
          const double* wrow = wv2.data() + static_cast<std::size_t>(o) * in;
          double* drow = dx.data() + static_cast<std::size_t>(i) * in;
          for (int p = 0; p < in; ++p) drow[p] += gio * wrow[p];
        }
    }
    if (OA::needs(tp, wid)) {  // dW += g^T * X
      Tensor& dw = OA::gbuf(tp, wid);
      for (int i = 0; i < T; ++i) {
        const double* xrow = xv2.data() + static_cast<std::size_t>(i) * in;
        for (int o = 0; o < out_dim; ++o) {
          double gio = g.at(i, o);
          if (gio == 0) continue;
          double* drow = dw.data() + static_cast<std::size_t>(o) * in;
          for (int p = 0; p < in; ++p) drow[p] += gio * xrow[p];
        }
      }
    }
    if (OA::needs(tp, bid)) {
      Tensor& db = OA::gbuf(tp, bid);
      for (int i = 0; i < T; ++i)
        for (int o = 0; o < out_dim; ++o) db.at(o) += g.at(i, o);
    }
  });
}

Var conv1d_same(Var x, Var w, Var b) {
  require_same_tape(x, w);
  require_same_tape(x, b);
  Tape& t = *x.tape();
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const Tensor& bv = b.value();
  require(xv.rank() == 2 && wv.rank() == 3, "conv1d: x must be [T x Cin], w [Cout x Cin x K]");
  require(wv.dim(1) == xv.cols(), "conv1d: channel mismatch");
  require(bv.rank() == 1 && bv.dim(0) == wv.dim(0), "conv1d: bad bias shape");
  int T = xv.rows(), cin = xv.cols(), cout = wv.dim(0), K = wv.dim(2);
  int pad = (K - 1) / 2;
  // weights transposed to [o][j][c] so the channel loop is contiguous
  auto wjc = [&](const Tensor& src) {
    std::vector<double> out2(static_cast<std::size_t>(cout) * K * cin);
    for (int o = 0; o < cout; ++o)
      for (int c = 0; c < cin; ++c)
        for (int j = 0; j < K; ++j)
          out2[(static_cast<std::size_t>(o) * K + j) * cin + c] =
              src.at((static_cast<std::int64_t>(o) * cin + c) * K + j);
    return out2;
  };
  std::vector<double> wt = wjc(wv);
  Tensor out({T, cout});
  for (int i = 0; i < T; ++i) {
    double* orow = out.data() + static_cast<std::size_t>(i) * cout;
    for (int o = 0; o < cout; ++o) {
      double acc = bv.at(o);
      for (int j = 0; j < K; ++j) {
        int src = i + j - pad;
        if (src < 0 || src >= T) continue;
        const double* xrow = xv.data() + static_cast<std::size_t>(src) * cin;
        const double* wrow = wt.data() + (static_cast<std::size_t>(o) * K + j) * cin;
        double dot = 0;
        for (int c = 0; c < cin; ++c) dot += xrow[c] * wrow[c];
        acc += dot;
      }
      orow[o] = acc;
    }
  }
  bool ng = t.needs_grad(x) || t.needs_grad(w) || t.needs_grad(b);
  int xid = x.id(), wid = w.id(), bid = b.id();
  auto wt_keep = std::make_shared<std::vector<double>>(std::move(wt));
  return emit_node(t, std::move(out), ng, "conv1d",
                   [xid, wid, bid, T, cin, cout, K, pad, wt_keep](Tape& tp, int oid) {
    const Tensor& g = OA::gbuf(tp, oid);
    const Tensor& xv2 = OA::val(tp, xid);
    bool nx = OA::needs(tp, xid), nw = OA::needs(tp, wid), nb = OA::needs(tp, bid);
    Tensor* dx = nx ? &OA::gbuf(tp, xid) : nullptr;
    Tensor* dw = nw ? &OA::gbuf(tp, wid) : nullptr;
    Tensor* db = nb ? &OA::gbuf(tp, bid) : nullptr;
    std::vector<double> dwt;
    if (nw) dwt.assign(static_cast<std::size_t>(cout) * K * cin, 0.0);
    for (int i = 0; i < T; ++i) {
      const double* grow = g.data() + static_cast<std::size_t>(i) * cout;
      for (int o = 0; o < cout; ++o) {
        double gio = grow[o];
        if (gio == 0) continue;
        if (db) db->at(o) += gio;
        for (int j = 0; j < K; ++j) {
          int src = i + j - pad;
          if (src < 0 || src >= T) continue;
          const double* wrow = wt_keep->data() + (static_cast<std::size_t>(o) * K + j) * cin;
          if (dx) {
            double* dxrow = dx->data() + static_cast<std::size_t>(src) * cin;
            for (int c = 0; c < cin; ++c) dxrow[c] += gio * wrow[c];
          }
          if (nw) {
            const double* xrow = xv2.data() + static_cast<std::size_t>(src) * cin;
            double* dwrow = dwt.data() + (static_cast<std::size_t>(o) * K + j) * cin;
            for (int c = 0; c < cin; ++c) dwrow[c] += gio * xrow[c];
          }
        }
      }
    }
    if (nw) {
      for (int o = 0; o < cout; ++o)
        for (int c = 0; c < cin; ++c)
          for (int j = 0; j < K; ++j)
            dw->at((static_cast<std::int64_t>(o) * cin + c) * K + j) +=
                dwt[(static_cast<std::size_t>(o) * K + j) * cin + c];
    }
  });
}

Var softmax_rows(Var x) {
  Tape& t = *x.tape();
  const Tensor& xv = x.value();
  require(xv.rank() == 2, "softmax: rank-2 input required");
  int T = xv.rows(), C = xv.cols();
  Tensor out({T, C});
  for (int i = 0; i < T; ++i) {
    double mx = xv.at(i, 0);
    for (int c = 1; c < C; ++c) mx = std::max(mx, xv.at(i, c));
    double z = 0;
    for (int c = 0; c < C; ++c) {
      double e = std::exp(xv.at(i, c) - mx);
      out.at(i, c) = e;
      z += e;
    }
    for (int c = 0; c < C; ++c) out.at(i, c) /= z;
  }
  bool ng = t.needs_grad(x);
  int xid = x.id();
  return emit_node(t, std::move(out), ng, "softmax", [xid, T, C](Tape& tp, int oid) {
    if (!OA::needs(tp, xid)) return;
    const Tensor& g = OA::gbuf(tp, oid);
    const Tensor& y = OA::val(tp, oid);
    Tensor& dx = OA::gbuf(tp, xid);
    for (int i = 0; i < T; ++i) {
      double dot = 0;
      for (int c = 0; c < C; ++c) dot += g.at(i, c) * y.at(i, c);
      for (int c = 0; c < C; ++c) dx.at(i, c) += y.at(i, c) * (g.at(i, c) - dot);
    }
  });
}

Var logsumexp_rows(Var x) {
  Tape& t = *x.tape();
  const Tensor& xv = x.value();
  require(xv.rank() == 2, "logsumexp: rank-2 input required");
  int T = xv.rows(), C = xv.cols();
  Tensor out({T, 1});
  for (int i = 0; i < T; ++i) {
    double mx = xv.at(i, 0);
    for (int c = 1; c < C; ++c) mx = std::max(mx, xv.at(i, c));
    double z = 0;
    for (int c = 0; c < C; ++c) z += std::exp(xv.at(i, c) - mx);
    out.at(i, 0) = mx + std::log(z);
  }
  bool ng = t.needs_grad(x);
  int xid = x.id();
  return emit_node(t, std::move(out), ng, "logsumexp", [xid, T, C](Tape& tp, int oid) {
    if (!OA::needs(tp, xid)) return;
    const Tensor& g = OA::gbuf(tp, oid);
    const Tensor& y = OA::val(tp, oid);
    const Tensor& xv2 = OA::val(tp, xid);
    Tensor& dx = OA::gbuf(tp, xid);
    for (int i = 0; i < T; ++i) {
      double gi = g.at(i, 0);
      if (gi == 0) continue;
      for (int c = 0; c < C; ++c)
        dx.at(i, c) += gi * std::exp(xv2.at(i, c) - y.at(i, 0));
    }
  });
}

Var concat_cols(const std::vector<Var>& xs) {
  require(!xs.empty(), "concat_cols: empty list");
  Tape& t = *xs[0].tape();
  int T = xs[0].value().rows();
  int C = 0;
  bool ng = false;
  for (const Var& v : xs) {
    require(v.tape() == &t, "concat_cols: mixed tapes");
    require(v.value().rank() == 2 && v.value().rows() == T, "concat_cols: row mismatch");
    C += v.value().cols();
    ng = ng || t.needs_grad(v);
  }
  Tensor out({T, C});
  int off = 0;
  std::vector<int> ids, widths;
  for (const Var& v : xs) {
    const Tensor& xv = v.value();
    for (int i = 0; i < T; ++i)
      std::memcpy(out.data() + static_cast<std::size_t>(i) * C + off,
                  xv.data() + static_cast<std::size_t>(i) * xv.cols(),
                  sizeof(double) * static_cast<std::size_t>(xv.cols()));
    ids.push_back(v.id());
    widths.push_back(xv.cols());
    off += xv.cols();
  }
  return emit_node(t, std::move(out), ng, "concat_cols",
                   [ids, widths, T, C](Tape& tp, int oid) {
    const Tensor& g = OA::gbuf(tp, oid);
    int off2 = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (OA::needs(tp, ids[k])) {
        Tensor& d = OA::gbuf(tp, ids[k]);
        for (int i = 0; i < T; ++i)
          for (int c = 0; c < widths[k]; ++c) d.at(i, c) += g.at(i, off2 + c);
      }
      off2 += widths[k];
    }
  });
}

Var concat_rows(const std::vector<Var>& xs) {
  require(!xs.empty(), "concat_rows: empty list");
  Tape& t = *xs[0].tape();
  int C = xs[0].value().cols();
  int T = 0;
  bool ng = false;
  for (const Var& v : xs) {
    require(v.tape() == &t, "concat_rows: mixed tapes");
    require(v.value().rank() == 2 && v.value().cols() == C, "concat_rows: col mismatch");
    T += v.value().rows();
    ng = ng || t.needs_grad(v);
  }
  Tensor out({T, C});
  int off = 0;
  std::vector<int> ids, heights;
  for (const Var& v : xs) {
    const Tensor& xv = v.value();
    std::memcpy(out.data() + static_cast<std::size_t>(off) * C, xv.data(),
                sizeof(double) * static_cast<std::size_t>(xv.size()));
    ids.push_back(v.id());
    heights.push_back(xv.rows());
    off += xv.rows();
  }
  return emit_node(t, std::move(out), ng, "concat_rows",
                   [ids, heights, C](Tape& tp, int oid) {
    const Tensor& g = OA::gbuf(tp, oid);
    int off2 = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (OA::needs(tp, ids[k])) {
        Tensor& d = OA::gbuf(tp, ids[k]);
        for (int i = 0; i < heights[k]; ++i)
          for (int c = 0; c < C; ++c) d.at(i, c) += g.at(off2 + i, c);
      }
      off2 += heights[k];
    }
  });
}

Var slice_cols(Var x, int c0, int len) {
  Tape& t = *x.tape();
  const Tensor& xv = x.value();
  require(xv.rank() == 2 && c0 >= 0 && len > 0 && c0 + len <= xv.cols(),
          "slice_cols: out of range");
  int T = xv.rows();
  Tensor out({T, len});
  for (int i = 0; i < T; ++i)
    for (int c = 0; c < len; ++c) out.at(i, c) = xv.at(i, c0 + c);
  bool ng = t.needs_grad(x);
  int xid = x.id();
  return emit_node(t, std::move(out), ng, "slice_cols", [xid, c0, len, T](Tape& tp, int oid) {
    if (!OA::needs(tp, xid)) return;
    const Tensor& g = OA::gbuf(tp, oid);
    Tensor& dx = OA::gbuf(tp, xid);
    for (int i = 0; i < T; ++i)
      for (int c = 0; c < len; ++c) dx.at(i, c0 + c) += g.at(i, c);
  });
}

Var slice_rows(Var x, int r0, int len) {
  Tape& t = *x.tape();
  const Tensor& xv = x.value();
  require(xv.rank() == 2 && r0 >= 0 && len > 0 && r0 + len <= xv.rows(),
          "slice_rows: out of range");
  int C = xv.cols();
  Tensor out({len, C});
  std::memcpy(out.data(), xv.data() + static_cast<std::size_t>(r0) * C,
              sizeof(double) * static_cast<std::size_t>(len) * C);
  bool ng = t.needs_grad(x);
  int xid = x.id();
  return emit_node(t, std::move(out), ng, "slice_rows", [xid, r0, len, C](Tape& tp, int oid) {
    if (!OA::needs(tp, xid)) return;
    const Tensor& g = OA::gbuf(tp, oid);
    Tensor& dx = OA::gbuf(tp, xid);
    for (int i = 0; i < len; ++i)
      for (int c = 0; c < C; ++c) dx.at(r0 + i, c) += g.at(i, c);
  });
}

Var reshape(Var x, std::vector<int> shape) {
  Tape& t = *x.tape();
  const Tensor& xv = x.value();
  Tensor out(std::move(shape), xv.values());
  bool ng = t.needs_grad(x);
  int xid = x.id();
  return emit_node(t, std::move(out), ng, "reshape", [xid](Tape& tp, int oid) {
    if (!OA::needs(tp, xid)) return;
    const Tensor& g = OA::gbuf(tp, oid);
    Tensor& dx = OA::gbuf(tp, xid);
    for (std::int64_t i = 0; i < g.size(); ++i) dx.at(i) += g.at(i);
  });
}

Var layer_norm(Var x, Var gain, Var bias) {
  require_same_tape(x, gain);
  require_same_tape(x, bias);
  Tape& t = *x.tape();
  const Tensor& xv = x.value();
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  require(xv.rank() == 2, "layer_norm: rank-2 input required");
  int T = xv.rows(), C = xv.cols();
  require(gv.rank() == 1 && gv.dim(0) == C && bv.rank() == 1 && bv.dim(0) == C,
          "layer_norm: gain/bias must be [C]");
  constexpr double kEps = 1e-8;
  Tensor out({T, C});
  Tensor xhat({T, C});
  Tensor inv_std({T, 1});
  for (int i = 0; i < T; ++i) {
    double mean = 0;
    for (int c = 0; c < C; ++c) mean += xv.at(i, c);
    mean /= C;
    double var = 0;
    for (int c = 0; c < C; ++c) {
      double d = xv.at(i, c) - mean;
      var += d * d;
    }
    var /= C;
    double is = 1.0 / std::sqrt(var + kEps);
    inv_std.at(i, 0) = is;
    for (int c = 0; c < C; ++c) {
      double xh = (xv.at(i, c) - mean) * is;
      xhat.at(i, c) = xh;
      out.at(i, c) = xh * gv.at(c) + bv.at(c);
    }
  }
  bool ng = t.needs_grad(x) || t.needs_grad(gain) || t.needs_grad(bias);
  int xid = x.id(), gid = gain.id(), bid = bias.id();
  auto xh_keep = std::make_shared<Tensor>(std::move(xhat));
  auto is_keep = std::make_shared<Tensor>(std::move(inv_std));
  return emit_node(t, std::move(out), ng, "layer_norm",
                   [xid, gid, bid, T, C, xh_keep, is_keep](Tape& tp, int oid) {
    const Tensor& g = OA::gbuf(tp, oid);
    const Tensor& gv2 = OA::val(tp, gid);
    const Tensor& xh = *xh_keep;
    if (OA::needs(tp, gid)) {
      Tensor& dg = OA::gbuf(tp, gid);
      for (int i = 0; i < T; ++i)
        for (int c = 0; c < C; ++c) dg.at(c) += g.at(i, c) * xh.at(i, c);
    }
    if (OA::needs(tp, bid)) {
      Tensor& db = OA::gbuf(tp, bid);
      for (int i = 0; i < T; ++i)
        for (int c = 0; c < C; ++c) db.at(c) += g.at(i, c);
    }
    if (OA::needs(tp, xid)) {
      Tensor& dx = OA::gbuf(tp, xid);
      for (int i = 0; i < T; ++i) {
        double m1 = 0, m2 = 0;
        for (int c = 0; c < C; ++c) {
          double gy = g.at(i, c) * gv2.at(c);
          m1 += gy;
          m2 += gy * xh.at(i, c);
        }
        m1 /= C;
        m2 /= C;
        double is = is_keep->at(i, 0);
        for (int c = 0; c < C; ++c) {
          double gy = g.at(i, c) * gv2.at(c);
          dx.at(i, c) += is * (gy - m1 - xh.at(i, c) * m2);
        }
      }
    }
  });
}

Var mask_scale(Var x, const Tensor& mask, double s) {
  Tape& t = *x.tape();
  const Tensor& xv = x.value();
  require(xv.same_shape(mask), "mask_scale: mask shape mismatch");
  Tensor out(xv.shape());
  for (std::int64_t i = 0; i < xv.size(); ++i) out.at(i) = xv.at(i) * mask.at(i) * s;
  bool ng = t.needs_grad(x);
  int xid = x.id();
  auto m_keep = std::make_shared<Tensor>(mask);
  return emit_node(t, std::move(out), ng, "mask_scale", [xid, s, m_keep](Tape& tp, int oid) {
    if (!OA::needs(tp, xid)) return;
    const Tensor& g = OA::gbuf(tp, oid);
    Tensor& dx = OA::gbuf(tp, xid);
    for (std::int64_t i = 0; i < g.size(); ++i) dx.at(i) += g.at(i) * m_keep->at(i) * s;
  });
}

Var mask_blend(Var next, Var prev, const Tensor& mask) {
  require_same_tape(next, prev);
  Tape& t = *next.tape();
  const Tensor& nv = next.value();
  const Tensor& pv = prev.value();
  require(nv.same_shape(pv) && nv.same_shape(mask), "mask_blend: shape mismatch");
  Tensor out(nv.shape());
  for (std::int64_t i = 0; i < nv.size(); ++i)
    out.at(i) = mask.at(i) * pv.at(i) + (1.0 - mask.at(i)) * nv.at(i);
  bool ng = t.needs_grad(next) || t.needs_grad(prev);
  int nid = next.id(), pid = prev.id();
  auto m_keep = std::make_shared<Tensor>(mask);
  return emit_node(t, std::move(out), ng, "mask_blend", [nid, pid, m_keep](Tape& tp, int oid) {
    const Tensor& g = OA::gbuf(tp, oid);
    if (OA::needs(tp, nid)) {
      Tensor& dn = OA::gbuf(tp, nid);
      for (std::int64_t i = 0; i < g.size(); ++i)
        dn.at(i) += g.at(i) * (1.0 - m_keep->at(i));
    }
    if (OA::needs(tp, pid)) {
      Tensor& dp = OA::gbuf(tp, pid);
      for (std::int64_t i = 0; i < g.size(); ++i) dp.at(i) += g.at(i) * m_keep->at(i);
    }
  });
}

Var mul_scalar_node(Var x, Var s) {
  require_same_tape(x, s);
  Tape& t = *x.tape();
  const Tensor& xv = x.value();
  const Tensor& sv = s.value();
  require(sv.size() == 1, "mul_scalar_node: scalar operand must be [1x1]");
  double sc = sv.at(0);
  Tensor out(xv.shape());
  for (std::int64_t i = 0; i < xv.size(); ++i) out.at(i) = xv.at(i) * sc;
  bool ng = t.needs_grad(x) || t.needs_grad(s);
  int xid = x.id(), sid = s.id();
  return emit_node(t, std::move(out), ng, "mul_scalar_node", [xid, sid](Tape& tp, int oid) {
    const Tensor& g = OA::gbuf(tp, oid);
    const Tensor& xv2 = OA::val(tp, xid);
    double sc2 = OA::val(tp, sid).at(0);
    if (OA::needs(tp, xid)) {
      Tensor& dx = OA::gbuf(tp, xid);
      for (std::int64_t i = 0; i < g.size(); ++i) dx.at(i) += g.at(i) * sc2;
    }
    if (OA::needs(tp, sid)) {
      double acc = 0;
      for (std::int64_t i = 0; i < g.size(); ++i) acc += g.at(i) * xv2.at(i);
      OA::gbuf(tp, sid).at(0) += acc;
    }
  });
}

Var sum_all(Var x) {
  Tape& t = *x.tape();
  const Tensor& xv = x.value();
  double acc = 0;
  for (std::int64_t i = 0; i < xv.size(); ++i) acc += xv.at(i);
  bool ng = t.needs_grad(x);
  int xid = x.id();
  return emit_node(t, Tensor({1, 1}, {acc}), ng, "sum", [xid](Tape& tp, int oid) {
    if (!OA::needs(tp, xid)) return;
    double g = OA::gbuf(tp, oid).at(0);
    Tensor& dx = OA::gbuf(tp, xid);
    for (std::int64_t i = 0; i < dx.size(); ++i) dx.at(i) += g;
  });
}

Var mean_all(Var x) {
  std::int64_t n = x.value().size();
  return scale(sum_all(x), 1.0 / static_cast<double>(n));
}

namespace {

// Shared implementation of the fused cell. With layer_norm, b acts as the
// post-normalization bias (beta) and gain scales the normalized
// pre-activations; without it, gain is unused and b is the plain bias.
LstmOut lstm_cell_impl(Var x, Var h_prev, Var c_prev, Var w, Var gain, Var b,
                       bool layer_norm_cell) {
  require_same_tape(x, h_prev);
  require_same_tape(x, c_prev);
  require_same_tape(x, w);
  require_same_tape(x, b);
  Tape& t = *x.tape();
  const Tensor& xv = x.value();
  const Tensor& hv = h_prev.value();
  const Tensor& cv = c_prev.value();
  const Tensor& wv = w.value();
  const Tensor& bv = b.value();
  require(xv.rank() == 2 && xv.rows() == 1 && hv.rank() == 2 && hv.rows() == 1,
          "lstm_cell: x and h must be [1 x *]");
  const int in = xv.cols();
  const int units = hv.cols();
  require(cv.rank() == 2 && cv.rows() == 1 && cv.cols() == units, "lstm_cell: bad c shape");
  require(wv.rank() == 2 && wv.rows() == 4 * units && wv.cols() == in + units,
          "lstm_cell: W must be [4H x (in+H)]");
  require(bv.rank() == 1 && bv.dim(0) == 4 * units, "lstm_cell: bad bias shape");
  if (layer_norm_cell)
    require(gain.value().rank() == 1 && gain.value().dim(0) == 4 * units,
            "lstm_cell: bad gain shape");

  const int width = in + units;
  // saved context for the backward pass
  struct Saved {
    std::vector<double> xh;      // [in+H]
    std::vector<double> gates;   // i,f,g,o each [H]
    std::vector<double> tanh_c;  // [H]
    std::vector<double> xhat;    // [4H], layer-norm variant
    double inv_std = 0;
  };
  auto sv = std::make_shared<Saved>();
  sv->xh.resize(static_cast<std::size_t>(width));
  for (int p = 0; p < in; ++p) sv->xh[static_cast<std::size_t>(p)] = xv.at(0, p);
  for (int p = 0; p < units; ++p) sv->xh[static_cast<std::size_t>(in + p)] = hv.at(0, p);

  std::vector<double> act(static_cast<std::size_t>(4 * units));
  for (int j = 0; j < 4 * units; ++j) {
    const double* wrow = wv.data() + static_cast<std::size_t>(j) * width;
    double acc = layer_norm_cell ? 0.0 : bv.at(j);
    for (int p = 0; p < width; ++p) acc += wrow[p] * sv->xh[static_cast<std::size_t>(p)];
    act[static_cast<std::size_t>(j)] = acc;
  }
  if (layer_norm_cell) {
    constexpr double kEps = 1e-8;
    const int n = 4 * units;
    double mean = 0;
    for (double v : act) mean += v;
    mean /= n;
    double var = 0;
    for (double v : act) var += (v - mean) * (v - mean);
    var /= n;
    sv->inv_std = 1.0 / std::sqrt(var + kEps);
    sv->xhat.resize(static_cast<std::size_t>(n));
    const Tensor& gv = gain.value();
    for (int j = 0; j < n; ++j) {
      double xh = (act[static_cast<std::size_t>(j)] - mean) * sv->inv_std;
      sv->xhat[static_cast<std::size_t>(j)] = xh;
      act[static_cast<std::size_t>(j)] = xh * gv.at(j) + bv.at(j);
    }
  }

  auto sigm = [](double v) {
    return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  };
  sv->gates.resize(static_cast<std::size_t>(4 * units));
  sv->tanh_c.resize(static_cast<std::size_t>(units));
  Tensor out({2, units});  // row 0: h, row 1: c
  for (int u = 0; u < units; ++u) {
    double gi = sigm(act[static_cast<std::size_t>(u)]);
    double gf = sigm(act[static_cast<std::size_t>(units + u)]);
    double gg = std::tanh(act[static_cast<std::size_t>(2 * units + u)]);
    double go = sigm(act[static_cast<std::size_t>(3 * units + u)]);
    sv->gates[static_cast<std::size_t>(u)] = gi;
    sv->gates[static_cast<std::size_t>(units + u)] = gf;
    sv->gates[static_cast<std::size_t>(2 * units + u)] = gg;
    sv->gates[static_cast<std::size_t>(3 * units + u)] = go;
    double c_new = gf * cv.at(0, u) + gi * gg;
    double tc = std::tanh(c_new);
    sv->tanh_c[static_cast<std::size_t>(u)] = tc;
    out.at(0, u) = go * tc;
    out.at(1, u) = c_new;
  }

  bool ng = t.needs_grad(x) || t.needs_grad(h_prev) || t.needs_grad(c_prev) ||
            t.needs_grad(w) || t.needs_grad(b) ||
            (layer_norm_cell && t.needs_grad(gain));
  int xid = x.id(), hid = h_prev.id(), cid = c_prev.id(), wid = w.id(), bid = b.id();
  int gid = layer_norm_cell ? gain.id() : -1;
  Var fused = emit_node(
      t, std::move(out), ng, layer_norm_cell ? "lstm_cell_ln" : "lstm_cell",
      [=](Tape& tp, int oid) {
        const Tensor& g = OA::gbuf(tp, oid);
        const Tensor& cv2 = OA::val(tp, cid);
        const Tensor& wv2 = OA::val(tp, wid);
        std::vector<double> da(static_cast<std::size_t>(4 * units));
        Tensor* dcp = OA::needs(tp, cid) ? &OA::gbuf(tp, cid) : nullptr;
        for (int u = 0; u < units; ++u) {
          double gi = sv->gates[static_cast<std::size_t>(u)];
          double gf = sv->gates[static_cast<std::size_t>(units + u)];
          double gg = sv->gates[static_cast<std::size_t>(2 * units + u)];
          double go = sv->gates[static_cast<std::size_t>(3 * units + u)];
          double tc = sv->tanh_c[static_cast<std::size_t>(u)];
          double dh = g.at(0, u);
          double dc_out = g.at(1, u);
          double dc_total = dc_out + dh * go * (1.0 - tc * tc);
          da[static_cast<std::size_t>(u)] = dc_total * gg * gi * (1.0 - gi);
          da[static_cast<std::size_t>(units + u)] =
              dc_total * cv2.at(0, u) * gf * (1.0 - gf);
          da[static_cast<std::size_t>(2 * units + u)] = dc_total * gi * (1.0 - gg * gg);
          da[static_cast<std::size_t>(3 * units + u)] = dh * tc * go * (1.0 - go);
          if (dcp) dcp->at(0, u) += dc_total * gf;
        }
        if (layer_norm_cell) {
          // through the affine: d_gain, d_beta, then the normalization
          const Tensor& gv2 = OA::val(tp, gid);
          if (OA::needs(tp, gid)) {
            Tensor& dg = OA::gbuf(tp, gid);
            for (int j = 0; j < 4 * units; ++j)
              dg.at(j) += da[static_cast<std::size_t>(j)] * sv->xhat[static_cast<std::size_t>(j)];
          }
          if (OA::needs(tp, bid)) {
            Tensor& db = OA::gbuf(tp, bid);
            for (int j = 0; j < 4 * units; ++j) db.at(j) += da[static_cast<std::size_t>(j)];
          }
          const int n = 4 * units;
          double m1 = 0, m2 = 0;
          for (int j = 0; j < n; ++j) {
            double gy = da[static_cast<std::size_t>(j)] * gv2.at(j);
            m1 += gy;
            m2 += gy * sv->xhat[static_cast<std::size_t>(j)];
          }
          m1 /= n;
          m2 /= n;
          for (int j = 0; j < n; ++j) {
            double gy = da[static_cast<std::size_t>(j)] * gv2.at(j);
            da[static_cast<std::size_t>(j)] =
                sv->inv_std * (gy - m1 - sv->xhat[static_cast<std::size_t>(j)] * m2);
          }
        } else if (OA::needs(tp, bid)) {
          Tensor& db = OA::gbuf(tp, bid);
          for (int j = 0; j < 4 * units; ++j) db.at(j) += da[static_cast<std::size_t>(j)];
        }
        if (OA::needs(tp, wid)) {
          Tensor& dw = OA::gbuf(tp, wid);
          for (int j = 0; j < 4 * units; ++j) {
            double dj = da[static_cast<std::size_t>(j)];
            if (dj == 0) continue;
            double* drow = dw.data() + static_cast<std::size_t>(j) * width;
            for (int p = 0; p < width; ++p)
              drow[p] += dj * sv->xh[static_cast<std::size_t>(p)];
          }
        }
        bool nx = OA::needs(tp, xid), nh = OA::needs(tp, hid);
        if (nx || nh) {
          std::vector<double> dxh(static_cast<std::size_t>(width), 0.0);
          for (int j = 0; j < 4 * units; ++j) {
            double dj = da[static_cast<std::size_t>(j)];
            if (dj == 0) continue;
            const double* wrow = wv2.data() + static_cast<std::size_t>(j) * width;
            for (int p = 0; p < width; ++p) dxh[static_cast<std::size_t>(p)] += dj * wrow[p];
          }
          if (nx) {
            Tensor& dx = OA::gbuf(tp, xid);
            for (int p = 0; p < in; ++p) dx.at(0, p) += dxh[static_cast<std::size_t>(p)];
          }
          if (nh) {
            Tensor& dh2 = OA::gbuf(tp, hid);
            for (int p = 0; p < units; ++p)
              dh2.at(0, p) += dxh[static_cast<std::size_t>(in + p)];
          }
        }
      });
  LstmOut result;
  result.h = slice_rows(fused, 0, 1);
  result.c = slice_rows(fused, 1, 1);
  return result;
}

}  // namespace

LstmOut lstm_cell_plain(Var x, Var h_prev, Var c_prev, Var w, Var b) {
  return lstm_cell_impl(x, h_prev, c_prev, w, b /*gain unused*/, b, false);
}

LstmOut lstm_cell_ln(Var x, Var h_prev, Var c_prev, Var w, Var ln_gain, Var ln_bias) {
  return lstm_cell_impl(x, h_prev, c_prev, w, ln_gain, ln_bias, true);
}

// --- binder / drivers -------------------------------------------------------

Var ParamBinder::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  Var v = tape_->input(store_->value(name), needs_grad_);
  bound_.emplace(name, v);
  return v;
}

void ParamBinder::accumulate_grads() {
  for (const auto& [name, var] : bound_) {
    // A bound leaf without a gradient buffer received no contribution: its
    // gradient is exactly zero and the accumulator stays untouched.
    if (!tape_->needs_grad(var) || !tape_->has_grad(var)) continue;
    store_->grad(name).add_scaled(tape_->grad(var), 1.0);
  }
}

double forward_backward(ParamStore& params, const GraphFn& graph, bool check_finite) {
  Tape tape(check_finite);
  ParamBinder binder(tape, params, /*needs_grad=*/true);
  Var loss = graph(tape, binder);
  if (loss.value().size() != 1) throw NumericError("graph must return a scalar loss");
  if (!std::isfinite(loss.value().at(0)))
    throw NumericError("non-finite loss");
  tape.backward(loss);
  binder.accumulate_grads();
  return loss.value().at(0);
}

double forward_only(ParamStore& params, const GraphFn& graph) {
  Tape tape;
  ParamBinder binder(tape, params, /*needs_grad=*/false);
  Var loss = graph(tape, binder);
  if (loss.value().size() != 1) throw NumericError("graph must return a scalar loss");
  return loss.value().at(0);
}

FdReport finite_difference_check(ParamStore& params, const GraphFn& graph,
                                 double step) {
  if (step <= 0) throw NumericError("finite_difference_check: step must be > 0");
  params.zero_grads();
  forward_backward(params, graph);

  FdReport report;
  for (const std::string& name : params.names()) {
    const Tensor analytic = params.grad(name);  // copy: perturbed runs reuse store
    Tensor& theta = params.value(name);
    double max_rel = 0;
    for (std::int64_t i = 0; i < theta.size(); ++i) {
      double orig = theta.at(i);
      theta.at(i) = orig + step;
      double fp = forward_only(params, graph);
      theta.at(i) = orig - step;
      double fm = forward_only(params, graph);
      theta.at(i) = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        throw NumericError("finite_difference_check: non-finite loss at perturbed point of " + name);
      }
      double fd = (fp - fm) / (2.0 * step);
      // Structurally zero or negligible entries (dead paths, masked support):
      // the central difference is dominated by cancellation noise there and
      // the relative form would amplify it, so both-tiny entries count as
      // exact. 1e-6 sits well above the 64-bit noise floor (~1e-11 at step
      // 1e-5) and well below any meaningful gradient at unit loss scale.
      if (std::fabs(analytic.at(i)) < 1e-6 && std::fabs(fd) < 1e-6) continue;
      double rel = std::fabs(analytic.at(i) - fd) / (std::fabs(fd) + 1e-12);
      max_rel = std::max(max_rel, rel);
    }
    report.per_param[name] = max_rel;
    if (max_rel > report.worst) {
      report.worst = max_rel;
      report.worst_param = name;
    }
  }
  return report;
}

}  // namespace seqvc::num
