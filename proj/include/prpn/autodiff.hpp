#pragma once

#include <algorithm>
#include <cassert>
#include <cstdint>
#include <string>
#include <vector>

#include "prpn/tensor.hpp"

namespace prpn::ad {

// Reverse-mode tape. Values are computed eagerly as nodes are appended, so a
// node's forward value is cached exactly once; backward() runs one reverse
// sweep over the creation order (which is already topological).
//
// Primitives: add, sub, mul, div, matmul, concat, slice, row, relu, hardtanh,
// sigmoid, tanh, softmax, reduce_sum, reduce_mean, scale_shift (a*x+b with
// constants), bmul (scalar tensor broadcast) and fused softmax cross-entropy.

struct Var {
  std::int32_t i = -1;
  bool valid() const { return i >= 0; }
};

enum class Op : std::uint8_t {
  kLeaf,
  kAdd,
  kSub,
  kMul,
  kBMul,
  kDiv,
  kMatMul,
  kRow,
  kConcat,
  kSlice,
  kRelu,
  kHardTanh,
  kSigmoid,
  kTanh,
  kSoftmax,
  kReduceSum,
  kReduceMean,
  kScaleShift,
  kSoftmaxXent,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kBMul: return "bmul";
    case Op::kDiv: return "div";
    case Op::kMatMul: return "matmul";
    case Op::kRow: return "row";
    case Op::kConcat: return "concat";
    case Op::kSlice: return "slice";
    case Op::kRelu: return "relu";
    case Op::kHardTanh: return "hardtanh";
    case Op::kSigmoid: return "sigmoid";
    case Op::kTanh: return "tanh";
    case Op::kSoftmax: return "softmax";
    case Op::kReduceSum: return "reduce_sum";
    case Op::kReduceMean: return "reduce_mean";
    case Op::kScaleShift: return "scale_shift";
    case Op::kSoftmaxXent: return "softmax_xent";
  }
  return "?";
}

class Tape {
 public:
  Tape() { nodes_.reserve(1024); }

  std::size_t size() const { return nodes_.size(); }

  void clear() {
    nodes_.clear();
    grads_.clear();
    has_grads_ = false;
  }

  Var leaf(Tensor t) {
    if (!t.all_finite()) throw NumericError("leaf bound to non-finite tensor");
    return push(Op::kLeaf, {}, std::move(t));
  }

  Var scalar(double x) { return leaf(Tensor::scalar(x)); }
  Var zeros(Shape s) { return leaf(Tensor::zeros(std::move(s))); }

  const Tensor& value(Var x) const { return nodes_[check(x)].value; }

  // Gradient of the last backward() root with respect to node x.
  const Tensor& grad(Var x) const {
    if (!has_grads_) throw std::logic_error("grad() before backward()");
    return grads_[check(x)];
  }

  Var add(Var a, Var b) {
    const Tensor &ta = value(a), &tb = value(b);
    require(ta.same_shape(tb), Op::kAdd, ta, tb);
    Tensor out(ta.shape);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = ta[k] + tb[k];
    return push(Op::kAdd, {a.i, b.i}, std::move(out));
  }

  Var sub(Var a, Var b) {
    const Tensor &ta = value(a), &tb = value(b);
    require(ta.same_shape(tb), Op::kSub, ta, tb);
    Tensor out(ta.shape);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = ta[k] - tb[k];
    return push(Op::kSub, {a.i, b.i}, std::move(out));
  }

  Var mul(Var a, Var b) {
    const Tensor &ta = value(a), &tb = value(b);
    require(ta.same_shape(tb), Op::kMul, ta, tb);
    Tensor out(ta.shape);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = ta[k] * tb[k];
    return push(Op::kMul, {a.i, b.i}, std::move(out));
  }

  // scalar s broadcast-multiplied over x
  Var bmul(Var s, Var x) {
    const Tensor &ts = value(s), &tx = value(x);
    require(ts.is_scalar(), Op::kBMul, ts, tx);
    Tensor out(tx.shape);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = ts[0] * tx[k];
    return push(Op::kBMul, {s.i, x.i}, std::move(out));
  }

  // elementwise a/b; b may be a scalar, which divides every element of a
  Var div(Var a, Var b) {
    const Tensor &ta = value(a), &tb = value(b);
    require(ta.same_shape(tb) || tb.is_scalar(), Op::kDiv, ta, tb);
    Tensor out(ta.shape);
    for (std::size_t k = 0; k < out.size(); ++k)
      out[k] = ta[k] / (tb.is_scalar() ? tb[0] : tb[k]);
    return push(Op::kDiv, {a.i, b.i}, std::move(out));
  }

  // {r,c} x {c} -> {r}   or   {r,c} x {c,k} -> {r,k}
  Var matmul(Var a, Var b) {
    const Tensor &ta = value(a), &tb = value(b);
    if (ta.rank() != 2 || tb.rank() < 1 || tb.rank() > 2 || ta.cols() != tb.shape[0])
      fail(Op::kMatMul, ta, tb);
    if (tb.rank() == 1) {
      Tensor out({ta.rows()});
      for (std::size_t r = 0; r < ta.rows(); ++r) {
        double acc = 0.0;
        const double* arow = &ta.v[r * ta.cols()];
        for (std::size_t c = 0; c < ta.cols(); ++c) acc += arow[c] * tb[c];
        out[r] = acc;
      }
      return push(Op::kMatMul, {a.i, b.i}, std::move(out));
    }
    Tensor out({ta.rows(), tb.cols()});
    for (std::size_t r = 0; r < ta.rows(); ++r)
      for (std::size_t c = 0; c < ta.cols(); ++c) {
        double av = ta.at(r, c);
        if (av == 0.0) continue;
        for (std::size_t k = 0; k < tb.cols(); ++k) out.at(r, k) += av * tb.at(c, k);
      }
    return push(Op::kMatMul, {a.i, b.i}, std::move(out));
  }

  // row i of a rank-2 tensor (embedding lookup)
  Var row(Var m, std::size_t i) {
    const Tensor& tm = value(m);
    if (tm.rank() != 2 || i >= tm.rows())
      throw ShapeError(std::string("row: index ") + std::to_string(i) + " of " +
                       shape_str(tm.shape));
    Tensor out({tm.cols()});
    for (std::size_t c = 0; c < tm.cols(); ++c) out[c] = tm.at(i, c);
    Var r = push(Op::kRow, {m.i}, std::move(out));
    nodes_[r.i].a = i;
    return r;
  }

  // 1-D concatenation
  Var concat(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    std::size_t total = 0;
    std::vector<std::int32_t> in;
    in.reserve(parts.size());
    for (Var p : parts) {
      const Tensor& t = value(p);
      if (t.rank() != 1) throw ShapeError("concat: rank-1 inputs only, got " + shape_str(t.shape));
      total += t.size();
      in.push_back(p.i);
    }
    Tensor out({total});
    std::size_t off = 0;
    for (Var p : parts) {
      const Tensor& t = value(p);
      std::copy(t.v.begin(), t.v.end(), out.v.begin() + static_cast<std::ptrdiff_t>(off));
      off += t.size();
    }
    return push(Op::kConcat, std::move(in), std::move(out));
  }

  // x[a, b) of a rank-1 tensor
  Var slice(Var x, std::size_t a, std::size_t b) {
    const Tensor& tx = value(x);
    if (tx.rank() != 1 || a >= b || b > tx.size())
      throw ShapeError("slice [" + std::to_string(a) + "," + std::to_string(b) + ") of " +
                       shape_str(tx.shape));
    Tensor out({b - a});
    std::copy(tx.v.begin() + static_cast<std::ptrdiff_t>(a),
              tx.v.begin() + static_cast<std::ptrdiff_t>(b), out.v.begin());
    Var r = push(Op::kSlice, {x.i}, std::move(out));
    nodes_[r.i].a = a;
    nodes_[r.i].b = b;
    return r;
  }

  Var relu(Var x) {
    const Tensor& tx = value(x);
    Tensor out(tx.shape);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = tx[k] > 0.0 ? tx[k] : 0.0;
    return push(Op::kRelu, {x.i}, std::move(out));
  }

  // clamp to [-1,1]; subgradient 1 on the closed interval
  Var hardtanh(Var x) {
    const Tensor& tx = value(x);
    Tensor out(tx.shape);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = std::clamp(tx[k], -1.0, 1.0);
    return push(Op::kHardTanh, {x.i}, std::move(out));
  }

  Var sigmoid(Var x) {
    const Tensor& tx = value(x);
    Tensor out(tx.shape);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = 1.0 / (1.0 + std::exp(-tx[k]));
    return push(Op::kSigmoid, {x.i}, std::move(out));
  }

  Var tanh(Var x) {
    const Tensor& tx = value(x);
    Tensor out(tx.shape);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = std::tanh(tx[k]);
    return push(Op::kTanh, {x.i}, std::move(out));
  }

  Var softmax(Var x) {
    const Tensor& tx = value(x);
    if (tx.rank() != 1) throw ShapeError("softmax: rank-1 input only, got " + shape_str(tx.shape));
    Tensor out(tx.shape);
    double m = *std::max_element(tx.v.begin(), tx.v.end());
    double z = 0.0;
    for (std::size_t k = 0; k < out.size(); ++k) {
      out[k] = std::exp(tx[k] - m);
      z += out[k];
    }
    for (std::size_t k = 0; k < out.size(); ++k) out[k] /= z;
    return push(Op::kSoftmax, {x.i}, std::move(out));
  }

  Var reduce_sum(Var x) {
    const Tensor& tx = value(x);
    double acc = 0.0;
    for (double e : tx.v) acc += e;
    return push(Op::kReduceSum, {x.i}, Tensor::scalar(acc));
  }

  Var reduce_mean(Var x) {
    const Tensor& tx = value(x);
    if (tx.size() == 0) throw ShapeError("reduce_mean of empty tensor");
    double acc = 0.0;
    for (double e : tx.v) acc += e;
    return push(Op::kReduceMean, {x.i}, Tensor::scalar(acc / static_cast<double>(tx.size())));
  }

  // a*x + b with compile-time constants (scalar broadcast)
  Var scale_shift(Var x, double a, double b) {
    const Tensor& tx = value(x);
    Tensor out(tx.shape);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = a * tx[k] + b;
    Var r = push(Op::kScaleShift, {x.i}, std::move(out));
    nodes_[r.i].ca = a;
    nodes_[r.i].cb = b;
    return r;
  }

  // -log softmax(logits)[target], numerically stable; caches the softmax for backward
  Var softmax_xent(Var logits, std::size_t target) {
    const Tensor& tl = value(logits);
    if (tl.rank() != 1 || target >= tl.size())
      throw ShapeError("softmax_xent: target " + std::to_string(target) + " for " +
                       shape_str(tl.shape));
    double m = *std::max_element(tl.v.begin(), tl.v.end());
    double z = 0.0;
    Tensor soft(tl.shape);
    for (std::size_t k = 0; k < tl.size(); ++k) {
      soft[k] = std::exp(tl[k] - m);
      z += soft[k];
    }
    for (std::size_t k = 0; k < tl.size(); ++k) soft[k] /= z;
    double loss = m + std::log(z) - tl[target];
    Var r = push(Op::kSoftmaxXent, {logits.i}, Tensor::scalar(loss));
    nodes_[r.i].a = target;
    nodes_[r.i].aux = std::move(soft);
    return r;
  }

  // ---- composites ----

  Var dot(Var a, Var b) { return reduce_sum(mul(a, b)); }

  // max(x, c) via c + relu(x - c)
  Var floor_at(Var x, double c) { return scale_shift(relu(scale_shift(x, 1.0, -c)), 1.0, c); }

  Var affine(Var w, Var x, Var b) { return add(matmul(w, x), b); }

  // ---- backward ----

  void backward(Var root) {
    std::size_t r = check(root);
    if (nodes_[r].value.size() != 1)
      throw ShapeError("backward: root must be scalar, got " + shape_str(nodes_[r].value.shape));
    grads_.assign(nodes_.size(), Tensor());
    for (std::size_t i = 0; i < nodes_.size(); ++i) grads_[i] = Tensor(nodes_[i].value.shape);
    has_grads_ = true;
    grads_[r][0] = 1.0;
    for (std::size_t ii = r + 1; ii-- > 0;) backprop(ii);
  }

 private:
  struct Node {
    Op op = Op::kLeaf;
    std::vector<std::int32_t> in;
    Tensor value;
    Tensor aux;            // softmax cache for fused cross-entropy
    std::size_t a = 0, b = 0;
    double ca = 1.0, cb = 0.0;
  };

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  bool has_grads_ = false;

  std::size_t check(Var x) const {
    if (!x.valid() || static_cast<std::size_t>(x.i) >= nodes_.size())
      throw std::logic_error("invalid Var");
    return static_cast<std::size_t>(x.i);
  }

  static void require(bool ok, Op op, const Tensor& a, const Tensor& b) {
    if (!ok) fail(op, a, b);
  }

  [[noreturn]] static void fail(Op op, const Tensor& a, const Tensor& b) {
    throw ShapeError(std::string(op_name(op)) + ": shape mismatch " + shape_str(a.shape) +
                     " vs " + shape_str(b.shape));
  }

  Var push(Op op, std::vector<std::int32_t> in, Tensor value) {
    if (!value.all_finite())
      throw NumericError(std::string("non-finite value out of ") + op_name(op));
    Node n;
    n.op = op;
    n.in = std::move(in);
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    has_grads_ = false;
    return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
  }

  void backprop(std::size_t i) {
    Node& n = nodes_[i];
    const Tensor& g = grads_[i];
    switch (n.op) {
      case Op::kLeaf:
        break;
      case Op::kAdd: {
        accum(n.in[0], g, +1.0);
        accum(n.in[1], g, +1.0);
        break;
      }
      case Op::kSub: {
        accum(n.in[0], g, +1.0);
        accum(n.in[1], g, -1.0);
        break;
      }
      case Op::kMul: {
        Tensor& ga = grads_[n.in[0]];
        Tensor& gb = grads_[n.in[1]];
        const Tensor& va = nodes_[n.in[0]].value;
        const Tensor& vb = nodes_[n.in[1]].value;
        for (std::size_t k = 0; k < g.size(); ++k) {
          ga[k] += g[k] * vb[k];
          gb[k] += g[k] * va[k];
        }
        break;
      }
      case Op::kBMul: {
        Tensor& gs = grads_[n.in[0]];
        Tensor& gx = grads_[n.in[1]];
        const Tensor& vs = nodes_[n.in[0]].value;
        const Tensor& vx = nodes_[n.in[1]].value;
        for (std::size_t k = 0; k < g.size(); ++k) {
          gs[0] += g[k] * vx[k];
          gx[k] += g[k] * vs[0];
        }
        break;
      }
      case Op::kDiv: {
        Tensor& ga = grads_[n.in[0]];
        Tensor& gb = grads_[n.in[1]];
        const Tensor& va = nodes_[n.in[0]].value;
        const Tensor& vb = nodes_[n.in[1]].value;
        if (vb.is_scalar()) {
          double d = vb[0];
          for (std::size_t k = 0; k < g.size(); ++k) {
            ga[k] += g[k] / d;
            gb[0] -= g[k] * va[k] / (d * d);
          }
        } else {
          for (std::size_t k = 0; k < g.size(); ++k) {
            ga[k] += g[k] / vb[k];
            gb[k] -= g[k] * va[k] / (vb[k] * vb[k]);
          }
        }
        break;
      }
      case Op::kMatMul: {
        Tensor& ga = grads_[n.in[0]];
        Tensor& gb = grads_[n.in[1]];
        const Tensor& va = nodes_[n.in[0]].value;
        const Tensor& vb = nodes_[n.in[1]].value;
        if (vb.rank() == 1) {
          for (std::size_t r = 0; r < va.rows(); ++r) {
            double gr = g[r];
            if (gr == 0.0) continue;
            for (std::size_t c = 0; c < va.cols(); ++c) {
              ga.at(r, c) += gr * vb[c];
              gb[c] += gr * va.at(r, c);
            }
          }
        } else {
          for (std::size_t r = 0; r < va.rows(); ++r)
            for (std::size_t k = 0; k < vb.cols(); ++k) {
              double gv = g.at(r, k);
              if (gv == 0.0) continue;
              for (std::size_t c = 0; c < va.cols(); ++c) {
                ga.at(r, c) += gv * vb.at(c, k);
                gb.at(c, k) += gv * va.at(r, c);
              }
            }
        }
        break;
      }
      case Op::kRow: {
        Tensor& gm = grads_[n.in[0]];
        std::size_t cols = nodes_[n.in[0]].value.cols();
        for (std::size_t c = 0; c < cols; ++c) gm.v[n.a * cols + c] += g[c];
        break;
      }
      case Op::kConcat: {
        std::size_t off = 0;
        for (std::int32_t in : n.in) {
          Tensor& gi = grads_[in];
          for (std::size_t k = 0; k < gi.size(); ++k) gi[k] += g[off + k];
          off += gi.size();
        }
        break;
      }
      case Op::kSlice: {
        Tensor& gx = grads_[n.in[0]];
        for (std::size_t k = 0; k < g.size(); ++k) gx[n.a + k] += g[k];
        break;
      }
      case Op::kRelu: {
        Tensor& gx = grads_[n.in[0]];
        const Tensor& vx = nodes_[n.in[0]].value;
        for (std::size_t k = 0; k < g.size(); ++k)
          if (vx[k] > 0.0) gx[k] += g[k];
        break;
      }
      case Op::kHardTanh: {
        Tensor& gx = grads_[n.in[0]];
        const Tensor& vx = nodes_[n.in[0]].value;
        for (std::size_t k = 0; k < g.size(); ++k)
          if (vx[k] >= -1.0 && vx[k] <= 1.0) gx[k] += g[k];
        break;
      }
      case Op::kSigmoid: {
        Tensor& gx = grads_[n.in[0]];
        for (std::size_t k = 0; k < g.size(); ++k)
          gx[k] += g[k] * n.value[k] * (1.0 - n.value[k]);
        break;
      }
      case Op::kTanh: {
        Tensor& gx = grads_[n.in[0]];
        for (std::size_t k = 0; k < g.size(); ++k)
          gx[k] += g[k] * (1.0 - n.value[k] * n.value[k]);
        break;
      }
      case Op::kSoftmax: {
        Tensor& gx = grads_[n.in[0]];
        double gy = 0.0;
        for (std::size_t k = 0; k < g.size(); ++k) gy += g[k] * n.value[k];
        for (std::size_t k = 0; k < g.size(); ++k) gx[k] += n.value[k] * (g[k] - gy);
        break;
      }
      case Op::kReduceSum: {
        Tensor& gx = grads_[n.in[0]];
        for (std::size_t k = 0; k < gx.size(); ++k) gx[k] += g[0];
        break;
      }
      case Op::kReduceMean: {
        Tensor& gx = grads_[n.in[0]];
        double s = g[0] / static_cast<double>(gx.size());
        for (std::size_t k = 0; k < gx.size(); ++k) gx[k] += s;
        break;
      }
      case Op::kScaleShift: {
        Tensor& gx = grads_[n.in[0]];
        for (std::size_t k = 0; k < g.size(); ++k) gx[k] += n.ca * g[k];
        break;
      }
      case Op::kSoftmaxXent: {
        Tensor& gx = grads_[n.in[0]];
        for (std::size_t k = 0; k < gx.size(); ++k)
          gx[k] += g[0] * (n.aux[k] - (k == n.a ? 1.0 : 0.0));
        break;
      }
    }
  }

  void accum(std::int32_t in, const Tensor& g, double sign) {
    Tensor& gi = grads_[in];
    for (std::size_t k = 0; k < g.size(); ++k) gi[k] += sign * g[k];
  }
};

}  // namespace prpn::ad
