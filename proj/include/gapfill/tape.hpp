#pragma once

#include <cmath>
#include <vector>

#include "gapfill/tensor.hpp"

namespace gapfill {

/// Wengert-list reverse-mode tape over Tensor values. Every training-time
/// computation (unrolled solver iterations, direct-net forward, masked
/// loss) is expressed with these primitives so a single backward pass
/// yields exact parameter gradients.
class Tape {
 public:
  enum class Op {
    leaf, add, sub, mul, add_const, mul_const, scale_c, scale_s,
    tanh_, sigmoid_, conv, convT, upsample2, concat, sum_sq
  };

  struct Node {
    Op op;
    int a = -1, b = -1;
    int co = 0, ci = 0, k = 0, stride = 1, groups = 1;
    double cscalar = 1.0;
    Tensor cval;   // payload for *_const ops
    Tensor val;
    Tensor grad;
  };

  int leaf(const Tensor& t) { return push(Op::leaf, -1, -1, t); }

  int add(int a, int b) {
    check_same(a, b);
    Tensor out = nodes_[a].val;
    for (size_t i = 0; i < out.size(); ++i) out.v[i] += nodes_[b].val.v[i];
    return push(Op::add, a, b, std::move(out));
  }
  int sub(int a, int b) {
    check_same(a, b);
    Tensor out = nodes_[a].val;
    for (size_t i = 0; i < out.size(); ++i) out.v[i] -= nodes_[b].val.v[i];
    return push(Op::sub, a, b, std::move(out));
  }
  int mul(int a, int b) {
    check_same(a, b);
    Tensor out = nodes_[a].val;
    for (size_t i = 0; i < out.size(); ++i) out.v[i] *= nodes_[b].val.v[i];
    return push(Op::mul, a, b, std::move(out));
  }
  int add_const(int a, const Tensor& cst) {
    Tensor out = nodes_[a].val;
    for (size_t i = 0; i < out.size(); ++i) out.v[i] += cst.v[i];
    int id = push(Op::add_const, a, -1, std::move(out));
    nodes_[id].cval = cst;
    return id;
  }
  int mul_const(int a, const Tensor& cst) {
    Tensor out = nodes_[a].val;
    for (size_t i = 0; i < out.size(); ++i) out.v[i] *= cst.v[i];
    int id = push(Op::mul_const, a, -1, std::move(out));
    nodes_[id].cval = cst;
    return id;
  }
  int scale_c(int a, double s) {
    Tensor out = nodes_[a].val;
    for (auto& x : out.v) x *= s;
    int id = push(Op::scale_c, a, -1, std::move(out));
    nodes_[id].cscalar = s;
    return id;
  }
  /// a * s where s is a 1-element tensor node (trainable scalar).
  int scale_s(int a, int s) {
    const double sv = nodes_[s].val.v[0];
    Tensor out = nodes_[a].val;
    for (auto& x : out.v) x *= sv;
    return push(Op::scale_s, a, s, std::move(out));
  }
  int tanh_(int a) {
    Tensor out = nodes_[a].val;
    for (auto& x : out.v) x = std::tanh(x);
    return push(Op::tanh_, a, -1, std::move(out));
  }
  int sigmoid_(int a) {
    Tensor out = nodes_[a].val;
    for (auto& x : out.v) x = 1.0 / (1.0 + std::exp(-x));
    return push(Op::sigmoid_, a, -1, std::move(out));
  }
  int conv(int a, int wgt, int co, int ci, int k, int stride = 1, int groups = 1) {
    const Tensor& x = nodes_[a].val;
    Tensor out(groups * co, x.h / stride, x.w / stride);
    conv2d_acc(x, nodes_[wgt].val, out, co, ci, k, stride, groups);
    int id = push(Op::conv, a, wgt, std::move(out));
    set_conv(id, co, ci, k, stride, groups);
    return id;
  }
  /// Adjoint of a stride-1 conv as a forward operation (used to express
  /// Jacobian-transpose products inside the differentiated computation).
  int convT(int a, int wgt, int co, int ci, int k, int groups = 1) {
    const Tensor& x = nodes_[a].val;  // groups*co channels in
    Tensor out(groups * ci, x.h, x.w);
    conv2d_adj_data_acc(x, nodes_[wgt].val, out, co, ci, k, 1, groups);
    int id = push(Op::convT, a, wgt, std::move(out));
    set_conv(id, co, ci, k, 1, groups);
    return id;
  }
  int upsample2(int a) {
    const Tensor& x = nodes_[a].val;
    Tensor out(x.c, x.h * 2, x.w * 2);
    for (int cc = 0; cc < x.c; ++cc)
      for (int i = 0; i < out.h; ++i)
        for (int j = 0; j < out.w; ++j) out.at(cc, i, j) = x.at(cc, i / 2, j / 2);
    return push(Op::upsample2, a, -1, std::move(out));
  }
  int concat(int a, int b) {
    const Tensor& xa = nodes_[a].val;
    const Tensor& xb = nodes_[b].val;
    if (xa.h != xb.h || xa.w != xb.w) throw ShapeMismatch("concat plane mismatch");
    Tensor out(xa.c + xb.c, xa.h, xa.w);
    std::copy(xa.v.begin(), xa.v.end(), out.v.begin());
    std::copy(xb.v.begin(), xb.v.end(), out.v.begin() + xa.v.size());
    return push(Op::concat, a, b, std::move(out));
  }
  int sum_sq(int a) {
    double acc = 0;
    for (double x : nodes_[a].val.v) acc += x * x;
    Tensor out(1, 1, 1);
    out.v[0] = acc;
    return push(Op::sum_sq, a, -1, std::move(out));
  }

  const Tensor& val(int id) const { return nodes_[id].val; }
  const Tensor& grad(int id) const { return nodes_[id].grad; }
  double scalar(int id) const { return nodes_[id].val.v[0]; }
  size_t num_nodes() const { return nodes_.size(); }

  void backward(int out_id) {
    for (auto& n : nodes_) n.grad = Tensor(n.val.c, n.val.h, n.val.w);
    nodes_[out_id].grad.v.assign(nodes_[out_id].grad.size(), 1.0);
    for (int id = out_id; id >= 0; --id) {
      Node& n = nodes_[id];
      bool any = false;
      for (double g : n.grad.v)
        if (g != 0) { any = true; break; }
      if (!any) continue;
      switch (n.op) {
        case Op::leaf:
          break;
        case Op::add:
          axpy(n.grad, nodes_[n.a].grad, 1.0);
          axpy(n.grad, nodes_[n.b].grad, 1.0);
          break;
        case Op::sub:
          axpy(n.grad, nodes_[n.a].grad, 1.0);
          axpy(n.grad, nodes_[n.b].grad, -1.0);
          break;
        case Op::mul:
          for (size_t i = 0; i < n.grad.size(); ++i) {
            nodes_[n.a].grad.v[i] += n.grad.v[i] * nodes_[n.b].val.v[i];
            nodes_[n.b].grad.v[i] += n.grad.v[i] * nodes_[n.a].val.v[i];
          }
          break;
        case Op::add_const:
          axpy(n.grad, nodes_[n.a].grad, 1.0);
          break;
        case Op::mul_const:
          for (size_t i = 0; i < n.grad.size(); ++i)
            nodes_[n.a].grad.v[i] += n.grad.v[i] * n.cval.v[i];
          break;
        case Op::scale_c:
          axpy(n.grad, nodes_[n.a].grad, n.cscalar);
          break;
        case Op::scale_s: {
          const double sv = nodes_[n.b].val.v[0];
          double ds = 0;
          for (size_t i = 0; i < n.grad.size(); ++i) {
            nodes_[n.a].grad.v[i] += n.grad.v[i] * sv;
            ds += n.grad.v[i] * nodes_[n.a].val.v[i];
          }
          nodes_[n.b].grad.v[0] += ds;
          break;
        }
        case Op::tanh_:
          for (size_t i = 0; i < n.grad.size(); ++i)
            nodes_[n.a].grad.v[i] += n.grad.v[i] * (1.0 - n.val.v[i] * n.val.v[i]);
          break;
        case Op::sigmoid_:
          for (size_t i = 0; i < n.grad.size(); ++i)
            nodes_[n.a].grad.v[i] += n.grad.v[i] * n.val.v[i] * (1.0 - n.val.v[i]);
          break;
        case Op::conv:
          conv2d_adj_data_acc(n.grad, nodes_[n.b].val, nodes_[n.a].grad, n.co, n.ci,
                              n.k, n.stride, n.groups);
          conv2d_adj_weight_acc(nodes_[n.a].val, n.grad, nodes_[n.b].grad, n.co, n.ci,
                                n.k, n.stride, n.groups);
          break;
        case Op::convT:
          // forward was the data-adjoint, so the data VJP is the conv itself
          conv2d_acc(n.grad, nodes_[n.b].val, nodes_[n.a].grad, n.co, n.ci, n.k, 1,
                     n.groups);
          conv2d_adj_weight_acc(n.grad, nodes_[n.a].val, nodes_[n.b].grad, n.co, n.ci,
                                n.k, 1, n.groups);
          break;
        case Op::upsample2: {
          Tensor& da = nodes_[n.a].grad;
          for (int cc = 0; cc < n.val.c; ++cc)
            for (int i = 0; i < n.val.h; ++i)
              for (int j = 0; j < n.val.w; ++j)
                da.at(cc, i / 2, j / 2) += n.grad.at(cc, i, j);
          break;
        }
        case Op::concat: {
          Tensor& da = nodes_[n.a].grad;
          Tensor& db = nodes_[n.b].grad;
          for (size_t i = 0; i < da.size(); ++i) da.v[i] += n.grad.v[i];
          for (size_t i = 0; i < db.size(); ++i) db.v[i] += n.grad.v[da.size() + i];
          break;
        }
        case Op::sum_sq:
          for (size_t i = 0; i < nodes_[n.a].val.size(); ++i)
            nodes_[n.a].grad.v[i] += 2.0 * n.grad.v[0] * nodes_[n.a].val.v[i];
          break;
      }
    }
  }

 private:
  void check_same(int a, int b) const {
    if (!nodes_[a].val.same_shape(nodes_[b].val))
      throw ShapeMismatch("tape operand shape mismatch");
  }
  static void axpy(const Tensor& src, Tensor& dst, double s) {
    for (size_t i = 0; i < src.size(); ++i) dst.v[i] += s * src.v[i];
  }
  int push(Op op, int a, int b, Tensor val) {
    Node n;
    n.op = op;
    n.a = a;
    n.b = b;
    n.val = std::move(val);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }
  void set_conv(int id, int co, int ci, int k, int stride, int groups) {
    nodes_[id].co = co;
    nodes_[id].ci = ci;
    nodes_[id].k = k;
    nodes_[id].stride = stride;
    nodes_[id].groups = groups;
  }

  std::vector<Node> nodes_;
};

}  // namespace gapfill
