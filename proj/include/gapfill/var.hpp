#pragma once

#include <cmath>
#include <vector>

#include "gapfill/field.hpp"
#include "gapfill/tape.hpp"
#include "gapfill/tensor.hpp"

namespace gapfill {

enum class PriorKind { zero, diffusion, convnet };

inline Tensor laplacian_kernel() {
  Tensor kl(1, 3, 3);
  kl.v = {0, 1, 0, 1, -4, 1, 0, 1, 0};
  return kl;
}

struct ConvPriorParams {
  int channels = 8;
  int k = 3;
  Tensor w1, w2, w3, w4;  // (c,1,k,k), (1,c,k,k), (c,1,k,k), (c,1,k,k)

  void init(Rng& rng) {
    const double s = 0.5 / (k * std::sqrt((double)channels));
    w1 = Tensor(channels, k, k);
    w2 = Tensor(channels, k, k);
    w3 = Tensor(channels, k, k);
    w4 = Tensor(channels, k, k);
    w1.fill_normal(rng, 1.0 / k);
    w2.fill_normal(rng, s);
    w3.fill_normal(rng, s);
    w4.fill_normal(rng, s);
  }
};

/// The operator phi: maps a T x H x W state to a state of the same shape,
/// zero on land. Kernels act per frame with shared weights.
struct PriorModel {
  PriorKind kind = PriorKind::zero;
  double nu = 0.1;        // diffusion strength; nu = 0 makes phi the identity
  ConvPriorParams net;
};

enum class UpdateRule { plain, momentum, learned };
enum class SolverInit { zero_fill, obs_fill };

struct LearnedUpdateParams {
  int k = 3;
  std::vector<double> step_gain;  // one per iteration
  Tensor gate;                    // (1,1,k,k) convolutional gate
  Tensor out_map;                 // (1,1,k,k) linear map applied to the hidden state

  void init(int iterations, Rng& rng) {
    // modest initial step keeps the untrained unrolled solver stable
    step_gain.assign(iterations, 0.2);
    gate = Tensor(1, k, k);
    out_map = Tensor(1, k, k);
    gate.fill_normal(rng, 0.3);
    out_map.fill_normal(rng, 0.05);
    out_map.at(0, k / 2, k / 2) += 0.5;
  }
};

struct SolverSpec {
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  int iterations = 10;  // K
  UpdateRule update = UpdateRule::plain;
  double alpha = 0.1;
  double beta = 0.9;  // momentum damping
  SolverInit init = SolverInit::obs_fill;
  LearnedUpdateParams learned;

  void validate() const {
    if (iterations < 1) throw Error("solver iteration count K must be >= 1");
    if (lambda1 < 0 || lambda2 < 0 || (lambda1 == 0 && lambda2 == 0))
      throw Error("lambda1, lambda2 must be >= 0 and not both 0");
    if (update != UpdateRule::learned && alpha <= 0) throw Error("alpha must be > 0");
  }
};

namespace detail {

inline Tensor masked(const Tensor& x, const Tensor& m) {
  Tensor out = x;
  for (size_t i = 0; i < out.size(); ++i) out.v[i] *= m.v[i];
  return out;
}

struct ConvPriorTrace {
  Tensor th;        // tanh(W1 * m)
  Tensor a3, a4;    // W3 * m, W4 * m
};

inline Tensor apply_convnet(const ConvPriorParams& p, const Tensor& xm,
                            const Tensor& ocean, ConvPriorTrace* trace) {
  const int t = xm.c, c = p.channels;
  Tensor a1(t * c, xm.h, xm.w), a3(t * c, xm.h, xm.w), a4(t * c, xm.h, xm.w);
  conv2d_acc(xm, p.w1, a1, c, 1, p.k, 1, t);
  conv2d_acc(xm, p.w3, a3, c, 1, p.k, 1, t);
  conv2d_acc(xm, p.w4, a4, c, 1, p.k, 1, t);
  for (auto& v : a1.v) v = std::tanh(v);
  Tensor inner = a1;
  for (size_t i = 0; i < inner.size(); ++i) inner.v[i] += a3.v[i] * a4.v[i];
  Tensor phi(t, xm.h, xm.w);
  conv2d_acc(inner, p.w2, phi, 1, c, p.k, 1, t);
  for (size_t i = 0; i < phi.size(); ++i) phi.v[i] *= ocean.v[i];
  if (trace) {
    trace->th = std::move(a1);
    trace->a3 = std::move(a3);
    trace->a4 = std::move(a4);
  }
  return phi;
}

}  // namespace detail

/// phi(x), land zeroed before and after.
inline Tensor apply_prior(const PriorModel& prior, const Tensor& x, const Tensor& ocean) {
  Tensor xm = detail::masked(x, ocean);
  switch (prior.kind) {
    case PriorKind::zero:
      return Tensor(x.c, x.h, x.w);
    case PriorKind::diffusion: {
      Tensor lx(x.c, x.h, x.w);
      static const Tensor kl = laplacian_kernel();
      conv2d_acc(xm, kl, lx, 1, 1, 3, 1, x.c);
      Tensor out = xm;
      for (size_t i = 0; i < out.size(); ++i)
        out.v[i] = (out.v[i] + prior.nu * lx.v[i]) * ocean.v[i];
      return out;
    }
    case PriorKind::convnet:
      return detail::apply_convnet(prior.net, xm, ocean, nullptr);
  }
  throw Error("unreachable prior kind");
}

/// U = lambda1 * sum_Omega (x - y)^2 + lambda2 * sum_ocean (x - phi(x))^2.
/// `y0` must be zero-filled at gaps; `omega` marks observed ocean pixels.
inline double cost(const Tensor& x, const Tensor& y0, const Tensor& omega,
                   const Tensor& ocean, const PriorModel& prior, double lambda1,
                   double lambda2) {
  if (!x.same_shape(y0) || !x.same_shape(omega) || !x.same_shape(ocean))
    throw ShapeMismatch("cost operand shape mismatch");
  Tensor phi = apply_prior(prior, x, ocean);
  double data = 0, reg = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double d = (x.v[i] - y0.v[i]) * omega.v[i];
    data += d * d;
    const double r = (x.v[i] - phi.v[i]) * ocean.v[i];
    reg += r * r;
  }
  return lambda1 * data + lambda2 * reg;
}

/// grad U = 2 l1 Omega(x-y) + 2 l2 (v - Dphi^T v), v = ocean (x - phi(x)).
inline Tensor grad_cost(const Tensor& x, const Tensor& y0, const Tensor& omega,
                        const Tensor& ocean, const PriorModel& prior, double lambda1,
                        double lambda2) {
  if (!x.same_shape(y0) || !x.same_shape(omega) || !x.same_shape(ocean))
    throw ShapeMismatch("grad_cost operand shape mismatch");
  const int t = x.c;
  Tensor xm = detail::masked(x, ocean);
  Tensor g(x.c, x.h, x.w);

  detail::ConvPriorTrace trace;
  Tensor phi;
  switch (prior.kind) {
    case PriorKind::zero:
      phi = Tensor(x.c, x.h, x.w);
      break;
    case PriorKind::diffusion: {
      static const Tensor kl = laplacian_kernel();
      Tensor lx(x.c, x.h, x.w);
      conv2d_acc(xm, kl, lx, 1, 1, 3, 1, t);
      phi = xm;
      for (size_t i = 0; i < phi.size(); ++i)
        phi.v[i] = (phi.v[i] + prior.nu * lx.v[i]) * ocean.v[i];
      break;
    }
    case PriorKind::convnet:
      phi = detail::apply_convnet(prior.net, xm, ocean, &trace);
      break;
  }

  Tensor v(x.c, x.h, x.w);  // masked residual x - phi(x)
  for (size_t i = 0; i < v.size(); ++i) v.v[i] = (x.v[i] - phi.v[i]) * ocean.v[i];

  Tensor jtv(x.c, x.h, x.w);  // Dphi^T v
  switch (prior.kind) {
    case PriorKind::zero:
      break;
    case PriorKind::diffusion: {
      static const Tensor kl = laplacian_kernel();
      Tensor ltv(x.c, x.h, x.w);
      conv2d_adj_data_acc(v, kl, ltv, 1, 1, 3, 1, t);
      for (size_t i = 0; i < jtv.size(); ++i)
        jtv.v[i] = (v.v[i] + prior.nu * ltv.v[i]) * ocean.v[i];
      break;
    }
    case PriorKind::convnet: {
      const auto& p = prior.net;
      const int c = p.channels;
      Tensor u(t * c, x.h, x.w);
      conv2d_adj_data_acc(v, p.w2, u, 1, c, p.k, 1, t);
      Tensor u1 = u, u3 = u, u4 = u;
      for (size_t i = 0; i < u.size(); ++i) {
        u1.v[i] *= 1.0 - trace.th.v[i] * trace.th.v[i];
        u3.v[i] *= trace.a4.v[i];
        u4.v[i] *= trace.a3.v[i];
      }
      conv2d_adj_data_acc(u1, p.w1, jtv, c, 1, p.k, 1, t);
      conv2d_adj_data_acc(u3, p.w3, jtv, c, 1, p.k, 1, t);
      conv2d_adj_data_acc(u4, p.w4, jtv, c, 1, p.k, 1, t);
      for (size_t i = 0; i < jtv.size(); ++i) jtv.v[i] *= ocean.v[i];
      break;
    }
  }

  for (size_t i = 0; i < g.size(); ++i) {
    g.v[i] = 2.0 * lambda1 * (x.v[i] - y0.v[i]) * omega.v[i] +
             2.0 * lambda2 * (v.v[i] - jtv.v[i]);
  }
  return g;
}

struct SolveResult {
  Tensor state;
  double final_cost = 0;
  std::vector<double> cost_history;
};

/// Run K update iterations of the chosen rule from the configured init.
inline SolveResult solve(const Tensor& y0, const Tensor& omega, const Tensor& ocean,
                         const PriorModel& prior, const SolverSpec& spec,
                         bool record_costs = false) {
  spec.validate();
  Tensor x(y0.c, y0.h, y0.w);
  if (spec.init == SolverInit::obs_fill)
    for (size_t i = 0; i < x.size(); ++i) x.v[i] = y0.v[i] * omega.v[i];

  SolveResult res;
  Tensor vel(x.c, x.h, x.w);
  Tensor hidden(x.c, x.h, x.w);
  const int t = x.c;
  for (int it = 0; it < spec.iterations; ++it) {
    Tensor g = grad_cost(x, y0, omega, ocean, prior, spec.lambda1, spec.lambda2);
    switch (spec.update) {
      case UpdateRule::plain:
        for (size_t i = 0; i < x.size(); ++i) x.v[i] -= spec.alpha * g.v[i];
        break;
      case UpdateRule::momentum:
        for (size_t i = 0; i < x.size(); ++i) {
          vel.v[i] = spec.beta * vel.v[i] + g.v[i];
          x.v[i] -= spec.alpha * vel.v[i];
        }
        break;
      case UpdateRule::learned: {
        const auto& lu = spec.learned;
        const double gain = lu.step_gain[it % lu.step_gain.size()];
        Tensor a = g;
        for (auto& vv : a.v) vv *= gain;
        Tensor z(x.c, x.h, x.w);
        conv2d_acc(a, lu.gate, z, 1, 1, lu.k, 1, t);
        for (auto& vv : z.v) vv = 1.0 / (1.0 + std::exp(-vv));
        for (size_t i = 0; i < hidden.size(); ++i)
          hidden.v[i] += z.v[i] * (a.v[i] - hidden.v[i]);
        Tensor u(x.c, x.h, x.w);
        conv2d_acc(hidden, lu.out_map, u, 1, 1, lu.k, 1, t);
        for (size_t i = 0; i < x.size(); ++i) x.v[i] -= u.v[i];
        break;
      }
    }
    for (size_t i = 0; i < x.size(); ++i) {
      x.v[i] *= ocean.v[i];
      if (!std::isfinite(x.v[i])) throw Diverged("non-finite state in solve", it);
    }
    if (record_costs)
      res.cost_history.push_back(
          cost(x, y0, omega, ocean, prior, spec.lambda1, spec.lambda2));
  }
  res.final_cost = cost(x, y0, omega, ocean, prior, spec.lambda1, spec.lambda2);
  res.state = std::move(x);
  return res;
}

// ---------------------------------------------------------------------------
// Tape construction for end-to-end training (differentiates through the
// K unrolled iterations, the prior and the learned update).

struct VarParamNodes {
  int w1 = -1, w2 = -1, w3 = -1, w4 = -1;  // convnet prior
  int nu = -1;                             // diffusion prior
  int lambda1 = -1, lambda2 = -1;
  std::vector<int> step_gain;
  int gate = -1, out_map = -1;
  int kl = -1;  // fixed Laplacian kernel leaf
};

inline VarParamNodes make_var_param_nodes(Tape& tape, const PriorModel& prior,
                                          const SolverSpec& spec) {
  VarParamNodes pn;
  auto scalar_leaf = [&](double v) {
    Tensor s(1, 1, 1);
    s.v[0] = v;
    return tape.leaf(s);
  };
  if (prior.kind == PriorKind::convnet) {
    pn.w1 = tape.leaf(prior.net.w1);
    pn.w2 = tape.leaf(prior.net.w2);
    pn.w3 = tape.leaf(prior.net.w3);
    pn.w4 = tape.leaf(prior.net.w4);
  }
  if (prior.kind == PriorKind::diffusion) {
    pn.nu = scalar_leaf(prior.nu);
    pn.kl = tape.leaf(laplacian_kernel());
  }
  pn.lambda1 = scalar_leaf(spec.lambda1);
  pn.lambda2 = scalar_leaf(spec.lambda2);
  if (spec.update == UpdateRule::learned) {
    for (double g : spec.learned.step_gain) pn.step_gain.push_back(scalar_leaf(g));
    pn.gate = tape.leaf(spec.learned.gate);
    pn.out_map = tape.leaf(spec.learned.out_map);
  }
  return pn;
}

/// grad_x U as a tape subgraph (so training can differentiate through it).
inline int build_grad_cost(Tape& tape, int x, const Tensor& y0, const Tensor& omega,
                           const Tensor& ocean, const PriorModel& prior,
                           const SolverSpec& spec, const VarParamNodes& pn) {
  const int t = y0.c, hh = y0.h, ww = y0.w;
  Tensor neg_y0 = y0;
  for (auto& v : neg_y0.v) v = -v;
  // data term: 2 l1 Omega (x - y)
  int d = tape.mul_const(tape.add_const(x, neg_y0), omega);
  int g_data = tape.scale_s(tape.scale_c(d, 2.0), pn.lambda1);

  int xm = tape.mul_const(x, ocean);
  int v_node;   // masked residual
  int jtv;      // Dphi^T v
  switch (prior.kind) {
    case PriorKind::zero:
      v_node = xm;
      jtv = -1;
      break;
    case PriorKind::diffusion: {
      int lx = tape.conv(xm, pn.kl, 1, 1, 3, 1, t);
      int phi = tape.mul_const(tape.add(xm, tape.scale_s(lx, pn.nu)), ocean);
      v_node = tape.mul_const(tape.sub(x, phi), ocean);
      int ltv = tape.convT(v_node, pn.kl, 1, 1, 3, t);
      jtv = tape.mul_const(tape.add(v_node, tape.scale_s(ltv, pn.nu)), ocean);
      break;
    }
    case PriorKind::convnet: {
      const int c = prior.net.channels, k = prior.net.k;
      int a1 = tape.conv(xm, pn.w1, c, 1, k, 1, t);
      int th = tape.tanh_(a1);
      int a3 = tape.conv(xm, pn.w3, c, 1, k, 1, t);
      int a4 = tape.conv(xm, pn.w4, c, 1, k, 1, t);
      int inner = tape.add(th, tape.mul(a3, a4));
      int phi = tape.mul_const(tape.conv(inner, pn.w2, 1, c, k, 1, t), ocean);
      v_node = tape.mul_const(tape.sub(x, phi), ocean);
      int u = tape.convT(v_node, pn.w2, 1, c, k, t);
      Tensor ones(t * c, hh, ww, 1.0);
      int sech2 = tape.add_const(tape.scale_c(tape.mul(th, th), -1.0), ones);
      int r1 = tape.convT(tape.mul(sech2, u), pn.w1, c, 1, k, t);
      int r3 = tape.convT(tape.mul(a4, u), pn.w3, c, 1, k, t);
      int r4 = tape.convT(tape.mul(a3, u), pn.w4, c, 1, k, t);
      jtv = tape.mul_const(tape.add(tape.add(r1, r3), r4), ocean);
      break;
    }
    default:
      throw Error("unreachable");
  }
  int g_reg = jtv < 0 ? v_node : tape.sub(v_node, jtv);
  g_reg = tape.scale_s(tape.scale_c(g_reg, 2.0), pn.lambda2);
  return tape.add(g_data, g_reg);
}

/// The unrolled solver as a tape graph; returns the final state node.
inline int build_solve_graph(Tape& tape, const Tensor& y0, const Tensor& omega,
                             const Tensor& ocean, const PriorModel& prior,
                             const SolverSpec& spec, const VarParamNodes& pn) {
  spec.validate();
  Tensor x0(y0.c, y0.h, y0.w);
  if (spec.init == SolverInit::obs_fill)
    for (size_t i = 0; i < x0.size(); ++i) x0.v[i] = y0.v[i] * omega.v[i];
  int x = tape.leaf(x0);
  int hidden = -1;
  for (int it = 0; it < spec.iterations; ++it) {
    int g = build_grad_cost(tape, x, y0, omega, ocean, prior, spec, pn);
    switch (spec.update) {
      case UpdateRule::plain:
        x = tape.sub(x, tape.scale_c(g, spec.alpha));
        break;
      case UpdateRule::momentum:
        throw Error("momentum update is not trainable; use plain or learned");
      case UpdateRule::learned: {
        int a = tape.scale_s(g, pn.step_gain[it % pn.step_gain.size()]);
        int z = tape.sigmoid_(tape.conv(a, pn.gate, 1, 1, spec.learned.k, 1, y0.c));
        if (hidden < 0)
          hidden = tape.mul(z, a);  // h0 = 0 so h1 = z * a
        else
          hidden = tape.add(hidden, tape.mul(z, tape.sub(a, hidden)));
        int u = tape.conv(hidden, pn.out_map, 1, 1, spec.learned.k, 1, y0.c);
        x = tape.sub(x, u);
        break;
      }
    }
    x = tape.mul_const(x, ocean);
  }
  return x;
}

}  // namespace gapfill
