#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "gapfill/direct_net.hpp"
#include "gapfill/field.hpp"
#include "gapfill/sim.hpp"
#include "gapfill/var.hpp"

namespace gapfill {

struct TrainConfig {
  int epochs = 10;
  int batch = 4;
  int window = 5;            // T_w
  int windows_per_epoch = 32;
  double lr = 1e-3;
  uint64_t seed = 0;
};

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> valid_loss;
};

/// Either a whole tensor or a single scalar hyperparameter.
struct ParamRef {
  Tensor* tensor = nullptr;
  double* scalar = nullptr;

  size_t size() const { return tensor ? tensor->size() : 1; }
  double get(size_t i) const { return tensor ? tensor->v[i] : *scalar; }
  void set(size_t i, double v) const {
    if (tensor) tensor->v[i] = v; else *scalar = v;
  }
};

class Adam {
 public:
  explicit Adam(double lr) : lr_(lr) {}

  void attach(ParamRef p) {
    params_.push_back(p);
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }

  size_t count() const { return params_.size(); }
  const ParamRef& param(size_t i) const { return params_[i]; }

  /// grads[i] must match params_[i] in length.
  void step(const std::vector<std::vector<double>>& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(0.9, t_), c2 = 1.0 - std::pow(0.999, t_);
    for (size_t p = 0; p < params_.size(); ++p) {
      for (size_t i = 0; i < params_[p].size(); ++i) {
        const double g = grads[p][i];
        m_[p][i] = 0.9 * m_[p][i] + 0.1 * g;
        v_[p][i] = 0.999 * v_[p][i] + 0.001 * g * g;
        const double mh = m_[p][i] / c1, vh = v_[p][i] / c2;
        params_[p].set(i, params_[p].get(i) - lr_ * mh / (std::sqrt(vh) + 1e-8));
      }
    }
  }

 private:
  double lr_;
  int t_ = 0;
  std::vector<ParamRef> params_;
  std::vector<std::vector<double>> m_, v_;
};

namespace detail {

struct Window {
  Tensor values;  // zero-filled at gaps
  Tensor mask;    // 1 = valid
};

inline Window extract_window(const GappyField& f, int t_start, int t_w) {
  Window win{Tensor(t_w, f.h, f.w), Tensor(t_w, f.h, f.w)};
  for (int ti = 0; ti < t_w; ++ti)
    for (int i = 0; i < f.h; ++i)
      for (int j = 0; j < f.w; ++j) {
        size_t k = f.idx(t_start + ti, i, j);
        if (f.valid[k]) {
          win.values.at(ti, i, j) = f.values[k];
          win.mask.at(ti, i, j) = 1.0;
        }
      }
  return win;
}

inline Tensor replicate_plane(const std::vector<uint8_t>& plane, int t, int h, int w) {
  Tensor out(t, h, w);
  for (int ti = 0; ti < t; ++ti)
    for (size_t p = 0; p < plane.size(); ++p)
      out.v[static_cast<size_t>(ti) * plane.size() + p] = plane[p] ? 1.0 : 0.0;
  return out;
}

/// Hide cloud pixels in a window (fresh mask per frame).
inline Window clouded(const Window& target, const CloudMaskConfig& cloud,
                      uint64_t frame_seed_base, const std::vector<uint8_t>& ocean) {
  Window obs = target;
  const int t = target.values.c, h = target.values.h, w = target.values.w;
  for (int ti = 0; ti < t; ++ti) {
    auto m = gen_cloud_mask(h, w, cloud, frame_seed_base + static_cast<uint64_t>(ti), &ocean);
    for (size_t p = 0; p < m.size(); ++p) {
      if (m[p]) {
        size_t k = static_cast<size_t>(ti) * m.size() + p;
        obs.values.v[k] = 0.0;
        obs.mask.v[k] = 0.0;
      }
    }
  }
  return obs;
}

/// Masked MSE node: mean over target-visible pixels of (x - target)^2.
inline int masked_mse(Tape& tape, int x, const Window& target) {
  Tensor neg = target.values;
  for (auto& v : neg.v) v = -v;
  double n = std::accumulate(target.mask.v.begin(), target.mask.v.end(), 0.0);
  int d = tape.mul_const(tape.add_const(x, neg), target.mask);
  return tape.scale_c(tape.sum_sq(d), 1.0 / std::max(n, 1.0));
}

}  // namespace detail

struct VarTrainable {
  PriorModel* prior;
  SolverSpec* spec;

  void attach(Adam& opt) const {
    if (prior->kind == PriorKind::convnet) {
      opt.attach({&prior->net.w1, nullptr});
      opt.attach({&prior->net.w2, nullptr});
      opt.attach({&prior->net.w3, nullptr});
      opt.attach({&prior->net.w4, nullptr});
    }
    if (prior->kind == PriorKind::diffusion) opt.attach({nullptr, &prior->nu});
    if (spec->update == UpdateRule::learned) {
      opt.attach({nullptr, &spec->lambda1});
      opt.attach({nullptr, &spec->lambda2});
      for (auto& g : spec->learned.step_gain) opt.attach({nullptr, &g});
      opt.attach({&spec->learned.gate, nullptr});
      opt.attach({&spec->learned.out_map, nullptr});
    }
  }

  /// Grad slots in the same order as attach().
  std::vector<std::vector<double>> collect(const Tape& tape,
                                           const VarParamNodes& pn) const {
    std::vector<std::vector<double>> out;
    auto push = [&](int node) { out.push_back(tape.grad(node).v); };
    if (prior->kind == PriorKind::convnet) {
      push(pn.w1); push(pn.w2); push(pn.w3); push(pn.w4);
    }
    if (prior->kind == PriorKind::diffusion) push(pn.nu);
    if (spec->update == UpdateRule::learned) {
      push(pn.lambda1);
      push(pn.lambda2);
      for (int g : pn.step_gain) push(g);
      push(pn.gate);
      push(pn.out_map);
    }
    return out;
  }
};

inline double var_window_loss(const detail::Window& obs, const detail::Window& target,
                              const Tensor& ocean, const PriorModel& prior,
                              const SolverSpec& spec) {
  auto res = solve(obs.values, obs.mask, ocean, prior, spec);
  double acc = 0, n = 0;
  for (size_t i = 0; i < res.state.size(); ++i) {
    if (target.mask.v[i] == 0) continue;
    const double d = res.state.v[i] - target.values.v[i];
    acc += d * d;
    n += 1;
  }
  return n > 0 ? acc / n : 0.0;
}

/// End-to-end training of prior + solver on a normalized dataset with
/// online cloud masking; loss sees only target-visible pixels.
inline TrainHistory train_variational(const GappyField& train_ds,
                                      const GappyField& valid_ds,
                                      const CloudMaskConfig& cloud, PriorModel& prior,
                                      SolverSpec& spec, const TrainConfig& tcfg) {
  spec.validate();
  if (tcfg.window > train_ds.t) throw Error("window exceeds dataset length");
  TrainHistory hist;
  if (tcfg.epochs == 0) return hist;

  auto ocean_plane = train_ds.ocean_mask();
  Tensor ocean = detail::replicate_plane(ocean_plane, tcfg.window, train_ds.h, train_ds.w);
  auto vocean_plane = valid_ds.ocean_mask();
  Tensor vocean = detail::replicate_plane(vocean_plane, tcfg.window, valid_ds.h, valid_ds.w);

  Adam opt(tcfg.lr);
  VarTrainable reg{&prior, &spec};
  reg.attach(opt);

  Rng rng(tcfg.seed);
  uint64_t mask_counter = 1;

  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    double epoch_loss = 0;
    int n_steps = 0;
    const int n_windows = std::min(tcfg.windows_per_epoch, train_ds.t - tcfg.window + 1);
    for (int step = 0; step < (n_windows + tcfg.batch - 1) / tcfg.batch; ++step) {
      std::vector<std::vector<double>> acc;
      double batch_loss = 0;
      int in_batch = 0;
      for (int b = 0; b < tcfg.batch && step * tcfg.batch + b < n_windows; ++b) {
        const int t0 = rng.uniform_int(0, train_ds.t - tcfg.window);
        auto target = detail::extract_window(train_ds, t0, tcfg.window);
        auto obs = detail::clouded(target, cloud, mask_counter, ocean_plane);
        mask_counter += tcfg.window;

        Tape tape;
        auto pn = make_var_param_nodes(tape, prior, spec);
        int x = build_solve_graph(tape, obs.values, obs.mask, ocean, prior, spec, pn);
        int loss = detail::masked_mse(tape, x, target);
        tape.backward(loss);
        batch_loss += tape.scalar(loss);
        auto g = reg.collect(tape, pn);
        if (acc.empty()) acc = std::move(g);
        else
          for (size_t p = 0; p < acc.size(); ++p)
            for (size_t i = 0; i < acc[p].size(); ++i) acc[p][i] += g[p][i];
        ++in_batch;
      }
      if (in_batch == 0) continue;
      for (auto& gp : acc)
        for (auto& v : gp) v /= in_batch;
      opt.step(acc);
      epoch_loss += batch_loss / in_batch;
      ++n_steps;
    }
    hist.train_loss.push_back(epoch_loss / std::max(n_steps, 1));

    // validation: fixed seeded masks, stride-T_w windows
    double vloss = 0;
    int vn = 0;
    for (int t0 = 0; t0 + tcfg.window <= valid_ds.t; t0 += tcfg.window) {
      auto target = detail::extract_window(valid_ds, t0, tcfg.window);
      auto obs = detail::clouded(target, cloud, 900000000ull + t0, vocean_plane);
      vloss += var_window_loss(obs, target, vocean, prior, spec);
      ++vn;
    }
    hist.valid_loss.push_back(vn ? vloss / vn : 0.0);
  }
  return hist;
}

inline double direct_window_loss(const DirectNetParams& net, const detail::Window& obs,
                                 const detail::Window& target) {
  Tensor input(2 * obs.values.c, obs.values.h, obs.values.w);
  std::copy(obs.values.v.begin(), obs.values.v.end(), input.v.begin());
  std::copy(obs.mask.v.begin(), obs.mask.v.end(), input.v.begin() + obs.values.size());
  Tensor pred = direct_forward(net, input);
  double acc = 0, n = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    if (target.mask.v[i] == 0) continue;
    const double d = pred.v[i] - target.values.v[i];
    acc += d * d;
    n += 1;
  }
  return n > 0 ? acc / n : 0.0;
}

/// Same contract as train_variational with the direct interpolator.
inline TrainHistory train_direct(const GappyField& train_ds, const GappyField& valid_ds,
                                 const CloudMaskConfig& cloud, DirectNetParams& net,
                                 const TrainConfig& tcfg) {
  if (tcfg.window != net.cfg.window) throw Error("window must match net config");
  TrainHistory hist;
  if (tcfg.epochs == 0) return hist;

  auto ocean_plane = train_ds.ocean_mask();
  auto vocean_plane = valid_ds.ocean_mask();

  Adam opt(tcfg.lr);
  Tensor* tensors[] = {&net.enc,     &net.down,    &net.bott_a, &net.bott_b1,
                       &net.bott_b2, &net.merge,   &net.out};
  for (Tensor* t : tensors) opt.attach({t, nullptr});

  Rng rng(tcfg.seed);
  uint64_t mask_counter = 1;

  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    double epoch_loss = 0;
    int n_steps = 0;
    const int n_windows = std::min(tcfg.windows_per_epoch, train_ds.t - tcfg.window + 1);
    for (int step = 0; step < (n_windows + tcfg.batch - 1) / tcfg.batch; ++step) {
      std::vector<std::vector<double>> acc;
      double batch_loss = 0;
      int in_batch = 0;
      for (int b = 0; b < tcfg.batch && step * tcfg.batch + b < n_windows; ++b) {
        const int t0 = rng.uniform_int(0, train_ds.t - tcfg.window);
        auto target = detail::extract_window(train_ds, t0, tcfg.window);
        auto obs = detail::clouded(target, cloud, mask_counter, ocean_plane);
        mask_counter += tcfg.window;

        Tensor input(2 * tcfg.window, train_ds.h, train_ds.w);
        std::copy(obs.values.v.begin(), obs.values.v.end(), input.v.begin());
        std::copy(obs.mask.v.begin(), obs.mask.v.end(),
                  input.v.begin() + obs.values.size());

        Tape tape;
        auto pn = make_direct_param_nodes(tape, net);
        int pred = build_direct_forward(tape, input, net, pn);
        int loss = detail::masked_mse(tape, pred, target);
        tape.backward(loss);
        batch_loss += tape.scalar(loss);

        int nodes[] = {pn.enc,     pn.down,  pn.bott_a, pn.bott_b1,
                       pn.bott_b2, pn.merge, pn.out};
        if (acc.empty())
          for (int nd : nodes) acc.push_back(tape.grad(nd).v);
        else {
          int pi = 0;
          for (int nd : nodes) {
            const auto& g = tape.grad(nd).v;
            for (size_t i = 0; i < g.size(); ++i) acc[pi][i] += g[i];
            ++pi;
          }
        }
        ++in_batch;
      }
      if (in_batch == 0) continue;
      for (auto& gp : acc)
        for (auto& v : gp) v /= in_batch;
      opt.step(acc);
      epoch_loss += batch_loss / in_batch;
      ++n_steps;
    }
    hist.train_loss.push_back(epoch_loss / std::max(n_steps, 1));

    double vloss = 0;
    int vn = 0;
    for (int t0 = 0; t0 + tcfg.window <= valid_ds.t; t0 += tcfg.window) {
      auto target = detail::extract_window(valid_ds, t0, tcfg.window);
      auto obs = detail::clouded(target, cloud, 7777000 + t0, vocean_plane);
      vloss += direct_window_loss(net, obs, target);
      ++vn;
    }
    hist.valid_loss.push_back(vn ? vloss / vn : 0.0);
  }
  return hist;
}

// ---------------------------------------------------------------------------
// Inference

/// Variational reconstruction of a normalized sequence; gap-free on ocean.
inline GappyField infer_variational_normalized(const GappyField& y_norm,
                                               const PriorModel& prior,
                                               const SolverSpec& spec) {
  auto ocean_plane = y_norm.ocean_mask();
  Tensor ocean = detail::replicate_plane(ocean_plane, y_norm.t, y_norm.h, y_norm.w);
  auto win = detail::extract_window(y_norm, 0, y_norm.t);
  auto res = solve(win.values, win.mask, ocean, prior, spec);

  GappyField out = y_norm;
  const size_t frame = static_cast<size_t>(y_norm.h) * y_norm.w;
  for (int ti = 0; ti < y_norm.t; ++ti)
    for (size_t p = 0; p < frame; ++p) {
      size_t k = ti * frame + p;
      if (ocean_plane[p]) {
        out.values[k] = res.state.v[k];
        out.valid[k] = 1;
      } else {
        out.values[k] = kMissing;
        out.valid[k] = 0;
      }
    }
  return out;
}

/// Direct-net reconstruction; windows of T_w at stride T_w, last window
/// clamped, overlap averaged.
inline GappyField infer_direct_normalized(const GappyField& y_norm,
                                          const DirectNetParams& net) {
  const int t_w = net.cfg.window;
  if (y_norm.t < t_w) throw Error("sequence shorter than the net window");
  auto ocean_plane = y_norm.ocean_mask();

  std::vector<double> sum(y_norm.size(), 0.0);
  std::vector<int> cnt(y_norm.size(), 0);
  std::vector<int> starts;
  for (int t0 = 0; t0 + t_w <= y_norm.t; t0 += t_w) starts.push_back(t0);
  if (starts.back() + t_w < y_norm.t) starts.push_back(y_norm.t - t_w);

  const size_t frame = static_cast<size_t>(y_norm.h) * y_norm.w;
  for (int t0 : starts) {
    auto win = detail::extract_window(y_norm, t0, t_w);
    Tensor input(2 * t_w, y_norm.h, y_norm.w);
    std::copy(win.values.v.begin(), win.values.v.end(), input.v.begin());
    std::copy(win.mask.v.begin(), win.mask.v.end(), input.v.begin() + win.values.size());
    Tensor pred = direct_forward(net, input);
    for (int ti = 0; ti < t_w; ++ti)
      for (size_t p = 0; p < frame; ++p) {
        sum[(t0 + ti) * frame + p] += pred.v[ti * frame + p];
        cnt[(t0 + ti) * frame + p] += 1;
      }
  }

  GappyField out = y_norm;
  for (int ti = 0; ti < y_norm.t; ++ti)
    for (size_t p = 0; p < frame; ++p) {
      size_t k = ti * frame + p;
      if (ocean_plane[p]) {
        out.values[k] = sum[k] / cnt[k];
        out.valid[k] = 1;
      } else {
        out.values[k] = kMissing;
        out.valid[k] = 0;
      }
    }
  return out;
}

/// Normalized-input sanity guard used by the physical-space entry point.
inline bool looks_unnormalized(const GappyField& y_norm) {
  double sum = 0;
  size_t n = 0;
  for (size_t k = 0; k < y_norm.size(); ++k)
    if (y_norm.valid[k]) { sum += y_norm.values[k]; ++n; }
  return n > 0 && std::abs(sum / n) > 5.0;
}

}  // namespace gapfill
