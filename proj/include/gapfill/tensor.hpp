#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

#include "gapfill/errors.hpp"
#include "gapfill/rng.hpp"

namespace gapfill {

/// Dense C x H x W array of doubles. Convolution weights use the same
/// container with c = c_out*c_in, h = w = k.
struct Tensor {
  int c = 0, h = 0, w = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(int c_, int h_, int w_, double fill = 0.0)
      : c(c_), h(h_), w(w_), v(static_cast<size_t>(c_) * h_ * w_, fill) {}

  size_t size() const { return v.size(); }
  double& at(int ci, int i, int j) {
    return v[(static_cast<size_t>(ci) * h + i) * w + j];
  }
  double at(int ci, int i, int j) const {
    return v[(static_cast<size_t>(ci) * h + i) * w + j];
  }
  bool same_shape(const Tensor& o) const { return c == o.c && h == o.h && w == o.w; }

  void fill_normal(Rng& rng, double stddev) {
    for (auto& x : v) x = stddev * rng.normal();
  }
};

namespace detail {
// reflect-101 style index fold: -1 -> 1, n -> n-2
inline int reflect(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}
}  // namespace detail

/// y += conv(x, wgt): grouped 2D correlation, reflect padding, odd k.
/// wgt holds groups-shared (co, ci, k, k); input has groups*ci channels.
inline void conv2d_acc(const Tensor& x, const Tensor& wgt, Tensor& y, int co, int ci,
                       int k, int stride = 1, int groups = 1) {
  const int p = k / 2;
  const int oh = y.h, ow = y.w;
  for (int g = 0; g < groups; ++g)
    for (int q = 0; q < co; ++q)
      for (int cc = 0; cc < ci; ++cc) {
        const double* wk = &wgt.v[(static_cast<size_t>(q) * ci + cc) * k * k];
        for (int oy = 0; oy < oh; ++oy)
          for (int ox = 0; ox < ow; ++ox) {
            double acc = 0;
            for (int dy = 0; dy < k; ++dy) {
              const int iy = detail::reflect(oy * stride + dy - p, x.h);
              for (int dx = 0; dx < k; ++dx) {
                const int ix = detail::reflect(ox * stride + dx - p, x.w);
                acc += wk[dy * k + dx] * x.at(g * ci + cc, iy, ix);
              }
            }
            y.at(g * co + q, oy, ox) += acc;
          }
      }
}

/// dx += adjoint of conv2d applied to gy (scatter form; reflect padding's
/// adjoint falls out of the index fold).
inline void conv2d_adj_data_acc(const Tensor& gy, const Tensor& wgt, Tensor& dx, int co,
                                int ci, int k, int stride = 1, int groups = 1) {
  const int p = k / 2;
  for (int g = 0; g < groups; ++g)
    for (int q = 0; q < co; ++q)
      for (int cc = 0; cc < ci; ++cc) {
        const double* wk = &wgt.v[(static_cast<size_t>(q) * ci + cc) * k * k];
        for (int oy = 0; oy < gy.h; ++oy)
          for (int ox = 0; ox < gy.w; ++ox) {
            const double gv = gy.at(g * co + q, oy, ox);
            if (gv == 0) continue;
            for (int dy = 0; dy < k; ++dy) {
              const int iy = detail::reflect(oy * stride + dy - p, dx.h);
              for (int dx_ = 0; dx_ < k; ++dx_) {
                const int ix = detail::reflect(ox * stride + dx_ - p, dx.w);
                dx.at(g * ci + cc, iy, ix) += wk[dy * k + dx_] * gv;
              }
            }
          }
      }
}

/// dw += weight gradient of conv2d (summed over groups — weights shared).
inline void conv2d_adj_weight_acc(const Tensor& x, const Tensor& gy, Tensor& dw, int co,
                                  int ci, int k, int stride = 1, int groups = 1) {
  const int p = k / 2;
  for (int g = 0; g < groups; ++g)
    for (int q = 0; q < co; ++q)
      for (int cc = 0; cc < ci; ++cc) {
        double* wk = &dw.v[(static_cast<size_t>(q) * ci + cc) * k * k];
        for (int oy = 0; oy < gy.h; ++oy)
          for (int ox = 0; ox < gy.w; ++ox) {
            const double gv = gy.at(g * co + q, oy, ox);
            if (gv == 0) continue;
            for (int dy = 0; dy < k; ++dy) {
              const int iy = detail::reflect(oy * stride + dy - p, x.h);
              for (int dx_ = 0; dx_ < k; ++dx_) {
                const int ix = detail::reflect(ox * stride + dx_ - p, x.w);
                wk[dy * k + dx_] += gv * x.at(g * ci + cc, iy, ix);
              }
            }
          }
      }
}

}  // namespace gapfill
