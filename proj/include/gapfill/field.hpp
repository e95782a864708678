#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "gapfill/date.hpp"
#include "gapfill/errors.hpp"

namespace gapfill {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

/// T x H x W raster sequence with a validity mask. Values at invalid
/// positions hold NaN; numerical kernels consult `valid`, never NaN-test.
struct GappyField {
  int t = 0, h = 0, w = 0;
  std::vector<double> values;   // t slowest, then row, then column
  std::vector<uint8_t> valid;   // 1 = observed

  double lat0 = 0, lon0 = 0, dlat = 1, dlon = 1;
  Date t0;
  int dt_days = 1;
  std::string var_name = "var";
  std::string units = "1";

  GappyField() = default;
  GappyField(int t_, int h_, int w_)
      : t(t_), h(h_), w(w_),
        values(static_cast<size_t>(t_) * h_ * w_, kMissing),
        valid(static_cast<size_t>(t_) * h_ * w_, 0) {
    if (t_ < 1 || h_ < 1 || w_ < 1) throw BadDimensions("field dims must be >= 1");
  }

  size_t size() const { return values.size(); }
  size_t idx(int ti, int i, int j) const {
    return (static_cast<size_t>(ti) * h + i) * w + j;
  }
  double& at(int ti, int i, int j) { return values[idx(ti, i, j)]; }
  double at(int ti, int i, int j) const { return values[idx(ti, i, j)]; }
  bool is_valid(int ti, int i, int j) const { return valid[idx(ti, i, j)] != 0; }

  void set(int ti, int i, int j, double v) {
    values[idx(ti, i, j)] = v;
    valid[idx(ti, i, j)] = 1;
  }
  void clear(int ti, int i, int j) {
    values[idx(ti, i, j)] = kMissing;
    valid[idx(ti, i, j)] = 0;
  }

  Date date_of(int ti) const { return add_days(t0, static_cast<long>(ti) * dt_days); }

  size_t valid_count() const {
    size_t n = 0;
    for (uint8_t v : valid) n += v;
    return n;
  }

  /// H*W mask, 1 where the pixel is invalid at every time step.
  std::vector<uint8_t> land_mask() const {
    std::vector<uint8_t> land(static_cast<size_t>(h) * w, 1);
    for (int ti = 0; ti < t; ++ti)
      for (size_t p = 0; p < land.size(); ++p)
        if (valid[static_cast<size_t>(ti) * h * w + p]) land[p] = 0;
    return land;
  }

  /// 1 where the pixel is valid for at least one time step.
  std::vector<uint8_t> ocean_mask() const {
    auto land = land_mask();
    for (auto& v : land) v = !v;
    return land;
  }
};

enum class Transform { physical, log10 };

inline std::string to_string(Transform tr) {
  return tr == Transform::log10 ? "log10" : "physical";
}
inline Transform transform_from_string(const std::string& s) {
  if (s == "log10") return Transform::log10;
  if (s == "physical") return Transform::physical;
  throw Error("unknown transform: " + s);
}

/// Mean and population variance of the (possibly log10-transformed)
/// valid pixels; inverted exactly by denormalize.
struct NormStats {
  double m = 0;
  double sigma = 1;  // variance, > 0
  Transform space = Transform::physical;
};

inline NormStats compute_stats(const GappyField& f, Transform tr) {
  double sum = 0, sum2 = 0;
  size_t n = 0;
  for (size_t k = 0; k < f.size(); ++k) {
    if (!f.valid[k]) continue;
    double v = f.values[k];
    if (tr == Transform::log10) {
      if (!(v > 0)) throw NonPositiveValue("log10 transform requires positive values");
      v = std::log10(v);
    }
    sum += v;
    sum2 += v * v;
    ++n;
  }
  if (n == 0) throw AllMissing("no valid pixel");
  if (n < 2) throw ZeroVariance("need >= 2 valid pixels for a variance");
  const double m = sum / n;
  double sigma = sum2 / n - m * m;
  if (sigma <= 0) throw ZeroVariance("constant field");
  return NormStats{m, sigma, tr};
}

inline GappyField normalize(const GappyField& f, const NormStats& s) {
  if (!(s.sigma > 0)) throw ZeroVariance("sigma must be > 0");
  GappyField out = f;
  const double inv_sd = 1.0 / std::sqrt(s.sigma);
  for (size_t k = 0; k < out.size(); ++k) {
    if (!out.valid[k]) continue;
    double v = out.values[k];
    if (s.space == Transform::log10) {
      if (!(v > 0)) throw NonPositiveValue("log10 transform requires positive values");
      v = std::log10(v);
    }
    out.values[k] = (v - s.m) * inv_sd;
  }
  return out;
}

inline GappyField denormalize(const GappyField& f, const NormStats& s) {
  if (!(s.sigma > 0)) throw ZeroVariance("sigma must be > 0");
  GappyField out = f;
  const double sd = std::sqrt(s.sigma);
  for (size_t k = 0; k < out.size(); ++k) {
    if (!out.valid[k]) continue;
    double v = out.values[k] * sd + s.m;
    if (s.space == Transform::log10) v = std::pow(10.0, v);
    out.values[k] = v;
  }
  return out;
}

/// Contiguous sub-sequence whose dates fall inside the interval.
inline GappyField select_frames(const GappyField& f, const DateInterval& iv) {
  int first = -1, last = -1;
  for (int ti = 0; ti < f.t; ++ti) {
    if (iv.contains(f.date_of(ti))) {
      if (first < 0) first = ti;
      last = ti;
    }
  }
  if (first < 0) throw EmptySelection("interval selects no frame");
  GappyField out(last - first + 1, f.h, f.w);
  const size_t frame = static_cast<size_t>(f.h) * f.w;
  std::copy(f.values.begin() + first * frame, f.values.begin() + (last + 1) * frame,
            out.values.begin());
  std::copy(f.valid.begin() + first * frame, f.valid.begin() + (last + 1) * frame,
            out.valid.begin());
  out.lat0 = f.lat0; out.lon0 = f.lon0; out.dlat = f.dlat; out.dlon = f.dlon;
  out.t0 = f.date_of(first);
  out.dt_days = f.dt_days;
  out.var_name = f.var_name;
  out.units = f.units;
  return out;
}

}  // namespace gapfill
