#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "gapfill/field.hpp"

namespace gapfill {

/// Pixels to score: visible in the target, hidden in the observation.
inline std::vector<uint8_t> eval_mask(const GappyField& target, const GappyField& obs) {
  if (target.size() != obs.size()) throw ShapeMismatch("target/obs shape mismatch");
  std::vector<uint8_t> m(target.size());
  for (size_t k = 0; k < m.size(); ++k) m[k] = target.valid[k] && !obs.valid[k];
  return m;
}

inline double rmsle(const GappyField& pred, const GappyField& target,
                    const std::vector<uint8_t>& mask) {
  if (pred.size() != target.size() || mask.size() != pred.size())
    throw ShapeMismatch("rmsle shape mismatch");
  double acc = 0;
  size_t n = 0;
  for (size_t k = 0; k < mask.size(); ++k) {
    if (!mask[k]) continue;
    if (!(pred.values[k] > 0) || !(target.values[k] > 0))
      throw NonPositiveValue("rmsle needs positive values on the eval mask");
    double d = std::log10(pred.values[k]) - std::log10(target.values[k]);
    acc += d * d;
    ++n;
  }
  if (n == 0) throw EmptyMask("empty eval mask");
  return std::sqrt(acc / n);
}

inline double relative_error(const GappyField& pred, const GappyField& target,
                             const std::vector<uint8_t>& mask) {
  if (pred.size() != target.size() || mask.size() != pred.size())
    throw ShapeMismatch("relative_error shape mismatch");
  double acc = 0;
  size_t n = 0;
  for (size_t k = 0; k < mask.size(); ++k) {
    if (!mask[k]) continue;
    if (target.values[k] == 0) throw ZeroTarget("zero target on eval mask");
    acc += std::abs(target.values[k] - pred.values[k]) / std::abs(target.values[k]);
    ++n;
  }
  if (n == 0) throw EmptyMask("empty eval mask");
  return 100.0 * acc / n;
}

struct FrameMetrics {
  int frame;
  Date date;
  double rmsle;
  double re_percent;
  size_t n_eval;
};

struct MetricsReport {
  double rmsle = 0;
  double re_percent = 0;
  size_t n_eval = 0;
  std::vector<FrameMetrics> per_frame;
};

/// Score `pred` against the target on hidden-but-known pixels, in
/// physical space.
inline MetricsReport evaluate(const GappyField& pred, const GappyField& target,
                              const GappyField& obs) {
  auto mask = eval_mask(target, obs);
  MetricsReport rep;
  rep.rmsle = rmsle(pred, target, mask);
  rep.re_percent = relative_error(pred, target, mask);
  for (uint8_t b : mask) rep.n_eval += b;

  const size_t frame = static_cast<size_t>(target.h) * target.w;
  for (int ti = 0; ti < target.t; ++ti) {
    size_t n = 0;
    for (size_t p = 0; p < frame; ++p) n += mask[ti * frame + p];
    if (n == 0) continue;
    std::vector<uint8_t> fm(mask.size(), 0);
    std::copy(mask.begin() + ti * frame, mask.begin() + (ti + 1) * frame,
              fm.begin() + ti * frame);
    rep.per_frame.push_back({ti, target.date_of(ti), rmsle(pred, target, fm),
                             relative_error(pred, target, fm), n});
  }
  return rep;
}

/// Per-pixel mean over the frames of one calendar month; pixels with no
/// valid frame stay invalid.
inline GappyField monthly_mean(const GappyField& f, int year, int month) {
  std::vector<int> frames;
  for (int ti = 0; ti < f.t; ++ti) {
    Date d = f.date_of(ti);
    if (d.year == year && d.month == month) frames.push_back(ti);
  }
  if (frames.empty()) throw EmptySelection("month outside the time axis");

  GappyField out(1, f.h, f.w);
  out.lat0 = f.lat0; out.lon0 = f.lon0; out.dlat = f.dlat; out.dlon = f.dlon;
  out.t0 = Date{year, month, 1};
  out.dt_days = f.dt_days;
  out.var_name = f.var_name;
  out.units = f.units;
  const size_t frame = static_cast<size_t>(f.h) * f.w;
  for (size_t p = 0; p < frame; ++p) {
    double sum = 0;
    int n = 0;
    for (int ti : frames) {
      if (f.valid[ti * frame + p]) {
        sum += f.values[ti * frame + p];
        ++n;
      }
    }
    if (n > 0) {
      out.values[p] = sum / n;
      out.valid[p] = 1;
    }
  }
  return out;
}

/// |log10 pred - log10 target| on the mask of one frame, written as a P5
/// PGM plus a CSV of raw values and a sidecar recording the scaling.
inline void emit_error_map(const GappyField& pred, const GappyField& target,
                           const std::vector<uint8_t>& mask, int frame,
                           const std::string& path_prefix) {
  const size_t fsz = static_cast<size_t>(target.h) * target.w;
  const size_t off = static_cast<size_t>(frame) * fsz;
  std::vector<double> err(fsz, -1.0);
  double lo = 1e300, hi = -1e300;
  for (size_t p = 0; p < fsz; ++p) {
    if (!mask[off + p]) continue;
    if (!(pred.values[off + p] > 0) || !(target.values[off + p] > 0))
      throw NonPositiveValue("error map needs positive values");
    double e = std::abs(std::log10(pred.values[off + p]) -
                        std::log10(target.values[off + p]));
    err[p] = e;
    lo = std::min(lo, e);
    hi = std::max(hi, e);
  }
  if (hi < lo) throw EmptyMask("no masked pixel in frame");

  std::ofstream pgm(path_prefix + ".pgm", std::ios::binary);
  if (!pgm) throw IoError("cannot write " + path_prefix + ".pgm");
  pgm << "P5\n" << target.w << " " << target.h << "\n255\n";
  const double span = hi > lo ? hi - lo : 1.0;
  for (size_t p = 0; p < fsz; ++p) {
    unsigned char px = 0;
    if (err[p] >= 0) px = static_cast<unsigned char>(255.0 * (err[p] - lo) / span);
    pgm.put(static_cast<char>(px));
  }

  std::ofstream csv(path_prefix + ".csv");
  csv << "row,col,abs_log10_error\n";
  for (int i = 0; i < target.h; ++i)
    for (int j = 0; j < target.w; ++j) {
      size_t p = static_cast<size_t>(i) * target.w + j;
      if (err[p] >= 0) csv << i << "," << j << "," << err[p] << "\n";
    }

  std::ofstream meta(path_prefix + ".scale.txt");
  meta << "min=" << lo << "\nmax=" << hi << "\n";
}

}  // namespace gapfill
