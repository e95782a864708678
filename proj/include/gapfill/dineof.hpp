#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "gapfill/field.hpp"
#include "gapfill/rng.hpp"

namespace gapfill {

struct DineofConfig {
  int max_modes = 10;
  double conv_tol = 1e-5;
  int max_iters = 200;
  double cv_fraction = 0.03;
  uint64_t seed = 0;
};

struct EofDecomposition {
  int modes = 0;
  Eigen::MatrixXd spatial;    // ocean pixels x r, orthonormal columns
  Eigen::MatrixXd amplitude;  // T x r
  Eigen::VectorXd singular;   // r, descending
  bool converged = true;
  int iterations = 0;
};

namespace detail {

struct Unfolding {
  Eigen::MatrixXd X;                 // T x P, ocean columns only
  std::vector<uint8_t> observed;     // T*P, 1 = observed entry
  std::vector<size_t> pixel_of_col;  // column -> flat pixel index (h*w)
};

inline Unfolding unfold(const GappyField& f) {
  Unfolding u;
  auto ocean = f.ocean_mask();
  const size_t frame = static_cast<size_t>(f.h) * f.w;
  for (size_t p = 0; p < frame; ++p)
    if (ocean[p]) u.pixel_of_col.push_back(p);
  const int P = static_cast<int>(u.pixel_of_col.size());
  u.X.setZero(f.t, P);
  u.observed.assign(static_cast<size_t>(f.t) * P, 0);
  for (int ti = 0; ti < f.t; ++ti)
    for (int c = 0; c < P; ++c) {
      size_t k = ti * frame + u.pixel_of_col[c];
      if (f.valid[k]) {
        u.X(ti, c) = f.values[k];
        u.observed[static_cast<size_t>(ti) * P + c] = 1;
      }
    }
  return u;
}

}  // namespace detail

/// Iterative truncated-SVD refill: missing entries start at 0 (the column
/// mean in normalized space) and are rebuilt from the rank-r truncation
/// until the relative change between outer iterations drops below tol.
/// Observed entries are never modified.
inline std::pair<GappyField, EofDecomposition> impute(const GappyField& obs, int r,
                                                      const DineofConfig& cfg) {
  if (r < 1) throw RankTooLarge("requested rank must be >= 1");
  auto u = detail::unfold(obs);
  const int T = static_cast<int>(u.X.rows()), P = static_cast<int>(u.X.cols());
  if (P == 0) throw AllMissing("no ocean pixel");
  if (r > std::min(T, P) || r > cfg.max_modes)
    throw RankTooLarge("rank exceeds min(T, ocean pixels) or max_modes");

  Eigen::MatrixXd X = u.X;
  EofDecomposition dec;
  dec.converged = false;
  Eigen::MatrixXd prev_fill;
  for (int it = 0; it < cfg.max_iters; ++it) {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
    Eigen::MatrixXd rec = svd.matrixU().leftCols(r) *
                          svd.singularValues().head(r).asDiagonal() *
                          svd.matrixV().leftCols(r).transpose();
    double delta = 0, norm = 0;
    for (int ti = 0; ti < T; ++ti)
      for (int c = 0; c < P; ++c) {
        if (u.observed[static_cast<size_t>(ti) * P + c]) continue;
        double d = rec(ti, c) - X(ti, c);
        delta += d * d;
        norm += rec(ti, c) * rec(ti, c);
        X(ti, c) = rec(ti, c);
      }
    dec.iterations = it + 1;
    dec.modes = r;
    dec.singular = svd.singularValues().head(r);
    dec.spatial = svd.matrixV().leftCols(r);
    dec.amplitude = svd.matrixU().leftCols(r) * svd.singularValues().head(r).asDiagonal();
    if (delta <= cfg.conv_tol * cfg.conv_tol * std::max(norm, 1e-30)) {
      dec.converged = true;
      break;
    }
  }

  GappyField out = obs;
  const size_t frame = static_cast<size_t>(obs.h) * obs.w;
  for (int ti = 0; ti < T; ++ti)
    for (int c = 0; c < P; ++c) {
      size_t k = ti * frame + u.pixel_of_col[c];
      if (!obs.valid[k]) {
        out.values[k] = X(ti, c);
        out.valid[k] = 1;
      }
    }
  return {out, dec};
}

struct CvResult {
  int best_r = 1;
  std::vector<double> cv_curve;  // RMSE per r = 1..max_modes
};

/// Hold out a seeded fraction of the valid pixels, impute for each
/// candidate rank, keep the rank minimizing holdout RMSE.
inline CvResult cross_validate(const GappyField& obs, const DineofConfig& cfg) {
  Rng rng(cfg.seed);
  std::vector<size_t> valid_idx;
  for (size_t k = 0; k < obs.size(); ++k)
    if (obs.valid[k]) valid_idx.push_back(k);
  size_t n_hold = static_cast<size_t>(cfg.cv_fraction * valid_idx.size());
  if (n_hold == 0 || valid_idx.size() < 8)
    throw InsufficientData("too few valid pixels for cross-validation");

  // Fisher-Yates prefix shuffle for the holdout set
  for (size_t i = 0; i < n_hold; ++i) {
    size_t j = i + rng.next_u64() % (valid_idx.size() - i);
    std::swap(valid_idx[i], valid_idx[j]);
  }
  GappyField held = obs;
  for (size_t i = 0; i < n_hold; ++i) {
    held.values[valid_idx[i]] = kMissing;
    held.valid[valid_idx[i]] = 0;
  }

  CvResult res;
  double best = std::numeric_limits<double>::infinity();
  for (int r = 1; r <= cfg.max_modes; ++r) {
    auto [rec, dec] = impute(held, r, cfg);
    double acc = 0;
    for (size_t i = 0; i < n_hold; ++i) {
      double d = rec.values[valid_idx[i]] - obs.values[valid_idx[i]];
      acc += d * d;
    }
    double rmse = std::sqrt(acc / n_hold);
    res.cv_curve.push_back(rmse);
    if (rmse < best) {
      best = rmse;
      res.best_r = r;
    }
  }
  return res;
}

}  // namespace gapfill
