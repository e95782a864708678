#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "gapfill/field.hpp"
#include "gapfill/rng.hpp"

namespace gapfill {

enum class TruthMode { lowrank, advected_blobs };

struct SyntheticTruthConfig {
  int t = 32, h = 32, w = 32;
  TruthMode mode = TruthMode::advected_blobs;
  int rank = 2;               // lowrank mode
  double vel_y = 0, vel_x = 1;  // pixels/frame, advected-blobs
  double smoothness_len = 4;  // blob radius scale, pixels
  int blob_count = 6;         // advected-blobs
  double background = 1.0;    // keeps advected-blobs strictly positive
  double amplitude = 1.0;
  int land_cols = 0;          // leftmost columns marked land
  uint64_t seed = 0;
};

struct CloudMaskConfig {
  double target_missing_fraction = 0.45;
  int blob_count_min = 1, blob_count_max = 40;
  double blob_radius_min = 2, blob_radius_max = 8;
  uint64_t seed = 0;
};

/// Deterministic synthetic ground truth, gap-free on ocean.
inline GappyField gen_truth(const SyntheticTruthConfig& cfg) {
  if (cfg.t < 1 || cfg.h < 1 || cfg.w < 1) throw BadDimensions("bad truth dims");
  if (cfg.mode == TruthMode::advected_blobs && (cfg.t < 4 || cfg.h < 8 || cfg.w < 8))
    throw BadDimensions("advected-blobs needs >= 4x8x8");
  if (cfg.mode == TruthMode::lowrank &&
      (cfg.rank < 1 || cfg.rank > std::min<long>(cfg.t, static_cast<long>(cfg.h) * cfg.w)))
    throw BadDimensions("rank out of range");

  GappyField f(cfg.t, cfg.h, cfg.w);
  f.var_name = "synthetic";
  Rng rng(cfg.seed);

  if (cfg.mode == TruthMode::lowrank) {
    std::fill(f.values.begin(), f.values.end(), 0.0);
    const size_t frame = static_cast<size_t>(cfg.h) * cfg.w;
    for (int c = 0; c < cfg.rank; ++c) {
      // smooth temporal amplitude x smooth spatial pattern
      double phase_t = rng.uniform(0, 6.28), freq_t = rng.uniform(0.5, 2.0);
      double ky = rng.uniform(0.5, 2.5), kx = rng.uniform(0.5, 2.5);
      double py = rng.uniform(0, 6.28), px = rng.uniform(0, 6.28);
      double amp = cfg.amplitude * rng.uniform(0.5, 1.5);
      for (int ti = 0; ti < cfg.t; ++ti) {
        double u = std::sin(freq_t * 6.28 * ti / cfg.t + phase_t) + 0.2 * (c + 1);
        for (int i = 0; i < cfg.h; ++i)
          for (int j = 0; j < cfg.w; ++j) {
            double v = std::sin(ky * 6.28 * i / cfg.h + py) *
                       std::cos(kx * 6.28 * j / cfg.w + px);
            f.values[ti * frame + i * static_cast<size_t>(cfg.w) + j] += amp * u * v;
          }
      }
    }
  } else {
    struct Blob { double y, x, ry, rx, amp; };
    std::vector<Blob> blobs;
    for (int b = 0; b < cfg.blob_count; ++b) {
      blobs.push_back({rng.uniform(0, cfg.h), rng.uniform(0, cfg.w),
                       cfg.smoothness_len * rng.uniform(0.7, 1.6),
                       cfg.smoothness_len * rng.uniform(0.7, 1.6),
                       cfg.amplitude * rng.uniform(0.5, 1.5)});
    }
    for (int ti = 0; ti < cfg.t; ++ti) {
      for (int i = 0; i < cfg.h; ++i)
        for (int j = 0; j < cfg.w; ++j) {
          double v = cfg.background;
          for (const auto& b : blobs) {
            // periodic wrap so blobs re-enter instead of leaving the domain
            double cy = std::fmod(b.y + cfg.vel_y * ti, (double)cfg.h);
            double cx = std::fmod(b.x + cfg.vel_x * ti, (double)cfg.w);
            if (cy < 0) cy += cfg.h;
            if (cx < 0) cx += cfg.w;
            double dy = std::abs(i - cy), dx = std::abs(j - cx);
            dy = std::min(dy, cfg.h - dy);
            dx = std::min(dx, cfg.w - dx);
            v += b.amp * std::exp(-0.5 * (dy * dy / (b.ry * b.ry) + dx * dx / (b.rx * b.rx)));
          }
          f.at(ti, i, j) = v;
        }
    }
  }

  for (size_t k = 0; k < f.size(); ++k) f.valid[k] = 1;
  for (int ti = 0; ti < cfg.t; ++ti)
    for (int i = 0; i < cfg.h; ++i)
      for (int j = 0; j < std::min(cfg.land_cols, cfg.w); ++j)
        f.clear(ti, i, j);
  return f;
}

/// One frame's removal mask (1 = removed): union of random ellipses drawn
/// until the target missing fraction over ocean is reached or the blob
/// budget runs out. Deterministic under (cfg.seed, frame_seed).
inline std::vector<uint8_t> gen_cloud_mask(int h, int w, const CloudMaskConfig& cfg,
                                           uint64_t frame_seed,
                                           const std::vector<uint8_t>* ocean = nullptr) {
  std::vector<uint8_t> mask(static_cast<size_t>(h) * w, 0);
  Rng rng(cfg.seed, frame_seed);
  size_t ocean_count = static_cast<size_t>(h) * w;
  if (ocean) {
    ocean_count = 0;
    for (uint8_t v : *ocean) ocean_count += v;
    if (ocean_count == 0) return mask;
  }

  const int n_max = std::max(cfg.blob_count_min, cfg.blob_count_max);
  const double frame_target = cfg.target_missing_fraction * rng.uniform(0.85, 1.15);
  size_t removed = 0;
  for (int b = 0; b < n_max; ++b) {
    if (b >= cfg.blob_count_min &&
        static_cast<double>(removed) / ocean_count >= frame_target)
      break;
    double cy = rng.uniform(0, h), cx = rng.uniform(0, w);
    double ry = rng.uniform(cfg.blob_radius_min, cfg.blob_radius_max);
    double rx = rng.uniform(cfg.blob_radius_min, cfg.blob_radius_max);
    double theta = rng.uniform(0, 3.14159265);
    double c = std::cos(theta), s = std::sin(theta);
    int i0 = std::max(0, (int)std::floor(cy - std::max(ry, rx) - 1));
    int i1 = std::min(h - 1, (int)std::ceil(cy + std::max(ry, rx) + 1));
    int j0 = std::max(0, (int)std::floor(cx - std::max(ry, rx) - 1));
    int j1 = std::min(w - 1, (int)std::ceil(cx + std::max(ry, rx) + 1));
    for (int i = i0; i <= i1; ++i)
      for (int j = j0; j <= j1; ++j) {
        double dy = i - cy, dx = j - cx;
        double u = c * dy + s * dx, v = -s * dy + c * dx;
        if (u * u / (ry * ry) + v * v / (rx * rx) > 1.0) continue;
        size_t p = static_cast<size_t>(i) * w + j;
        if (ocean && !(*ocean)[p]) continue;
        if (!mask[p]) {
          mask[p] = 1;
          ++removed;
        }
      }
  }
  return mask;
}

/// T x H x W removal mask, one fresh cloud pattern per frame.
inline std::vector<uint8_t> gen_cloud_mask_seq(int t, int h, int w,
                                               const CloudMaskConfig& cfg,
                                               uint64_t base_frame_seed = 0,
                                               const std::vector<uint8_t>* ocean = nullptr) {
  std::vector<uint8_t> mask(static_cast<size_t>(t) * h * w);
  for (int ti = 0; ti < t; ++ti) {
    auto fm = gen_cloud_mask(h, w, cfg, base_frame_seed + static_cast<uint64_t>(ti), ocean);
    std::copy(fm.begin(), fm.end(), mask.begin() + static_cast<size_t>(ti) * h * w);
  }
  return mask;
}

/// Hide the pixels flagged in `mask` (1 = remove). Never creates validity.
inline GappyField apply_mask(const GappyField& f, const std::vector<uint8_t>& mask) {
  if (mask.size() != f.size()) throw ShapeMismatch("mask shape != field shape");
  GappyField out = f;
  for (size_t k = 0; k < out.size(); ++k) {
    if (mask[k]) {
      out.values[k] = kMissing;
      out.valid[k] = 0;
    }
  }
  return out;
}

inline double missing_fraction_on_ocean(const GappyField& f) {
  auto ocean = f.ocean_mask();
  const size_t frame = static_cast<size_t>(f.h) * f.w;
  size_t n_ocean = 0, n_missing = 0;
  for (size_t p = 0; p < frame; ++p) {
    if (!ocean[p]) continue;
    for (int ti = 0; ti < f.t; ++ti) {
      ++n_ocean;
      if (!f.valid[ti * frame + p]) ++n_missing;
    }
  }
  return n_ocean ? static_cast<double>(n_missing) / n_ocean : 0.0;
}

}  // namespace gapfill
