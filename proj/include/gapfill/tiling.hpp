#pragma once

#include <algorithm>
#include <functional>
#include <vector>

#include "gapfill/field.hpp"

namespace gapfill {

struct TileLayout {
  int patch_h = 0, patch_w = 0;
  int domain_h = 0, domain_w = 0;
  std::vector<std::pair<int, int>> origins;  // (row, col), row-major sorted
};

namespace detail {
inline std::vector<int> axis_origins(int domain, int patch, int min_overlap) {
  if (patch > domain) throw PatchTooLarge("patch exceeds domain");
  if (min_overlap >= patch) throw PatchTooLarge("overlap must be < patch size");
  if (patch == domain) return {0};
  const int stride_max = patch - min_overlap;
  // smallest patch count covering the axis, then even spacing
  const int n = 1 + (domain - patch + stride_max - 1) / stride_max;
  std::vector<int> out(n);
  for (int k = 0; k < n; ++k) {
    long o = static_cast<long>(k) * (domain - patch) / (n - 1);
    out[k] = static_cast<int>(o);
  }
  return out;
}
}  // namespace detail

/// Evenly spaced overlapping patches, last one clamped to the domain edge.
inline TileLayout plan_tiles(int H, int W, int patch_h, int patch_w,
                             int min_overlap_h, int min_overlap_w) {
  TileLayout lay;
  lay.patch_h = patch_h;
  lay.patch_w = patch_w;
  lay.domain_h = H;
  lay.domain_w = W;
  auto rows = detail::axis_origins(H, patch_h, min_overlap_h);
  auto cols = detail::axis_origins(W, patch_w, min_overlap_w);
  for (int r : rows)
    for (int c : cols) lay.origins.emplace_back(r, c);
  return lay;
}

/// Average overlapping patch values; summation order is fixed (origins
/// sorted row-major) so the merge is bit-reproducible.
inline GappyField merge(const TileLayout& lay, const std::vector<GappyField>& patches,
                        const GappyField& geometry_like) {
  if (patches.size() != lay.origins.size())
    throw ShapeMismatch("patch count != layout origins");
  const int t = patches.empty() ? 0 : patches.front().t;
  GappyField out(t, lay.domain_h, lay.domain_w);
  out.lat0 = geometry_like.lat0; out.lon0 = geometry_like.lon0;
  out.dlat = geometry_like.dlat; out.dlon = geometry_like.dlon;
  out.t0 = geometry_like.t0; out.dt_days = geometry_like.dt_days;
  out.var_name = geometry_like.var_name; out.units = geometry_like.units;

  std::vector<double> sum(out.size(), 0.0);
  std::vector<int> cnt(out.size(), 0);
  for (size_t k = 0; k < lay.origins.size(); ++k) {
    const auto& [r0, c0] = lay.origins[k];
    const GappyField& p = patches[k];
    if (p.t != t || p.h != lay.patch_h || p.w != lay.patch_w)
      throw ShapeMismatch("inconsistent patch shape");
    for (int ti = 0; ti < t; ++ti)
      for (int i = 0; i < p.h; ++i)
        for (int j = 0; j < p.w; ++j) {
          if (!p.is_valid(ti, i, j)) continue;
          size_t q = out.idx(ti, r0 + i, c0 + j);
          sum[q] += p.at(ti, i, j);
          cnt[q] += 1;
        }
  }
  auto ocean = geometry_like.ocean_mask();
  const size_t frame = static_cast<size_t>(out.h) * out.w;
  for (size_t q = 0; q < out.size(); ++q) {
    if (cnt[q] > 0) {
      out.values[q] = sum[q] / cnt[q];
      out.valid[q] = 1;
    } else if (ocean[q % frame]) {
      throw CoverageGap("ocean pixel not covered by any patch");
    }
  }
  return out;
}

inline GappyField extract_patch(const GappyField& f, int r0, int c0, int ph, int pw) {
  if (r0 + ph > f.h || c0 + pw > f.w) throw ShapeMismatch("patch outside domain");
  GappyField p(f.t, ph, pw);
  p.t0 = f.t0; p.dt_days = f.dt_days;
  p.lat0 = f.lat0 + r0 * f.dlat;
  p.lon0 = f.lon0 + c0 * f.dlon;
  p.dlat = f.dlat; p.dlon = f.dlon;
  p.var_name = f.var_name; p.units = f.units;
  for (int ti = 0; ti < f.t; ++ti)
    for (int i = 0; i < ph; ++i)
      for (int j = 0; j < pw; ++j) {
        size_t src = f.idx(ti, r0 + i, c0 + j), dst = p.idx(ti, i, j);
        p.values[dst] = f.values[src];
        p.valid[dst] = f.valid[src];
      }
  return p;
}

/// Split, run `infer_patch` independently on each patch, merge by overlap
/// averaging.
inline GappyField tile_infer(
    const GappyField& y, const TileLayout& lay,
    const std::function<GappyField(const GappyField&)>& infer_patch) {
  std::vector<GappyField> results;
  results.reserve(lay.origins.size());
  for (const auto& [r0, c0] : lay.origins)
    results.push_back(infer_patch(extract_patch(y, r0, c0, lay.patch_h, lay.patch_w)));
  return merge(lay, results, y);
}

}  // namespace gapfill
