#pragma once

#include <cmath>

#include "gapfill/tape.hpp"
#include "gapfill/tensor.hpp"

namespace gapfill {

/// One-level encoder-decoder: downsample and upsample once by a factor of
/// 2, skip connection, bilinear residual bottleneck h + A(h) + B1(h)*B2(h).
/// Input is a T_w-frame window with the validity masks appended as extra
/// channels; gaps come in zero-filled (normalized space).
struct DirectNetConfig {
  int window = 5;      // T_w
  int hidden = 16;     // 128 in the full-size configuration
  int k = 3;
  uint64_t seed = 0;
};

struct DirectNetParams {
  DirectNetConfig cfg;
  Tensor enc;      // (hidden, 2*T_w, k, k)
  Tensor down;     // (hidden, hidden, k, k), stride 2
  Tensor bott_a;   // (hidden, hidden, k, k)
  Tensor bott_b1;  // (hidden, hidden, k, k)
  Tensor bott_b2;  // (hidden, hidden, k, k)
  Tensor merge;    // (hidden, 2*hidden, 1, 1), after the skip concat
  Tensor out;      // (T_w, hidden, k, k), zero-initialized

  void init(const DirectNetConfig& c) {
    cfg = c;
    Rng rng(c.seed);
    const int hd = c.hidden, in_ch = 2 * c.window, k = c.k;
    auto he = [&](Tensor& t, int co, int ci, int kk) {
      t = Tensor(co * ci, kk, kk);
      t.fill_normal(rng, std::sqrt(2.0 / (ci * kk * kk)));
    };
    he(enc, hd, in_ch, k);
    he(down, hd, hd, k);
    he(bott_a, hd, hd, k);
    he(bott_b1, hd, hd, k);
    he(bott_b2, hd, hd, k);
    he(merge, hd, 2 * hd, 1);
    out = Tensor(c.window * hd, k, k);  // zero: the net starts at the mean state
  }

  size_t param_count() const {
    return enc.size() + down.size() + bott_a.size() + bott_b1.size() +
           bott_b2.size() + merge.size() + out.size();
  }
};

struct DirectParamNodes {
  int enc, down, bott_a, bott_b1, bott_b2, merge, out;
};

inline DirectParamNodes make_direct_param_nodes(Tape& tape, const DirectNetParams& p) {
  return {tape.leaf(p.enc),    tape.leaf(p.down),    tape.leaf(p.bott_a),
          tape.leaf(p.bott_b1), tape.leaf(p.bott_b2), tape.leaf(p.merge),
          tape.leaf(p.out)};
}

/// Forward pass as a tape graph. `input` has 2*T_w channels (values then
/// masks); H and W must be even for the x2 down/up path.
inline int build_direct_forward(Tape& tape, const Tensor& input,
                                const DirectNetParams& p, const DirectParamNodes& pn) {
  if (input.h % 2 != 0 || input.w % 2 != 0)
    throw OddDimensions("direct net needs even H and W");
  if (input.c != 2 * p.cfg.window) throw ShapeMismatch("expected 2*T_w input channels");
  const int hd = p.cfg.hidden, k = p.cfg.k;
  int in = tape.leaf(input);
  int e = tape.tanh_(tape.conv(in, pn.enc, hd, 2 * p.cfg.window, k));
  int d = tape.tanh_(tape.conv(e, pn.down, hd, hd, k, 2));
  int b = tape.add(d, tape.add(tape.conv(d, pn.bott_a, hd, hd, k),
                               tape.mul(tape.conv(d, pn.bott_b1, hd, hd, k),
                                        tape.conv(d, pn.bott_b2, hd, hd, k))));
  int up = tape.upsample2(b);
  int m = tape.tanh_(tape.conv(tape.concat(e, up), pn.merge, hd, 2 * hd, 1));
  return tape.conv(m, pn.out, p.cfg.window, hd, k);
}

/// Convenience non-training forward.
inline Tensor direct_forward(const DirectNetParams& p, const Tensor& input) {
  Tape tape;
  auto pn = make_direct_param_nodes(tape, p);
  return tape.val(build_direct_forward(tape, input, p, pn));
}

}  // namespace gapfill
