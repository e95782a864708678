// Acceptance suite. Each numbered criterion prints exactly one PASS/FAIL
// line; the process exits nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "gapfill/gapfill.hpp"
#include "oracles.hpp"

using namespace gapfill;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

class Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();

 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

void report(int id, const std::string& name, bool ok, const std::string& detail,
            double secs) {
  if (!ok) ++g_failures;
  std::printf("[%2d] %s  %-28s %s (%.1f s)\n", id, ok ? "PASS" : "FAIL", name.c_str(),
              detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

// Fill every hidden ocean pixel with the per-pixel temporal mean of the
// observed values; pixels observed nowhere fall back to the overall mean.
GappyField mean_fill(const GappyField& obs) {
  GappyField out = obs;
  const size_t frame = static_cast<size_t>(obs.h) * obs.w;
  double all = 0;
  size_t n_all = 0;
  std::vector<double> mean(frame, 0.0);
  std::vector<size_t> cnt(frame, 0);
  for (int t = 0; t < obs.t; ++t)
    for (size_t p = 0; p < frame; ++p) {
      size_t k = t * frame + p;
      if (!obs.valid[k]) continue;
      mean[p] += obs.values[k];
      ++cnt[p];
      all += obs.values[k];
      ++n_all;
    }
  all /= std::max<size_t>(n_all, 1);
  for (size_t p = 0; p < frame; ++p) mean[p] = cnt[p] ? mean[p] / cnt[p] : all;
  auto ocean = obs.ocean_mask();
  for (int t = 0; t < obs.t; ++t)
    for (size_t p = 0; p < frame; ++p) {
      size_t k = t * frame + p;
      if (ocean[p] && !out.valid[k]) {
        out.values[k] = mean[p];
        out.valid[k] = 1;
      }
    }
  return out;
}

// --------------------------------------------------------------- criterion 1

void criterion_grad() {
  Timer tm;
  double worst = 0;
  for (auto kind : {PriorKind::zero, PriorKind::diffusion, PriorKind::convnet})
    for (uint64_t seed = 0; seed < 20; ++seed) {
      auto inst = oracles::random_instance(seed);
      auto prior = oracles::make_prior(kind, seed + 500);
      worst = std::max(worst, oracles::fd_rel_error(inst, prior, 1.0, 1.0));
    }

  // full training gradient through K=3 unrolled steps at toy size
  Rng rng(5);
  GappyField ds(2, 8, 8);
  for (size_t k = 0; k < ds.size(); ++k) {
    ds.values[k] = rng.normal();
    ds.valid[k] = 1;
  }
  PriorModel prior;
  prior.kind = PriorKind::convnet;
  prior.net.channels = 3;
  prior.net.init(rng);
  SolverSpec spec;
  spec.update = UpdateRule::learned;
  spec.iterations = 3;
  spec.learned.init(3, rng);

  auto ocean_plane = ds.ocean_mask();
  Tensor ocean = detail::replicate_plane(ocean_plane, 2, 8, 8);
  auto target = detail::extract_window(ds, 0, 2);
  CloudMaskConfig cloud;
  cloud.seed = 6;
  cloud.blob_radius_min = 1;
  cloud.blob_radius_max = 3;
  auto obs = detail::clouded(target, cloud, 3, ocean_plane);

  auto loss_value = [&]() {
    Tape tape;
    auto pn = make_var_param_nodes(tape, prior, spec);
    int x = build_solve_graph(tape, obs.values, obs.mask, ocean, prior, spec, pn);
    return tape.scalar(detail::masked_mse(tape, x, target));
  };
  Tape tape;
  auto pn = make_var_param_nodes(tape, prior, spec);
  int x = build_solve_graph(tape, obs.values, obs.mask, ocean, prior, spec, pn);
  tape.backward(detail::masked_mse(tape, x, target));

  const double h = 1e-5;
  auto fd_check = [&](double* p, double analytic) {
    const double orig = *p;
    *p = orig + h;
    double up = loss_value();
    *p = orig - h;
    double dn = loss_value();
    *p = orig;
    return std::abs((up - dn) / (2 * h) - analytic) / std::max(std::abs(analytic), 1e-8);
  };
  Rng pick(7);
  auto check_tensor = [&](Tensor& t, int node, int count) {
    for (int c = 0; c < count; ++c) {
      size_t i = pick.next_u64() % t.size();
      worst = std::max(worst, fd_check(&t.v[i], tape.grad(node).v[i]));
    }
  };
  check_tensor(prior.net.w1, pn.w1, 5);
  check_tensor(prior.net.w2, pn.w2, 5);
  check_tensor(prior.net.w3, pn.w3, 5);
  check_tensor(prior.net.w4, pn.w4, 5);
  check_tensor(spec.learned.gate, pn.gate, 4);
  check_tensor(spec.learned.out_map, pn.out_map, 4);
  worst = std::max(worst, fd_check(&spec.lambda1, tape.grad(pn.lambda1).v[0]));
  worst = std::max(worst, fd_check(&spec.lambda2, tape.grad(pn.lambda2).v[0]));

  double secs = tm.seconds();
  report(1, "gradient correctness", worst < 1e-5 && secs < 30,
         "max rel err " + fmt(worst) + " (tol 1e-5)", secs);
}

// --------------------------------------------------------------- criterion 2

void criterion_quadratic() {
  Timer tm;
  double worst = 0;
  for (uint64_t seed = 0; seed < 10; ++seed)
    for (auto kind : {PriorKind::zero, PriorKind::diffusion}) {
      auto inst = oracles::random_instance(seed + 40, 3, 16, 16);
      auto prior = oracles::make_prior(kind, 0);
      oracles::QuadOracle oracle(inst, prior, 1.0, 1.0);
      double lmax = oracle.spectral_radius();

      SolverSpec spec;
      spec.iterations = 500;
      spec.update = UpdateRule::plain;
      spec.alpha = 0.45 / lmax;
      spec.init = SolverInit::zero_fill;
      auto res = solve(inst.y0, inst.omega, inst.ocean, prior, spec);

      double u_cg = oracle.cost_at(oracle.minimize());
      double u_gd = cost(res.state, inst.y0, inst.omega, inst.ocean, prior, 1.0, 1.0);
      worst = std::max(worst, std::abs(u_gd - u_cg) / std::abs(u_cg));
    }
  double secs = tm.seconds();
  report(2, "quadratic oracle", worst < 1e-6 && secs < 60,
         "max rel cost gap " + fmt(worst) + " (tol 1e-6)", secs);
}

// --------------------------------------------------------------- criterion 3

void criterion_dineof() {
  Timer tm;
  double worst_rmse = 0;
  int cv_hits = 0;
  for (uint64_t seed = 0; seed < 10; ++seed) {
    SyntheticTruthConfig tc;
    tc.t = 20;
    tc.h = 16;
    tc.w = 16;
    tc.mode = TruthMode::lowrank;
    tc.rank = 2;
    tc.seed = seed + 60;
    auto truth = gen_truth(tc);

    CloudMaskConfig cc;
    cc.target_missing_fraction = 0.30;
    cc.blob_radius_max = 5;
    cc.seed = seed + 70;
    auto mask = gen_cloud_mask_seq(tc.t, tc.h, tc.w, cc);
    auto obs = apply_mask(truth, mask);

    DineofConfig dc;
    dc.max_modes = 6;
    dc.conv_tol = 1e-10;
    dc.max_iters = 500;
    dc.seed = seed;
    auto [rec, eof] = impute(obs, 2, dc);

    double se = 0;
    size_t n = 0;
    for (size_t k = 0; k < truth.size(); ++k)
      if (truth.valid[k] && !obs.valid[k]) {
        double d = rec.values[k] - truth.values[k];
        se += d * d;
        ++n;
      }
    worst_rmse = std::max(worst_rmse, std::sqrt(se / std::max<size_t>(n, 1)));

    if (cross_validate(obs, dc).best_r == 2) ++cv_hits;
  }
  double secs = tm.seconds();
  report(3, "eof exact recovery", worst_rmse < 1e-6 && cv_hits >= 9 && secs < 60,
         "hidden rmse " + fmt(worst_rmse) + ", cv picked r=2 on " +
             std::to_string(cv_hits) + "/10 seeds",
         secs);
}

// --------------------------------------------------------------- criterion 4

void criterion_blindness() {
  Timer tm;
  SyntheticTruthConfig tc;
  tc.t = 10;
  tc.h = 16;
  tc.w = 16;
  tc.blob_count = 4;
  tc.smoothness_len = 3;
  tc.seed = 1;
  auto truth = gen_truth(tc);
  auto ds = normalize(truth, compute_stats(truth, Transform::physical));

  CloudMaskConfig cloud;
  cloud.seed = 2;
  auto target = detail::extract_window(ds, 0, 5);
  auto ocean_plane = ds.ocean_mask();
  auto obs = detail::clouded(target, cloud, 1, ocean_plane);
  std::vector<size_t> hidden_both;
  for (size_t i = 0; i < target.mask.v.size(); ++i)
    if (obs.mask.v[i] == 0.0) {
      target.mask.v[i] = 0.0;
      target.values.v[i] = 0.0;
      hidden_both.push_back(i);
    }

  PriorModel prior;
  prior.kind = PriorKind::diffusion;
  SolverSpec spec;
  spec.iterations = 3;
  spec.alpha = 0.05;
  Tensor ocean = detail::replicate_plane(ocean_plane, 5, ds.h, ds.w);
  auto loss_of = [&](const detail::Window& tgt) {
    Tape tape;
    auto pn = make_var_param_nodes(tape, prior, spec);
    int x = build_solve_graph(tape, obs.values, obs.mask, ocean, prior, spec, pn);
    return tape.scalar(detail::masked_mse(tape, x, tgt));
  };
  double base = loss_of(target);
  auto perturbed = target;
  for (size_t i : hidden_both) perturbed.values.v[i] = 1e9;
  double pert = loss_of(perturbed);
  bool ok = !hidden_both.empty() && pert == base;
  report(4, "masked-loss blindness", ok,
         "loss delta " + fmt(pert - base) + " over " +
             std::to_string(hidden_both.size()) + " perturbed pixels (bitwise)",
         tm.seconds());
}

// --------------------------------------------------------------- criterion 5

void criterion_metrics() {
  Timer tm;
  GappyField pred(1, 1, 2), target(1, 1, 2);
  pred.set(0, 0, 0, 1.0);
  pred.set(0, 0, 1, 10.0);
  target.set(0, 0, 0, 10.0);
  target.set(0, 0, 1, 10.0);
  std::vector<uint8_t> mask{1, 1};

  double r = rmsle(pred, target, mask);
  bool ok = std::abs(r - 0.70710678) < 1e-8;

  GappyField p2(1, 1, 1), t2(1, 1, 1);
  p2.set(0, 0, 0, 1.0);
  t2.set(0, 0, 0, 2.0);
  std::vector<uint8_t> m2{1};
  ok = ok && relative_error(p2, t2, m2) == 50.0;
  ok = ok && rmsle(target, target, mask) == 0.0 && relative_error(t2, t2, m2) == 0.0;
  report(5, "metric unit values", ok,
         "rmsle((1,10),(10,10)) = " + fmt(r) + ", re(1,2) = " +
             fmt(relative_error(p2, t2, m2)) + "%",
         tm.seconds());
}

// --------------------------------------------------------------- criterion 6

void criterion_tiling() {
  Timer tm;
  GappyField f(2, 240, 300);
  for (int t = 0; t < 2; ++t)
    for (int i = 0; i < 240; ++i)
      for (int j = 0; j < 300; ++j)
        f.set(t, i, j, std::sin(0.05 * i) + std::cos(0.03 * j) + 0.1 * t);

  auto lay = plan_tiles(240, 300, 240, 240, 32, 32);
  bool geom = lay.origins.size() == 2 && lay.origins[0] == std::pair<int, int>{0, 0} &&
              lay.origins[1] == std::pair<int, int>{0, 60};
  int overlap = geom ? 240 - lay.origins[1].second : -1;

  auto rec = tile_infer(f, lay, [](const GappyField& p) { return p; });
  double worst = 0;
  for (size_t k = 0; k < f.size(); ++k)
    worst = std::max(worst, std::abs(rec.values[k] - f.values[k]));

  report(6, "tiling round trip", geom && overlap == 180 && worst < 1e-12,
         std::to_string(lay.origins.size()) + " patches, " + std::to_string(overlap) +
             "-col overlap, max err " + fmt(worst),
         tm.seconds());
}

// ---------------------------------------------------- criteria 7 and 8

struct Benchmark {
  GappyField truth_test, obs_test;
  ModelCheckpoint model;  // trained variational model
  NormStats train_stats;
};

GappyField make_obs(const GappyField& truth, double missing, uint64_t seed) {
  CloudMaskConfig cc;
  cc.target_missing_fraction = missing;
  cc.seed = seed;
  auto ocean = truth.ocean_mask();
  return apply_mask(truth, gen_cloud_mask_seq(truth.t, truth.h, truth.w, cc, 0, &ocean));
}

double score(const GappyField& pred, const GappyField& truth, const GappyField& obs) {
  return evaluate(pred, truth, obs).rmsle;
}

Benchmark run_benchmark(bool* ok, std::string* detail, double* secs) {
  Timer tm;
  SyntheticTruthConfig tc;
  tc.t = 250;
  tc.h = 32;
  tc.w = 32;
  tc.mode = TruthMode::advected_blobs;
  tc.blob_count = 6;
  tc.smoothness_len = 4;
  tc.vel_x = 1.0;
  tc.vel_y = 0.0;
  tc.seed = 2024;
  auto truth = gen_truth(tc);
  auto obs = make_obs(truth, 0.45, 77);

  Benchmark bm;
  // 200 training frames, 50 test frames
  GappyField obs_train = select_frames(obs, DateInterval{obs.date_of(0), obs.date_of(179)});
  GappyField obs_valid = select_frames(obs, DateInterval{obs.date_of(180), obs.date_of(199)});
  bm.obs_test = select_frames(obs, DateInterval{obs.date_of(200), obs.date_of(249)});
  bm.truth_test = select_frames(truth, DateInterval{truth.date_of(200), truth.date_of(249)});

  bm.train_stats = compute_stats(obs_train, Transform::log10);
  auto train_n = normalize(obs_train, bm.train_stats);
  auto valid_n = normalize(obs_valid, bm.train_stats);

  bm.model.family = ModelFamily::variational;
  bm.model.prior.kind = PriorKind::convnet;
  bm.model.prior.net.channels = 8;
  Rng rng(11);
  bm.model.prior.net.init(rng);
  bm.model.spec.update = UpdateRule::learned;
  bm.model.spec.iterations = 12;
  bm.model.spec.learned.init(12, rng);

  CloudMaskConfig cloud;
  cloud.target_missing_fraction = 0.45;
  cloud.seed = 13;
  TrainConfig tcfg;
  tcfg.epochs = 24;
  tcfg.batch = 4;
  tcfg.window = 5;
  tcfg.windows_per_epoch = 32;
  tcfg.lr = 3e-3;
  tcfg.seed = 5;
  train_variational(train_n, valid_n, cloud, bm.model.prior, bm.model.spec, tcfg);

  // evaluate on the held-out frames, each method in physical space
  NormStats test_stats = compute_stats(bm.obs_test, Transform::log10);
  bool warned = false;
  GappyField var_rec = infer(bm.obs_test, bm.model, test_stats, &warned);

  DineofConfig dc;
  dc.seed = 3;
  auto obs_test_n = normalize(bm.obs_test, test_stats);
  auto cv = cross_validate(obs_test_n, dc);
  auto [eof_rec_n, eof] = impute(obs_test_n, cv.best_r, dc);
  GappyField eof_rec = denormalize(eof_rec_n, test_stats);

  GappyField base = mean_fill(bm.obs_test);

  double r_var = score(var_rec, bm.truth_test, bm.obs_test);
  double r_eof = score(eof_rec, bm.truth_test, bm.obs_test);
  double r_base = score(base, bm.truth_test, bm.obs_test);

  *secs = tm.seconds();
  *ok = r_var <= 0.9 * r_base && r_eof <= r_base && *secs < 900;
  *detail = "rmsle var " + fmt(r_var) + ", eof " + fmt(r_eof) + " (r=" +
            std::to_string(cv.best_r) + "), mean-fill " + fmt(r_base);
  return bm;
}

void criterion_transfer(const Benchmark& bm) {
  Timer tm;
  // dataset B: different advection speed and amplitude, fresh seeds
  SyntheticTruthConfig tc;
  tc.t = 50;
  tc.h = 32;
  tc.w = 32;
  tc.mode = TruthMode::advected_blobs;
  tc.blob_count = 6;
  tc.smoothness_len = 4;
  tc.vel_x = -0.6;
  tc.vel_y = 0.4;
  tc.amplitude = 2.5;
  tc.seed = 909;
  auto truth_b = gen_truth(tc);
  auto obs_b = make_obs(truth_b, 0.45, 910);

  // only B's own stats, zero parameter change
  NormStats stats_b = compute_stats(obs_b, Transform::log10);
  GappyField rec = infer(obs_b, bm.model, stats_b);
  double r_var = score(rec, truth_b, obs_b);
  double r_base = score(mean_fill(obs_b), truth_b, obs_b);
  report(8, "transfer to dataset B", r_var <= 0.95 * r_base,
         "rmsle var " + fmt(r_var) + " vs mean-fill " + fmt(r_base) + " (need <= 0.95x)",
         tm.seconds());
}

// --------------------------------------------------------------- criterion 9

void criterion_params() {
  Timer tm;
  DirectNetConfig cfg;
  cfg.window = 5;
  cfg.hidden = 128;
  DirectNetParams net;
  net.init(cfg);
  size_t n = net.param_count();
  bool ok = n >= 625000 * 0.95 && n <= 625000 * 1.05;
  report(9, "parameter count", ok,
         std::to_string(n) + " parameters at hidden=128 (625k +/- 5%)", tm.seconds());
}

// -------------------------------------------------------------- criterion 10

void criterion_determinism() {
  Timer tm;
  fs::path dir = fs::temp_directory_path() / "gapfill_acceptance";
  fs::create_directories(dir);
  const std::string cli = GAPFILL_CLI_PATH;
  auto run = [&](const std::string& args) {
    std::string cmd = cli + " " + args + " > /dev/null 2>&1";
    return std::system(cmd.c_str());
  };
  std::string obs = (dir / "obs.gfd").string();
  std::string truth = (dir / "truth.gfd").string();
  bool ok = run("simulate --frames 24 --height 16 --width 16 --seed 9 --out-truth " +
                truth + " --out-obs " + obs) == 0;
  std::string train_args =
      " --obs " + obs +
      " --family variational --prior convnet --update learned --train 0:16"
      " --valid 16:24 --epochs 2 --windows-per-epoch 6 --iterations 4 --seed 9 --out ";
  std::string m1 = (dir / "m1.gpm").string(), m2 = (dir / "m2.gpm").string();
  ok = ok && run("train" + train_args + m1) == 0;
  ok = ok && run("train" + train_args + m2) == 0;

  std::string s1, s2;
  if (ok) {
    std::ifstream f1(m1, std::ios::binary), f2(m2, std::ios::binary);
    s1.assign(std::istreambuf_iterator<char>(f1), std::istreambuf_iterator<char>());
    s2.assign(std::istreambuf_iterator<char>(f2), std::istreambuf_iterator<char>());
    ok = !s1.empty() && s1 == s2;
  }
  report(10, "checkpoint determinism", ok,
         "two identical train runs, " + std::to_string(s1.size()) + " bytes each" +
             (ok ? ", byte-identical" : ", MISMATCH"),
         tm.seconds());
  fs::remove_all(dir);
}

}  // namespace

int main() {
  criterion_grad();
  criterion_quadratic();
  criterion_dineof();
  criterion_blindness();
  criterion_metrics();
  criterion_tiling();
  {
    bool ok = false;
    std::string detail;
    double secs = 0;
    Benchmark bm = run_benchmark(&ok, &detail, &secs);
    report(7, "end-to-end ordering", ok, detail, secs);
    criterion_transfer(bm);
  }
  criterion_params();
  criterion_determinism();

  if (g_failures) {
    std::printf("%d criterion(s) FAILED\n", g_failures);
    return 1;
  }
  std::printf("all 10 criteria passed\n");
  return 0;
}
