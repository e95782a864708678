// gapfill command line front end.
//
// Verbs: simulate, train, infer, tile-infer, dineof, eval, report.
// A JSON config file supplies defaults; flags passed on the command line
// win. Exit codes: 0 ok, 2 config/usage error, 3 numeric divergence,
// 4 IO error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <gapfill/gapfill.hpp>

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace gapfill;

namespace {

uint64_t default_seed() {
  if (const char* s = std::getenv("GAPFILL_SEED")) return std::strtoull(s, nullptr, 10);
  return 0;
}

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config: " + path);
  json cfg;
  try {
    is >> cfg;
  } catch (const json::exception& e) {
    throw Error(std::string("bad config JSON: ") + e.what());
  }
  return cfg;
}

// Flag beats config file beats built-in default.
template <class T>
void merge(const CLI::App& app, const std::string& flag, const json& cfg,
           const std::string& key, T& value) {
  const CLI::Option* opt = app.get_option(flag);
  if (opt && opt->count() > 0) {
    value = opt->as<T>();
    return;
  }
  if (cfg.contains(key)) value = cfg.at(key).get<T>();
}

void merge_flag(const CLI::App& app, const std::string& flag, const json& cfg,
                const std::string& key, bool& value) {
  if (app.get_option(flag)->count() > 0) value = true;
  else if (cfg.contains(key)) value = cfg.at(key).get<bool>();
}

// Half-open [a, b) frame range written as "a:b".
std::pair<int, int> parse_range(const std::string& s) {
  auto colon = s.find(':');
  if (colon == std::string::npos) throw Error("range must be start:end, got " + s);
  return {std::stoi(s.substr(0, colon)), std::stoi(s.substr(colon + 1))};
}

GappyField slice_frames(const GappyField& f, int a, int b) {
  if (a < 0 || b > f.t || a >= b) throw EmptySelection("bad frame range");
  GappyField out(b - a, f.h, f.w);
  out.lat0 = f.lat0;
  out.lon0 = f.lon0;
  out.dlat = f.dlat;
  out.dlon = f.dlon;
  out.dt_days = f.dt_days;
  out.t0 = add_days(f.t0, a * f.dt_days);
  out.var_name = f.var_name;
  out.units = f.units;
  const size_t frame = static_cast<size_t>(f.h) * f.w;
  std::copy(f.values.begin() + a * frame, f.values.begin() + b * frame, out.values.begin());
  std::copy(f.valid.begin() + a * frame, f.valid.begin() + b * frame, out.valid.begin());
  return out;
}

Transform parse_transform(const std::string& s) {
  if (s == "physical") return Transform::physical;
  if (s == "log10") return Transform::log10;
  throw Error("transform must be physical or log10, got " + s);
}

void write_stats_sidecar(const NormStats& st, const std::string& path) {
  json j;
  j["mean"] = st.m;
  j["variance"] = st.sigma;
  j["transform"] = st.space == Transform::log10 ? "log10" : "physical";
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path);
  os << j.dump(2) << "\n";
}

void write_history(const TrainHistory& h, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path);
  os << "epoch,train_loss,valid_loss\n";
  for (size_t e = 0; e < h.train_loss.size(); ++e)
    os << e << "," << std::setprecision(17) << h.train_loss[e] << ","
       << h.valid_loss[e] << "\n";
}

// ---------------------------------------------------------------- simulate

int cmd_simulate(CLI::App& app, const std::string& config_path) {
  json cfg = load_config(config_path);
  SyntheticTruthConfig tc;
  CloudMaskConfig cc;
  std::string mode = "advected-blobs", out_truth = "truth.gfd", out_obs = "obs.gfd";
  uint64_t seed = default_seed();

  merge(app, "--frames", cfg, "frames", tc.t);
  merge(app, "--height", cfg, "height", tc.h);
  merge(app, "--width", cfg, "width", tc.w);
  merge(app, "--mode", cfg, "mode", mode);
  merge(app, "--rank", cfg, "rank", tc.rank);
  merge(app, "--vel-y", cfg, "vel_y", tc.vel_y);
  merge(app, "--vel-x", cfg, "vel_x", tc.vel_x);
  merge(app, "--blobs", cfg, "blobs", tc.blob_count);
  merge(app, "--amplitude", cfg, "amplitude", tc.amplitude);
  merge(app, "--background", cfg, "background", tc.background);
  merge(app, "--land-cols", cfg, "land_cols", tc.land_cols);
  merge(app, "--missing", cfg, "missing_fraction", cc.target_missing_fraction);
  merge(app, "--seed", cfg, "seed", seed);
  merge(app, "--out-truth", cfg, "out_truth", out_truth);
  merge(app, "--out-obs", cfg, "out_obs", out_obs);

  if (mode == "lowrank") tc.mode = TruthMode::lowrank;
  else if (mode == "advected-blobs") tc.mode = TruthMode::advected_blobs;
  else throw Error("mode must be lowrank or advected-blobs");
  tc.seed = seed;
  cc.seed = seed + 1;

  GappyField truth = gen_truth(tc);
  auto ocean = truth.ocean_mask();
  auto mask = gen_cloud_mask_seq(truth.t, truth.h, truth.w, cc, 0, &ocean);
  GappyField obs = apply_mask(truth, mask);

  write_gfd(truth, out_truth);
  write_gfd(obs, out_obs);
  std::cout << "wrote " << out_truth << " and " << out_obs << "\n";
  std::cout << "realized missing fraction on ocean: " << std::setprecision(4)
            << missing_fraction_on_ocean(obs) << "\n";
  return 0;
}

// ------------------------------------------------------------------- train

int cmd_train(CLI::App& app, const std::string& config_path) {
  json cfg = load_config(config_path);
  std::string obs_path, family = "variational", prior = "convnet", update = "learned";
  std::string train_range, valid_range, transform = "physical", out = "model.gpm";
  TrainConfig tcfg;
  CloudMaskConfig cloud;
  int iterations = 10, channels = 8, hidden = 16;
  double alpha = 0.1, lambda1 = 1.0, lambda2 = 1.0, nu = 0.1;
  uint64_t seed = default_seed();

  merge(app, "--obs", cfg, "obs", obs_path);
  merge(app, "--family", cfg, "family", family);
  merge(app, "--prior", cfg, "prior", prior);
  merge(app, "--update", cfg, "update", update);
  merge(app, "--train", cfg, "train", train_range);
  merge(app, "--valid", cfg, "valid", valid_range);
  merge(app, "--transform", cfg, "transform", transform);
  merge(app, "--epochs", cfg, "epochs", tcfg.epochs);
  merge(app, "--batch", cfg, "batch", tcfg.batch);
  merge(app, "--window", cfg, "window", tcfg.window);
  merge(app, "--windows-per-epoch", cfg, "windows_per_epoch", tcfg.windows_per_epoch);
  merge(app, "--lr", cfg, "lr", tcfg.lr);
  merge(app, "--iterations", cfg, "iterations", iterations);
  merge(app, "--channels", cfg, "channels", channels);
  merge(app, "--hidden", cfg, "hidden", hidden);
  merge(app, "--alpha", cfg, "alpha", alpha);
  merge(app, "--lambda1", cfg, "lambda1", lambda1);
  merge(app, "--lambda2", cfg, "lambda2", lambda2);
  merge(app, "--nu", cfg, "nu", nu);
  merge(app, "--missing", cfg, "missing_fraction", cloud.target_missing_fraction);
  merge(app, "--seed", cfg, "seed", seed);
  merge(app, "--out", cfg, "out", out);

  if (obs_path.empty()) throw Error("--obs is required");
  if (train_range.empty() || valid_range.empty())
    throw Error("--train and --valid frame ranges are required");
  tcfg.seed = seed;
  cloud.seed = seed + 101;

  GappyField obs = read_gfd(obs_path);
  auto [ta, tb] = parse_range(train_range);
  auto [va, vb] = parse_range(valid_range);
  GappyField train_ds = slice_frames(obs, ta, tb);
  GappyField valid_ds = slice_frames(obs, va, vb);

  // Normalization statistics come from the training split only.
  NormStats stats = compute_stats(train_ds, parse_transform(transform));
  GappyField train_n = normalize(train_ds, stats);
  GappyField valid_n = normalize(valid_ds, stats);

  ModelCheckpoint m;
  TrainHistory hist;
  Rng rng(seed, 7);
  if (family == "variational") {
    m.family = ModelFamily::variational;
    if (prior == "zero") m.prior.kind = PriorKind::zero;
    else if (prior == "diffusion") m.prior.kind = PriorKind::diffusion;
    else if (prior == "convnet") m.prior.kind = PriorKind::convnet;
    else throw Error("prior must be zero, diffusion or convnet");
    m.prior.nu = nu;
    m.prior.net.channels = channels;
    m.prior.net.init(rng);
    m.spec.lambda1 = lambda1;
    m.spec.lambda2 = lambda2;
    m.spec.iterations = iterations;
    m.spec.alpha = alpha;
    if (update == "plain") m.spec.update = UpdateRule::plain;
    else if (update == "learned") m.spec.update = UpdateRule::learned;
    else throw Error("trainable update must be plain or learned");
    m.spec.learned.init(iterations, rng);
    hist = train_variational(train_n, valid_n, cloud, m.prior, m.spec, tcfg);
  } else if (family == "direct") {
    m.family = ModelFamily::direct;
    DirectNetConfig dc;
    dc.window = tcfg.window;
    dc.hidden = hidden;
    dc.seed = seed;
    m.direct.init(dc);
    hist = train_direct(train_n, valid_n, cloud, m.direct, tcfg);
  } else {
    throw Error("family must be variational or direct");
  }

  write_checkpoint(m, out);
  write_history(hist, out + ".history.csv");
  write_stats_sidecar(stats, out + ".stats.json");
  std::cout << "wrote " << out << "\n";
  if (!hist.valid_loss.empty())
    std::cout << "final valid loss: " << hist.valid_loss.back() << "\n";
  return 0;
}

// ------------------------------------------------------------ infer verbs

int cmd_infer(CLI::App& app, const std::string& config_path, bool tiled) {
  json cfg = load_config(config_path);
  std::string model_path, obs_path, out = "reconstruction.gfd", transform = "physical";
  int patch_h = 0, patch_w = 0, overlap_h = 0, overlap_w = 0;

  merge(app, "--model", cfg, "model", model_path);
  merge(app, "--obs", cfg, "obs", obs_path);
  merge(app, "--out", cfg, "out", out);
  merge(app, "--transform", cfg, "transform", transform);
  merge(app, "--patch-h", cfg, "patch_h", patch_h);
  merge(app, "--patch-w", cfg, "patch_w", patch_w);
  merge(app, "--overlap-h", cfg, "overlap_h", overlap_h);
  merge(app, "--overlap-w", cfg, "overlap_w", overlap_w);

  if (model_path.empty() || obs_path.empty()) throw Error("--model and --obs are required");
  if (tiled && (patch_h < 1 || patch_w < 1))
    throw Error("tile-infer needs --patch-h and --patch-w");

  ModelCheckpoint m = read_checkpoint(model_path);
  GappyField obs = read_gfd(obs_path);
  // Transfer contract: the target dataset is normalized with its own stats.
  NormStats stats = compute_stats(obs, parse_transform(transform));

  GappyField rec;
  if (patch_h > 0 && patch_w > 0) {
    GappyField obs_n = normalize(obs, stats);
    TileLayout lay = plan_tiles(obs.h, obs.w, patch_h, patch_w, overlap_h, overlap_w);
    GappyField rec_n = tile_infer(obs_n, lay, [&](const GappyField& p) {
      return m.infer_normalized(p);
    });
    rec = denormalize(rec_n, stats);
    std::cout << "tiled over " << lay.origins.size() << " patches\n";
  } else {
    bool warned = false;
    rec = infer(obs, m, stats, &warned);
    if (warned)
      std::cerr << "warning: input does not look normalized after applying stats\n";
  }
  write_gfd(rec, out);
  std::cout << "wrote " << out << "\n";
  return 0;
}

// ------------------------------------------------------------------ dineof

int cmd_dineof(CLI::App& app, const std::string& config_path) {
  json cfg = load_config(config_path);
  std::string obs_path, out = "dineof.gfd", transform = "physical";
  DineofConfig dc;
  int modes = 0;
  bool cv = false;
  uint64_t seed = default_seed();

  merge(app, "--obs", cfg, "obs", obs_path);
  merge(app, "--out", cfg, "out", out);
  merge(app, "--transform", cfg, "transform", transform);
  merge(app, "--modes", cfg, "modes", modes);
  merge(app, "--max-modes", cfg, "max_modes", dc.max_modes);
  merge_flag(app, "--cv", cfg, "cv", cv);
  merge(app, "--seed", cfg, "seed", seed);

  if (obs_path.empty()) throw Error("--obs is required");
  if (!cv && modes < 1) throw Error("pass --modes R or --cv");
  dc.seed = seed;

  GappyField obs = read_gfd(obs_path);
  NormStats stats = compute_stats(obs, parse_transform(transform));
  GappyField obs_n = normalize(obs, stats);

  int r = modes;
  if (cv) {
    CvResult res = cross_validate(obs_n, dc);
    r = res.best_r;
    std::ofstream os(out + ".cv_curve.csv");
    os << "r,holdout_rmse\n";
    for (size_t i = 0; i < res.cv_curve.size(); ++i)
      os << (i + 1) << "," << std::setprecision(17) << res.cv_curve[i] << "\n";
    std::cout << "cross-validation selected r=" << r << "\n";
  }
  auto [rec_n, eof] = impute(obs_n, r, dc);
  GappyField rec = denormalize(rec_n, stats);
  write_gfd(rec, out);
  std::cout << "wrote " << out << " (r=" << r << ", " << eof.iterations
            << " refill iterations)\n";
  return 0;
}

// -------------------------------------------------------------------- eval

void write_report(const MetricsReport& rep, const GappyField& target,
                  const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path);
  os << "metric,value,n_eval\n";
  os << "rmsle," << std::setprecision(17) << rep.rmsle << "," << rep.n_eval << "\n";
  os << "re_percent," << rep.re_percent << "," << rep.n_eval << "\n";
  os << "frame,date,rmsle,re\n";
  for (const auto& fm : rep.per_frame)
    os << fm.frame << "," << format_date(target.date_of(fm.frame)) << ","
       << fm.rmsle << "," << fm.re_percent << "\n";
}

int cmd_eval(CLI::App& app, const std::string& config_path,
             std::vector<std::string> preds) {
  json cfg = load_config(config_path);
  std::string target_path, obs_path, out_dir = "eval";
  bool maps = false;

  merge(app, "--target", cfg, "target", target_path);
  merge(app, "--obs", cfg, "obs", obs_path);
  merge(app, "--out-dir", cfg, "out_dir", out_dir);
  merge_flag(app, "--error-maps", cfg, "error_maps", maps);
  if (preds.empty() && cfg.contains("pred"))
    preds = cfg.at("pred").get<std::vector<std::string>>();

  if (preds.empty() || target_path.empty() || obs_path.empty())
    throw Error("--pred, --target and --obs are required");

  GappyField target = read_gfd(target_path);
  GappyField obs = read_gfd(obs_path);
  fs::create_directories(out_dir);

  std::cout << "method          RMSLE        RE (%)\n";
  for (const auto& p : preds) {
    GappyField pred = read_gfd(p);
    MetricsReport rep = evaluate(pred, target, obs);
    std::string name = fs::path(p).stem().string();
    write_report(rep, target, out_dir + "/" + name + ".report.csv");
    if (maps) {
      auto mask = eval_mask(target, obs);
      for (int f = 0; f < target.t; ++f)
        emit_error_map(pred, target, mask, f,
                       out_dir + "/" + name + ".frame" + std::to_string(f));
    }
    std::cout << std::left << std::setw(15) << name << " " << std::setw(12)
              << std::setprecision(6) << rep.rmsle << " " << rep.re_percent << "\n";
  }
  return 0;
}

// ------------------------------------------------------------------ report

int cmd_report(const std::vector<std::string>& csvs, const std::string& out) {
  std::ostringstream table;
  table << "method,rmsle,re_percent\n";
  for (const auto& p : csvs) {
    std::ifstream is(p);
    if (!is) throw IoError("cannot open " + p);
    std::string line, rmsle_v, re_v;
    while (std::getline(is, line)) {
      if (line.rfind("rmsle,", 0) == 0) rmsle_v = line.substr(6, line.find(',', 6) - 6);
      if (line.rfind("re_percent,", 0) == 0)
        re_v = line.substr(11, line.find(',', 11) - 11);
    }
    if (rmsle_v.empty()) throw MalformedHeader("no rmsle row in " + p);
    std::string name = fs::path(p).stem().string();
    if (name.size() > 7 && name.substr(name.size() - 7) == ".report")
      name = name.substr(0, name.size() - 7);
    table << name << "," << rmsle_v << "," << re_v << "\n";
  }
  std::cout << table.str();
  if (!out.empty()) {
    std::ofstream os(out);
    if (!os) throw IoError("cannot write " + out);
    os << table.str();
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gap filling for space-time raster sequences"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "JSON config file; flags override its keys")
      ->expected(1);

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file");
    return sub;
  };

  // simulate
  auto* sim = add_common(app.add_subcommand("simulate", "write a synthetic truth/obs pair"));
  for (const char* o : {"--frames", "--height", "--width", "--rank", "--blobs",
                        "--land-cols", "--vel-y", "--vel-x", "--amplitude",
                        "--background", "--missing", "--seed", "--out-truth",
                        "--out-obs"})
    sim->add_option(o);
  sim->add_option("--mode")->description("lowrank | advected-blobs");

  // train
  auto* tr = add_common(app.add_subcommand("train", "train a model on an observation file"));
  for (const char* o : {"--obs", "--family", "--prior", "--update", "--transform",
                        "--epochs", "--batch", "--window", "--windows-per-epoch",
                        "--lr", "--iterations", "--channels", "--hidden", "--alpha",
                        "--lambda1", "--lambda2", "--nu", "--missing", "--seed",
                        "--out"})
    tr->add_option(o);
  tr->add_option("--train")->description("training frame range a:b");
  tr->add_option("--valid")->description("validation frame range a:b");

  // infer / tile-infer
  auto add_infer_opts = [&](CLI::App* sub) {
    for (const char* o : {"--model", "--obs", "--out", "--transform", "--patch-h",
                          "--patch-w", "--overlap-h", "--overlap-w"})
      sub->add_option(o);
  };
  auto* inf = add_common(app.add_subcommand("infer", "reconstruct a dataset with a checkpoint"));
  add_infer_opts(inf);
  auto* tinf = add_common(app.add_subcommand("tile-infer", "patchwise inference with overlap averaging"));
  add_infer_opts(tinf);

  // dineof
  auto* din = add_common(app.add_subcommand("dineof", "EOF-based imputation"));
  for (const char* o : {"--obs", "--out", "--transform", "--modes", "--max-modes",
                        "--seed"})
    din->add_option(o);
  din->add_flag("--cv")->description("select the rank by holdout cross-validation");

  // eval
  auto* ev = add_common(app.add_subcommand("eval", "score reconstructions on hidden pixels"));
  std::vector<std::string> preds;
  ev->add_option("--pred", preds, "reconstruction file (repeatable)");
  for (const char* o : {"--target", "--obs", "--out-dir"}) ev->add_option(o);
  ev->add_flag("--error-maps")->description("write per-frame PGM error maps");

  // report
  auto* rep = add_common(app.add_subcommand("report", "merge report CSVs into one table"));
  std::vector<std::string> report_csvs;
  std::string report_out;
  rep->add_option("csvs", report_csvs, "report CSV files")->required();
  rep->add_option("--out", report_out, "also write the table here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (sim->parsed()) return cmd_simulate(*sim, config_path);
    if (tr->parsed()) return cmd_train(*tr, config_path);
    if (inf->parsed()) return cmd_infer(*inf, config_path, false);
    if (tinf->parsed()) return cmd_infer(*tinf, config_path, true);
    if (din->parsed()) return cmd_dineof(*din, config_path);
    if (ev->parsed()) return cmd_eval(*ev, config_path, preds);
    if (rep->parsed()) return cmd_report(report_csvs, report_out);
  } catch (const Diverged& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const BadMagic& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const MalformedHeader& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
