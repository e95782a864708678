#pragma once

#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "gapfill/direct_net.hpp"
#include "gapfill/field.hpp"
#include "gapfill/train.hpp"
#include "gapfill/var.hpp"

// GPM1 checkpoint: GFD-style text header (`GPM1` magic, kind and
// hyperparameters), blank line, little-endian float64 parameter payload.

namespace gapfill {

enum class ModelFamily { variational, direct };

struct ModelCheckpoint {
  ModelFamily family = ModelFamily::variational;
  PriorModel prior;
  SolverSpec spec;
  DirectNetParams direct;

  GappyField infer_normalized(const GappyField& y_norm) const {
    return family == ModelFamily::variational
               ? infer_variational_normalized(y_norm, prior, spec)
               : infer_direct_normalized(y_norm, direct);
  }
};

namespace detail {
inline void append(std::vector<double>& payload, const Tensor& t) {
  payload.insert(payload.end(), t.v.begin(), t.v.end());
}
inline void take(const std::vector<double>& payload, size_t& off, Tensor& t) {
  if (off + t.size() > payload.size()) throw MalformedHeader("checkpoint payload too short");
  std::copy(payload.begin() + off, payload.begin() + off + t.size(), t.v.begin());
  off += t.size();
}
}  // namespace detail

inline void write_checkpoint(const ModelCheckpoint& m, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << "GPM1\n";
  std::vector<double> payload;

  if (m.family == ModelFamily::variational) {
    os << "family=variational\n";
    os << "prior=" << (m.prior.kind == PriorKind::zero ? "zero"
                       : m.prior.kind == PriorKind::diffusion ? "diffusion" : "convnet")
       << "\n";
    os << "channels=" << m.prior.net.channels << "\nk=" << m.prior.net.k << "\n";
    os << "iterations=" << m.spec.iterations << "\n";
    os << "update=" << (m.spec.update == UpdateRule::plain ? "plain"
                        : m.spec.update == UpdateRule::momentum ? "momentum" : "learned")
       << "\n";
    os << "alpha=" << m.spec.alpha << "\nbeta=" << m.spec.beta << "\n";
    os << "init=" << (m.spec.init == SolverInit::zero_fill ? "zero-fill" : "obs-fill")
       << "\n";
    os << "gate_k=" << m.spec.learned.k << "\n";
    payload.push_back(m.spec.lambda1);
    payload.push_back(m.spec.lambda2);
    if (m.prior.kind == PriorKind::diffusion) payload.push_back(m.prior.nu);
    if (m.prior.kind == PriorKind::convnet) {
      detail::append(payload, m.prior.net.w1);
      detail::append(payload, m.prior.net.w2);
      detail::append(payload, m.prior.net.w3);
      detail::append(payload, m.prior.net.w4);
    }
    if (m.spec.update == UpdateRule::learned) {
      payload.insert(payload.end(), m.spec.learned.step_gain.begin(),
                     m.spec.learned.step_gain.end());
      detail::append(payload, m.spec.learned.gate);
      detail::append(payload, m.spec.learned.out_map);
    }
  } else {
    os << "family=direct\n";
    os << "window=" << m.direct.cfg.window << "\nhidden=" << m.direct.cfg.hidden
       << "\nk=" << m.direct.cfg.k << "\n";
    detail::append(payload, m.direct.enc);
    detail::append(payload, m.direct.down);
    detail::append(payload, m.direct.bott_a);
    detail::append(payload, m.direct.bott_b1);
    detail::append(payload, m.direct.bott_b2);
    detail::append(payload, m.direct.merge);
    detail::append(payload, m.direct.out);
  }
  os << "count=" << payload.size() << "\n\n";
  os.write(reinterpret_cast<const char*>(payload.data()),
           static_cast<std::streamsize>(payload.size() * sizeof(double)));
  if (!os) throw IoError("short write: " + path);
}

inline ModelCheckpoint read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  std::string line;
  if (!std::getline(is, line) || line != "GPM1")
    throw BadMagic("not a GPM checkpoint: " + path);
  std::map<std::string, std::string> kv;
  while (std::getline(is, line) && !line.empty()) {
    auto eq = line.find('=');
    if (eq == std::string::npos) throw MalformedHeader("bad header line: " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto need = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw MalformedHeader("missing key: " + key);
    return it->second;
  };

  const size_t count = std::stoul(need("count"));
  std::vector<double> payload(count);
  is.read(reinterpret_cast<char*>(payload.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (static_cast<size_t>(is.gcount()) != count * sizeof(double))
    throw MalformedHeader("checkpoint payload truncated");

  ModelCheckpoint m;
  size_t off = 0;
  if (need("family") == "variational") {
    m.family = ModelFamily::variational;
    const std::string pk = need("prior");
    m.prior.kind = pk == "zero" ? PriorKind::zero
                   : pk == "diffusion" ? PriorKind::diffusion : PriorKind::convnet;
    m.prior.net.channels = std::stoi(need("channels"));
    m.prior.net.k = std::stoi(need("k"));
    m.spec.iterations = std::stoi(need("iterations"));
    const std::string up = need("update");
    m.spec.update = up == "plain" ? UpdateRule::plain
                    : up == "momentum" ? UpdateRule::momentum : UpdateRule::learned;
    m.spec.alpha = std::stod(need("alpha"));
    m.spec.beta = std::stod(need("beta"));
    m.spec.init = need("init") == "zero-fill" ? SolverInit::zero_fill : SolverInit::obs_fill;
    m.spec.learned.k = std::stoi(need("gate_k"));
    m.spec.lambda1 = payload.at(off++);
    m.spec.lambda2 = payload.at(off++);
    if (m.prior.kind == PriorKind::diffusion) m.prior.nu = payload.at(off++);
    if (m.prior.kind == PriorKind::convnet) {
      const int c = m.prior.net.channels, k = m.prior.net.k;
      m.prior.net.w1 = Tensor(c, k, k);
      m.prior.net.w2 = Tensor(c, k, k);
      m.prior.net.w3 = Tensor(c, k, k);
      m.prior.net.w4 = Tensor(c, k, k);
      detail::take(payload, off, m.prior.net.w1);
      detail::take(payload, off, m.prior.net.w2);
      detail::take(payload, off, m.prior.net.w3);
      detail::take(payload, off, m.prior.net.w4);
    }
    if (m.spec.update == UpdateRule::learned) {
      m.spec.learned.step_gain.resize(m.spec.iterations);
      for (auto& g : m.spec.learned.step_gain) g = payload.at(off++);
      m.spec.learned.gate = Tensor(1, m.spec.learned.k, m.spec.learned.k);
      m.spec.learned.out_map = Tensor(1, m.spec.learned.k, m.spec.learned.k);
      detail::take(payload, off, m.spec.learned.gate);
      detail::take(payload, off, m.spec.learned.out_map);
    }
  } else if (need("family") == "direct") {
    m.family = ModelFamily::direct;
    DirectNetConfig cfg;
    cfg.window = std::stoi(need("window"));
    cfg.hidden = std::stoi(need("hidden"));
    cfg.k = std::stoi(need("k"));
    m.direct.init(cfg);
    detail::take(payload, off, m.direct.enc);
    detail::take(payload, off, m.direct.down);
    detail::take(payload, off, m.direct.bott_a);
    detail::take(payload, off, m.direct.bott_b1);
    detail::take(payload, off, m.direct.bott_b2);
    detail::take(payload, off, m.direct.merge);
    detail::take(payload, off, m.direct.out);
  } else {
    throw MalformedHeader("unknown family: " + need("family"));
  }
  if (off != payload.size()) throw MalformedHeader("checkpoint payload size mismatch");
  return m;
}

/// The transfer contract: normalize the target dataset with ITS OWN
/// stats, reconstruct, denormalize.
inline GappyField infer(const GappyField& y_physical, const ModelCheckpoint& model,
                        const NormStats& stats, bool* warned_unnormalized = nullptr) {
  GappyField y_norm = normalize(y_physical, stats);
  if (warned_unnormalized) *warned_unnormalized = looks_unnormalized(y_norm);
  GappyField rec_norm = model.infer_normalized(y_norm);
  return denormalize(rec_norm, stats);
}

}  // namespace gapfill
