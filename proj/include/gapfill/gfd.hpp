#pragma once

#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "gapfill/field.hpp"

// GFD container: `GFD1` magic line, key=value header, blank line, then
// T*H*W little-endian float32 values in C order. NaN encodes missing.

namespace gapfill {

inline void write_gfd(const GappyField& f, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << "GFD1\n";
  os << "shape=" << f.t << "," << f.h << "," << f.w << "\n";
  os << "dtype=f32le\n";
  os << "var=" << f.var_name << "\n";
  os << "units=" << f.units << "\n";
  os << "lat0=" << f.lat0 << "\nlon0=" << f.lon0 << "\n";
  os << "dlat=" << f.dlat << "\ndlon=" << f.dlon << "\n";
  os << "t0=" << format_date(f.t0) << "\n";
  os << "dt_days=" << f.dt_days << "\n";
  os << "\n";
  std::vector<float> buf(f.size());
  for (size_t k = 0; k < f.size(); ++k)
    buf[k] = f.valid[k] ? static_cast<float>(f.values[k])
                        : std::numeric_limits<float>::quiet_NaN();
  os.write(reinterpret_cast<const char*>(buf.data()),
           static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!os) throw IoError("short write: " + path);
}

inline GappyField read_gfd(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  std::string line;
  if (!std::getline(is, line) || line != "GFD1") throw BadMagic("not a GFD file: " + path);

  std::map<std::string, std::string> kv;
  while (std::getline(is, line) && !line.empty()) {
    auto eq = line.find('=');
    if (eq == std::string::npos) throw MalformedHeader("bad header line: " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto need = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw MalformedHeader("missing header key: " + key);
    return it->second;
  };

  int t, h, w;
  if (std::sscanf(need("shape").c_str(), "%d,%d,%d", &t, &h, &w) != 3 || t < 1 ||
      h < 1 || w < 1)
    throw MalformedHeader("bad shape: " + need("shape"));
  if (need("dtype") != "f32le") throw MalformedHeader("unsupported dtype: " + need("dtype"));

  GappyField f(t, h, w);
  f.var_name = need("var");
  f.units = need("units");
  f.lat0 = std::stod(need("lat0"));
  f.lon0 = std::stod(need("lon0"));
  f.dlat = std::stod(need("dlat"));
  f.dlon = std::stod(need("dlon"));
  f.t0 = parse_date(need("t0"));
  f.dt_days = std::stoi(need("dt_days"));

  std::vector<float> buf(f.size());
  is.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (static_cast<size_t>(is.gcount()) != buf.size() * sizeof(float))
    throw ShapeMismatch("payload length != T*H*W float32 values");
  for (size_t k = 0; k < f.size(); ++k) {
    if (std::isnan(buf[k])) {
      f.values[k] = kMissing;
      f.valid[k] = 0;
    } else {
      f.values[k] = buf[k];
      f.valid[k] = 1;
    }
  }
  return f;
}

}  // namespace gapfill
