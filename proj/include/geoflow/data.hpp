#pragma once

// Dataset container, text and binary row formats, and the synthetic
// mixture-of-von-Mises-Fisher data generator used for end-to-end runs.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "geoflow/error.hpp"
#include "geoflow/rng.hpp"
#include "geoflow/sphere.hpp"
#include "geoflow/vmf.hpp"

namespace geoflow {

// Rows of (latitude deg, longitude deg, conditioning embedding).
struct Dataset {
  int embed_dim = 0;
  std::vector<double> lat;
  std::vector<double> lon;
  std::vector<double> embed;  // row-major, size() * embed_dim

  size_t size() const { return lat.size(); }

  void append(double la, double lo, const std::vector<double>& e) {
    if (static_cast<int>(e.size()) != embed_dim) {
      throw InputError("dataset: embedding dim mismatch on append");
    }
    lat.push_back(la);
    lon.push_back(lo);
    embed.insert(embed.end(), e.begin(), e.end());
  }

  std::vector<double> embed_row(size_t i) const {
    return std::vector<double>(embed.begin() + i * embed_dim,
                               embed.begin() + (i + 1) * embed_dim);
  }

  UnitVec3 point(size_t i) const {
    return latlon_to_unit(LatLon{lat[i], lon[i]});
  }
};

using RowFn =
    std::function<void(double lat, double lon, const std::vector<double>&)>;

namespace detail {

inline void validate_latlon_row(double lat, double lon, const std::string& where) {
  if (!(lat >= -90.0 && lat <= 90.0) || !(lon >= -180.0 && lon <= 180.0)) {
    throw ParseError(where + ": coordinate out of range");
  }
}

inline double parse_field(const std::string& tok, const std::string& where) {
  const char* begin = tok.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0') {
    throw ParseError(where + ": bad numeric field '" + tok + "'");
  }
  return v;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  size_t start = 0;
  for (;;) {
    const size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

}  // namespace detail

// Streams a CSV dataset row by row without materializing it. The header must
// be exactly "lat,lon,e0,...,e<d-1>". Returns the embedding dimension.
inline int for_each_csv_row(const std::string& path, const RowFn& fn) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "' for reading");
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  const std::vector<std::string> head = detail::split_csv_line(line);
  if (head.size() < 2 || head[0] != "lat" || head[1] != "lon") {
    throw ParseError(path + ":1: header must start with 'lat,lon'");
  }
  const int dim = static_cast<int>(head.size()) - 2;
  for (int j = 0; j < dim; ++j) {
    if (head[2 + j] != "e" + std::to_string(j)) {
      throw ParseError(path + ":1: embedding columns must be e0,e1,...");
    }
  }

  std::vector<double> e(dim);
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    const std::vector<std::string> tok = detail::split_csv_line(line);
    if (tok.size() != head.size()) {
      throw ParseError(where + ": expected " + std::to_string(head.size()) +
                       " fields, got " + std::to_string(tok.size()));
    }
    const double lat = detail::parse_field(tok[0], where);
    const double lon = detail::parse_field(tok[1], where);
    detail::validate_latlon_row(lat, lon, where);
    for (int j = 0; j < dim; ++j) e[j] = detail::parse_field(tok[2 + j], where);
    fn(lat, lon, e);
  }
  return dim;
}

inline Dataset load_csv(const std::string& path) {
  Dataset d;
  bool first = true;
  d.embed_dim = for_each_csv_row(path, [&](double lat, double lon,
                                           const std::vector<double>& e) {
    if (first) {
      d.embed_dim = static_cast<int>(e.size());
      first = false;
    }
    d.append(lat, lon, e);
  });
  return d;
}

// Full-precision text writer; %.17g round-trips doubles exactly.
inline void write_csv(const std::string& path, const Dataset& d) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot open '" + path + "' for writing");
  out << "lat,lon";
  for (int j = 0; j < d.embed_dim; ++j) out << ",e" << j;
  out << "\n";
  char buf[64];
  for (size_t i = 0; i < d.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", d.lat[i]);
    out << buf;
    std::snprintf(buf, sizeof buf, "%.17g", d.lon[i]);
    out << ',' << buf;
    for (int j = 0; j < d.embed_dim; ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", d.embed[i * d.embed_dim + j]);
      out << ',' << buf;
    }
    out << "\n";
  }
  if (!out) throw InputError("write failed for '" + path + "'");
}

// Binary row format: "GFDS", u16 version, u16 reserved, u64 row count,
// u32 embedding dim, u32 reserved, then per row (lat, lon, e...) as f64 LE.
namespace detail {

inline void gfds_write_bytes(std::ofstream& out, const void* p, size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void gfds_read_bytes(std::ifstream& in, void* p, size_t n,
                            const std::string& path) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<size_t>(in.gcount()) != n) {
    throw ParseError(path + ": truncated binary dataset");
  }
}

}  // namespace detail

inline void write_gfds(const std::string& path, const Dataset& d) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open '" + path + "' for writing");
  detail::gfds_write_bytes(out, "GFDS", 4);
  const uint16_t version = 1, reserved16 = 0;
  detail::gfds_write_bytes(out, &version, 2);
  detail::gfds_write_bytes(out, &reserved16, 2);
  const uint64_t count = d.size();
  detail::gfds_write_bytes(out, &count, 8);
  const uint32_t dim = static_cast<uint32_t>(d.embed_dim), reserved32 = 0;
  detail::gfds_write_bytes(out, &dim, 4);
  detail::gfds_write_bytes(out, &reserved32, 4);
  for (size_t i = 0; i < d.size(); ++i) {
    detail::gfds_write_bytes(out, &d.lat[i], 8);
    detail::gfds_write_bytes(out, &d.lon[i], 8);
    detail::gfds_write_bytes(out, d.embed.data() + i * d.embed_dim,
                             8 * static_cast<size_t>(d.embed_dim));
  }
  if (!out) throw InputError("write failed for '" + path + "'");
}

inline int for_each_gfds_row(const std::string& path, const RowFn& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "' for reading");
  char magic[4];
  detail::gfds_read_bytes(in, magic, 4, path);
  if (std::memcmp(magic, "GFDS", 4) != 0) {
    throw ParseError(path + ": not a binary dataset (bad magic)");
  }
  uint16_t version, reserved16;
  detail::gfds_read_bytes(in, &version, 2, path);
  detail::gfds_read_bytes(in, &reserved16, 2, path);
  if (version != 1) {
    throw ParseError(path + ": unsupported dataset version " +
                     std::to_string(version));
  }
  uint64_t count;
  detail::gfds_read_bytes(in, &count, 8, path);
  uint32_t dim, reserved32;
  detail::gfds_read_bytes(in, &dim, 4, path);
  detail::gfds_read_bytes(in, &reserved32, 4, path);
  if (dim > (1u << 20)) throw ParseError(path + ": implausible embedding dim");

  std::vector<double> e(dim);
  for (uint64_t i = 0; i < count; ++i) {
    double lat, lon;
    detail::gfds_read_bytes(in, &lat, 8, path);
    detail::gfds_read_bytes(in, &lon, 8, path);
    detail::gfds_read_bytes(in, e.data(), 8 * static_cast<size_t>(dim), path);
    detail::validate_latlon_row(lat, lon, path + ": row " + std::to_string(i));
    fn(lat, lon, e);
  }
  in.peek();
  if (!in.eof()) throw ParseError(path + ": trailing bytes after last row");
  return static_cast<int>(dim);
}

inline Dataset load_gfds(const std::string& path) {
  Dataset d;
  bool first = true;
  d.embed_dim = for_each_gfds_row(path, [&](double lat, double lon,
                                            const std::vector<double>& e) {
    if (first) {
      d.embed_dim = static_cast<int>(e.size());
      first = false;
    }
    d.append(lat, lon, e);
  });
  return d;
}

// Loads either format, keyed on the file extension.
inline Dataset load_dataset(const std::string& path) {
  if (path.size() >= 5 && path.compare(path.size() - 5, 5, ".gfds") == 0) {
    return load_gfds(path);
  }
  return load_csv(path);
}

// Synthetic data: each class is a mixture of von Mises-Fisher components;
// the conditioning embedding is the class one-hot plus optional Gaussian
// jitter so conditioning is informative but not degenerate.
struct SynthSpec {
  std::vector<VmfMixture> classes;
  int n_per_class = 0;
  int embed_dim = 0;
  double jitter = 0.0;

  void validate() const {
    if (classes.empty()) throw InputError("synth: no classes defined");
    if (n_per_class < 1) throw InputError("synth: n_per_class must be >= 1");
    if (embed_dim < static_cast<int>(classes.size())) {
      throw InputError("synth: embed_dim must be >= the class count");
    }
    if (jitter < 0.0) throw InputError("synth: jitter must be >= 0");
    for (const VmfMixture& m : classes) geoflow::validate(m);
  }
};

// The clean (jitter-free) embedding used when conditioning generation on a
// class rather than on a dataset row.
inline std::vector<double> class_embedding(const SynthSpec& spec, int cls) {
  if (cls < 0 || cls >= static_cast<int>(spec.classes.size())) {
    throw InputError("class index out of range");
  }
  std::vector<double> e(spec.embed_dim, 0.0);
  e[cls] = 1.0;
  return e;
}

// Ground-truth log-density (nats) of a class distribution at a surface point.
inline double synth_log_density(const SynthSpec& spec, int cls,
                                const UnitVec3& y) {
  if (cls < 0 || cls >= static_cast<int>(spec.classes.size())) {
    throw InputError("class index out of range");
  }
  return vmf_mixture_log_density(spec.classes[cls], y);
}

inline void shuffle_rows(Dataset& d, Rng& rng) {
  std::vector<uint64_t> perm(d.size());
  for (size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  rng.shuffle(perm);
  Dataset out;
  out.embed_dim = d.embed_dim;
  out.lat.reserve(d.size());
  out.lon.reserve(d.size());
  out.embed.reserve(d.embed.size());
  for (uint64_t i : perm) out.append(d.lat[i], d.lon[i], d.embed_row(i));
  d = std::move(out);
}

struct SynthOutput {
  Dataset train;
  Dataset eval;
};

// Draws n_per_class points from every class mixture, attaches jittered
// one-hot embeddings, holds out every tenth of each class for evaluation,
// and shuffles both splits so classes interleave.
inline SynthOutput synth_generate(const SynthSpec& spec, Rng& rng) {
  spec.validate();
  SynthOutput out;
  out.train.embed_dim = spec.embed_dim;
  out.eval.embed_dim = spec.embed_dim;
  const int n_eval = spec.n_per_class / 10;
  std::vector<double> e(spec.embed_dim);
  for (int cls = 0; cls < static_cast<int>(spec.classes.size()); ++cls) {
    for (int i = 0; i < spec.n_per_class; ++i) {
      const UnitVec3 y = vmf_mixture_sample(spec.classes[cls], rng);
      const LatLon ll = unit_to_latlon(y);
      for (int j = 0; j < spec.embed_dim; ++j) {
        e[j] = (j == cls ? 1.0 : 0.0) + spec.jitter * rng.gaussian();
      }
      Dataset& dst = (i < n_eval) ? out.eval : out.train;
      dst.append(ll.lat_deg, ll.lon_deg, e);
    }
  }
  shuffle_rows(out.train, rng);
  if (out.eval.size() > 0) shuffle_rows(out.eval, rng);
  return out;
}

}  // namespace geoflow
