#pragma once

// Model serialization.
//
// Inference checkpoint (.ckpt), magic "GFCK": header (format version, head
// kind, net shape) followed by every parameter tensor as little-endian f32 in
// declaration order, raw weights first, then the EMA set. Bit-exact
// round-trips: load(save(x)) == x at f32 precision.
//
// Training-state sidecar (.state), magic "GFST": everything exact resume
// needs that the inference format does not carry: f64 parameters, EMA, AdamW
// moments, step counter, RNG engine state, and the current epoch's shuffled
// order/position.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "geoflow/error.hpp"
#include "geoflow/net.hpp"
#include "geoflow/optim.hpp"
#include "geoflow/rng.hpp"

namespace geoflow {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace detail {

template <class T>
void put(std::ofstream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::ifstream& is, const std::string& what) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw ParseError("checkpoint: truncated while reading " + what);
  return v;
}

inline void put_header(std::ofstream& os, const char* magic, const NetConfig& cfg) {
  os.write(magic, 4);
  put<std::uint16_t>(os, 1);  // format version
  put<std::uint16_t>(os, static_cast<std::uint16_t>(cfg.head));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(cfg.hidden_dim));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(cfg.n_blocks));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(cfg.cond_dim));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(cfg.mixture_comps));
}

inline NetConfig get_header(std::ifstream& is, const char* magic,
                            const std::string& path) {
  char m[4];
  is.read(m, 4);
  if (!is || std::memcmp(m, magic, 4) != 0) {
    throw ParseError(path + ": bad magic, not a " + std::string(magic, 4) + " file");
  }
  const auto version = get<std::uint16_t>(is, "version");
  if (version != 1) {
    throw ParseError(path + ": unsupported format version " + std::to_string(version));
  }
  NetConfig cfg;
  const auto head = get<std::uint16_t>(is, "head kind");
  if (head > 2) throw ParseError(path + ": bad head kind " + std::to_string(head));
  cfg.head = static_cast<HeadKind>(head);
  cfg.hidden_dim = static_cast<int>(get<std::uint32_t>(is, "hidden_dim"));
  cfg.n_blocks = static_cast<int>(get<std::uint32_t>(is, "n_blocks"));
  cfg.cond_dim = static_cast<int>(get<std::uint32_t>(is, "cond_dim"));
  cfg.mixture_comps = static_cast<int>(get<std::uint32_t>(is, "mixture_comps"));
  cfg.validate();
  return cfg;
}

inline void put_tensors_f32(std::ofstream& os, const ModelParams& p) {
  p.for_each_tensor([&](const char*, const Tensor& t) {
    for (double v : t.a) put<float>(os, static_cast<float>(v));
  });
}

inline void get_tensors_f32(std::ifstream& is, ModelParams& p,
                            const std::string& path) {
  p.for_each_tensor([&](const char* name, Tensor& t) {
    for (double& v : t.a) {
      v = static_cast<double>(get<float>(is, std::string(name) + " in " + path));
    }
  });
}

inline void put_tensors_f64(std::ofstream& os, const ModelParams& p) {
  p.for_each_tensor([&](const char*, const Tensor& t) {
    os.write(reinterpret_cast<const char*>(t.a.data()),
             static_cast<std::streamsize>(t.a.size() * sizeof(double)));
  });
}

inline void get_tensors_f64(std::ifstream& is, ModelParams& p,
                            const std::string& path) {
  p.for_each_tensor([&](const char* name, Tensor& t) {
    is.read(reinterpret_cast<char*>(t.a.data()),
            static_cast<std::streamsize>(t.a.size() * sizeof(double)));
    if (!is) {
      throw ParseError(path + ": truncated while reading " + std::string(name));
    }
  });
}

}  // namespace detail

struct Checkpoint {
  NetConfig cfg;
  ModelParams raw;
  ModelParams ema;
};

inline void save_checkpoint(const std::string& path, const ModelParams& raw,
                            const ModelParams& ema) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw InputError("save_checkpoint: cannot open " + path);
  detail::put_header(os, "GFCK", raw.cfg);
  detail::put_tensors_f32(os, raw);
  detail::put_tensors_f32(os, ema);
  if (!os) throw InputError("save_checkpoint: write failed for " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("load_checkpoint: cannot open " + path);
  Checkpoint c;
  c.cfg = detail::get_header(is, "GFCK", path);
  c.raw = make_params(c.cfg);
  c.ema = make_params(c.cfg);
  detail::get_tensors_f32(is, c.raw, path);
  detail::get_tensors_f32(is, c.ema, path);
  is.peek();
  if (!is.eof()) throw ParseError(path + ": trailing bytes after checkpoint data");
  return c;
}

struct ResumeState {
  TrainState train;
  std::string rng_state;
  std::vector<std::uint64_t> epoch_perm;
  std::uint64_t epoch_pos = 0;
};

inline void save_train_state(const std::string& path, const TrainState& st,
                             const Rng& rng,
                             const std::vector<std::uint64_t>& epoch_perm,
                             std::uint64_t epoch_pos) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw InputError("save_train_state: cannot open " + path);
  detail::put_header(os, "GFST", st.params.cfg);
  detail::put<std::uint64_t>(os, static_cast<std::uint64_t>(st.step));
  const std::string rs = rng.save_state();
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(rs.size()));
  os.write(rs.data(), static_cast<std::streamsize>(rs.size()));
  detail::put<std::uint64_t>(os, static_cast<std::uint64_t>(epoch_perm.size()));
  os.write(reinterpret_cast<const char*>(epoch_perm.data()),
           static_cast<std::streamsize>(epoch_perm.size() * sizeof(std::uint64_t)));
  detail::put<std::uint64_t>(os, epoch_pos);
  detail::put_tensors_f64(os, st.params);
  detail::put_tensors_f64(os, st.ema);
  detail::put_tensors_f64(os, st.m);
  detail::put_tensors_f64(os, st.v);
  if (!os) throw InputError("save_train_state: write failed for " + path);
}

inline ResumeState load_train_state(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("load_train_state: cannot open " + path);
  const NetConfig cfg = detail::get_header(is, "GFST", path);
  ResumeState r;
  r.train.step = static_cast<long>(detail::get<std::uint64_t>(is, "step"));
  const auto rs_len = detail::get<std::uint32_t>(is, "rng length");
  if (rs_len > (1u << 20)) throw ParseError(path + ": implausible rng state size");
  r.rng_state.resize(rs_len);
  is.read(r.rng_state.data(), rs_len);
  if (!is) throw ParseError(path + ": truncated rng state");
  const auto perm_len = detail::get<std::uint64_t>(is, "perm length");
  if (perm_len > (1ull << 32)) throw ParseError(path + ": implausible perm size");
  r.epoch_perm.resize(perm_len);
  is.read(reinterpret_cast<char*>(r.epoch_perm.data()),
          static_cast<std::streamsize>(perm_len * sizeof(std::uint64_t)));
  if (!is) throw ParseError(path + ": truncated permutation");
  r.epoch_pos = detail::get<std::uint64_t>(is, "perm position");
  r.train.params = make_params(cfg);
  r.train.ema = make_params(cfg);
  r.train.m = make_params(cfg);
  r.train.v = make_params(cfg);
  detail::get_tensors_f64(is, r.train.params, path);
  detail::get_tensors_f64(is, r.train.ema, path);
  detail::get_tensors_f64(is, r.train.m, path);
  detail::get_tensors_f64(is, r.train.v, path);
  return r;
}

}  // namespace geoflow
