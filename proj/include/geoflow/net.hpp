#pragma once

// The conditional vector-field network and its hand-written reverse-mode
// gradients.
//
// Topology (fixed at construction):
//
//   x ---- linear 3->d ----------------------------+
//                                                  v
//   [ modulated norm -> linear d->4d -> GELU ->    |   repeated n_blocks
//     linear 4d->d -> * gate -> + residual ->      |   times
//     modulated norm ]                             |
//                                                  v
//                                   linear d->out_dim
//
//   conditioning signal: fourier(noise level k) + embed(cond vector),
//   passed through SiLU; every block derives its (scale, shift, gate) and
//   trailing (scale, shift) modulation from it with its own projections.
//
// "Modulated norm" is layer norm with conditioning-driven affine terms:
// y = normalize(x) * (1 + scale) + shift. Scale enters as (1 + s) so that
// zero-initialized projections reduce to plain layer norm; together with the
// zero-initialized output linear this makes a fresh field network output
// exactly zero everywhere while keeping gradients alive.
//
// Baseline heads reuse the same trunk: the coordinate input and the noise
// features are replaced by learned stand-in vectors, and out_dim becomes the
// raw parameter block of a vMF (4) or a K-component vMF mixture (5K).

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "geoflow/error.hpp"
#include "geoflow/rng.hpp"
#include "geoflow/vec3.hpp"

namespace geoflow {

enum class HeadKind : std::uint16_t {
  kField = 0,       // 3-vector field (noise prediction or velocity)
  kVmf = 1,         // single vMF parameter head
  kVmfMixture = 2,  // K-component vMF mixture parameter head
};

struct NetConfig {
  int hidden_dim = 64;  // d, even and >= 4 (fourier features come in pairs)
  int n_blocks = 4;
  int cond_dim = 1;
  HeadKind head = HeadKind::kField;
  int mixture_comps = 3;

  int out_dim() const {
    switch (head) {
      case HeadKind::kField:
        return 3;
      case HeadKind::kVmf:
        return 4;
      case HeadKind::kVmfMixture:
        return 5 * mixture_comps;
    }
    throw InputError("NetConfig: bad head kind");
  }
  int fourier_bands() const { return hidden_dim / 2; }

  void validate() const {
    if (hidden_dim < 4 || hidden_dim % 2 != 0) {
      throw InputError("NetConfig: hidden_dim must be even and >= 4, got " +
                       std::to_string(hidden_dim));
    }
    if (n_blocks < 1) throw InputError("NetConfig: n_blocks must be >= 1");
    if (cond_dim < 1) throw InputError("NetConfig: cond_dim must be >= 1");
    if (head == HeadKind::kVmfMixture && mixture_comps < 1) {
      throw InputError("NetConfig: mixture_comps must be >= 1");
    }
  }
};

inline constexpr double kLayerNormEps = 1e-6;

// Dense row-major parameter tensor. Vectors are rows x 1.
struct Tensor {
  std::vector<double> a;
  int rows = 0;
  int cols = 0;

  void reshape(int r, int c) {
    rows = r;
    cols = c;
    a.assign(static_cast<std::size_t>(r) * c, 0.0);
  }
  double* data() { return a.data(); }
  const double* data() const { return a.data(); }
  std::size_t size() const { return a.size(); }
};

struct BlockParams {
  Tensor w1, b1;          // d -> 4d
  Tensor w2, b2;          // 4d -> d
  Tensor mod_w, mod_b;    // cond signal -> (scale, shift, gate), d -> 3d
  Tensor post_w, post_b;  // cond signal -> (scale, shift), d -> 2d
};

struct ModelParams {
  NetConfig cfg;
  Tensor in_w, in_b;          // 3 -> d
  std::vector<BlockParams> blocks;
  Tensor embed_w, embed_b;    // cond_dim -> d
  Tensor null_embed;          // d, learned stand-in for dropped conditioning
  Tensor stub_x, stub_tfeat;  // 3 and d, learned input stand-ins (heads only)
  Tensor out_w, out_b;        // d -> out_dim

  // Visits every tensor in a fixed order; this order is the checkpoint layout.
  template <class F>
  void for_each_tensor(F&& f) {
    f("in_w", in_w);
    f("in_b", in_b);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      auto& b = blocks[i];
      const std::string p = "block" + std::to_string(i) + ".";
      f((p + "w1").c_str(), b.w1);
      f((p + "b1").c_str(), b.b1);
      f((p + "w2").c_str(), b.w2);
      f((p + "b2").c_str(), b.b2);
      f((p + "mod_w").c_str(), b.mod_w);
      f((p + "mod_b").c_str(), b.mod_b);
      f((p + "post_w").c_str(), b.post_w);
      f((p + "post_b").c_str(), b.post_b);
    }
    f("embed_w", embed_w);
    f("embed_b", embed_b);
    f("null_embed", null_embed);
    f("stub_x", stub_x);
    f("stub_tfeat", stub_tfeat);
    f("out_w", out_w);
    f("out_b", out_b);
  }
  template <class F>
  void for_each_tensor(F&& f) const {
    const_cast<ModelParams*>(this)->for_each_tensor(
        [&](const char* name, Tensor& t) { f(name, static_cast<const Tensor&>(t)); });
  }
};

// All tensors allocated and zeroed.
inline ModelParams make_params(const NetConfig& cfg) {
  cfg.validate();
  ModelParams p;
  p.cfg = cfg;
  const int d = cfg.hidden_dim;
  p.in_w.reshape(d, 3);
  p.in_b.reshape(d, 1);
  p.blocks.resize(cfg.n_blocks);
  for (auto& b : p.blocks) {
    b.w1.reshape(4 * d, d);
    b.b1.reshape(4 * d, 1);
    b.w2.reshape(d, 4 * d);
    b.b2.reshape(d, 1);
    b.mod_w.reshape(3 * d, d);
    b.mod_b.reshape(3 * d, 1);
    b.post_w.reshape(2 * d, d);
    b.post_b.reshape(2 * d, 1);
  }
  p.embed_w.reshape(d, cfg.cond_dim);
  p.embed_b.reshape(d, 1);
  p.null_embed.reshape(d, 1);
  p.stub_x.reshape(3, 1);
  p.stub_tfeat.reshape(d, 1);
  p.out_w.reshape(cfg.out_dim(), d);
  p.out_b.reshape(cfg.out_dim(), 1);
  return p;
}

namespace detail {
inline void fill_fan_in_uniform(Tensor& t, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(t.cols));
  for (double& v : t.a) v = rng.uniform(-bound, bound);
}
}  // namespace detail

// Training initialization. Hidden linears get fan-in-scaled uniform weights,
// biases and all modulation projections start at zero. Field heads zero the
// output linear so the initial field vanishes identically; parameter heads
// random-init it instead (a zero output would put the vMF direction at the
// origin) and give the input stand-ins small random values so the first
// layer norm does not see an all-zero row.
inline ModelParams init_params(const NetConfig& cfg, Rng& rng) {
  ModelParams p = make_params(cfg);
  detail::fill_fan_in_uniform(p.in_w, rng);
  for (auto& b : p.blocks) {
    detail::fill_fan_in_uniform(b.w1, rng);
    detail::fill_fan_in_uniform(b.w2, rng);
  }
  detail::fill_fan_in_uniform(p.embed_w, rng);
  if (cfg.head != HeadKind::kField) {
    detail::fill_fan_in_uniform(p.out_w, rng);
    for (double& v : p.stub_x.a) v = rng.uniform(-0.5, 0.5);
    for (double& v : p.stub_tfeat.a) v = rng.uniform(-1.0, 1.0);
  }
  return p;
}

// Test helper: every tensor nonzero so gradient checks exercise all paths.
inline void randomize_all(ModelParams& p, Rng& rng, double scale = 0.3) {
  p.for_each_tensor([&](const char*, Tensor& t) {
    for (double& v : t.a) v = rng.uniform(-scale, scale);
  });
}

// Log-spaced frequencies on [1, 1000]; features interleave (sin, cos) pairs
// so k = 0 maps to (0, 1, 0, 1, ...).
inline void fourier_features(int hidden_dim, double k, double* out) {
  const int bands = hidden_dim / 2;
  for (int j = 0; j < bands; ++j) {
    const double f = std::pow(1000.0, static_cast<double>(j) / (bands - 1));
    const double phase = 2.0 * 3.14159265358979323846 * f * k;
    out[2 * j] = std::sin(phase);
    out[2 * j + 1] = std::cos(phase);
  }
}

struct Batch {
  int n = 0;
  int cond_dim = 0;
  std::vector<double> x;          // n x 3
  std::vector<double> k;          // n
  std::vector<double> cond;       // n x cond_dim
  std::vector<std::uint8_t> use_null;  // n
  std::vector<double> target;     // n x 3 (field targets or data points)

  void resize(int rows, int cdim) {
    n = rows;
    cond_dim = cdim;
    x.assign(3 * static_cast<std::size_t>(rows), 0.0);
    k.assign(rows, 0.0);
    cond.assign(static_cast<std::size_t>(rows) * cdim, 0.0);
    use_null.assign(rows, 0);
    target.assign(3 * static_cast<std::size_t>(rows), 0.0);
  }
};

// Per-batch activations kept around for the backward pass, plus backward
// scratch. Reused across calls; reallocation only happens on growth.
struct Workspace {
  struct BlockWs {
    std::vector<double> mod, hn1, istd1, a, z1, gz, m, hr, post, hn2, istd2;
  };
  std::vector<double> tf, e, s, u, xin;
  std::vector<std::vector<double>> hs;  // n_blocks + 1 stage activations
  std::vector<BlockWs> blk;
  std::vector<double> out;
  // backward scratch
  std::vector<double> dh, dhr, dz1, dgz, dm, da, dmod, dpost, du, ds, dout, dxin;
};

namespace detail {

// y(B x out) = x(B x in) . w(out x in)^T + b
inline void linear_forward(const std::vector<double>& x, const Tensor& w,
                           const Tensor& b, int n, std::vector<double>& y) {
  const int in = w.cols, out = w.rows;
  y.resize(static_cast<std::size_t>(n) * out);
  for (int i = 0; i < n; ++i) {
    const double* xi = x.data() + static_cast<std::size_t>(i) * in;
    double* yi = y.data() + static_cast<std::size_t>(i) * out;
    for (int o = 0; o < out; ++o) {
      const double* wo = w.data() + static_cast<std::size_t>(o) * in;
      double acc = b.a[o];
      for (int c = 0; c < in; ++c) acc += wo[c] * xi[c];
      yi[o] = acc;
    }
  }
}

// dw += dy^T x ; db += sum dy ; dx = dy . w  (dx optional)
inline void linear_backward(const std::vector<double>& x, const Tensor& w,
                            const std::vector<double>& dy, int n, Tensor& dw,
                            Tensor& db, std::vector<double>* dx) {
  const int in = w.cols, out = w.rows;
  for (int o = 0; o < out; ++o) {
    double* dwo = dw.data() + static_cast<std::size_t>(o) * in;
    double dbo = 0.0;
    for (int i = 0; i < n; ++i) {
      const double g = dy[static_cast<std::size_t>(i) * out + o];
      dbo += g;
      const double* xi = x.data() + static_cast<std::size_t>(i) * in;
      for (int c = 0; c < in; ++c) dwo[c] += g * xi[c];
    }
    db.a[o] += dbo;
  }
  if (dx) {
    dx->assign(static_cast<std::size_t>(n) * in, 0.0);
    for (int i = 0; i < n; ++i) {
      const double* dyi = dy.data() + static_cast<std::size_t>(i) * out;
      double* dxi = dx->data() + static_cast<std::size_t>(i) * in;
      for (int o = 0; o < out; ++o) {
        const double g = dyi[o];
        const double* wo = w.data() + static_cast<std::size_t>(o) * in;
        for (int c = 0; c < in; ++c) dxi[c] += g * wo[c];
      }
    }
  }
}

inline double gelu(double z) {
  return 0.5 * z * std::erfc(-z * 0.7071067811865475244);
}
inline double gelu_grad(double z) {
  const double cdf = 0.5 * std::erfc(-z * 0.7071067811865475244);
  const double pdf = 0.3989422804014326779 * std::exp(-0.5 * z * z);
  return cdf + z * pdf;
}
inline double silu(double s) { return s / (1.0 + std::exp(-s)); }
inline double silu_grad(double s) {
  const double sg = 1.0 / (1.0 + std::exp(-s));
  return sg * (1.0 + s * (1.0 - sg));
}

// Row-wise layer norm over d features: hn = (h - mean) / sqrt(var + eps).
inline void layer_norm(const std::vector<double>& h, int n, int d,
                       std::vector<double>& hn, std::vector<double>& istd) {
  hn.resize(h.size());
  istd.resize(n);
  for (int i = 0; i < n; ++i) {
    const double* hi = h.data() + static_cast<std::size_t>(i) * d;
    double* hni = hn.data() + static_cast<std::size_t>(i) * d;
    double mean = 0.0;
    for (int c = 0; c < d; ++c) mean += hi[c];
    mean /= d;
    double var = 0.0;
    for (int c = 0; c < d; ++c) var += (hi[c] - mean) * (hi[c] - mean);
    var /= d;
    const double is = 1.0 / std::sqrt(var + kLayerNormEps);
    istd[i] = is;
    for (int c = 0; c < d; ++c) hni[c] = (hi[c] - mean) * is;
  }
}

// dx = istd * (dhn - mean(dhn) - hn * mean(dhn * hn)), written into dx.
inline void layer_norm_backward(const std::vector<double>& hn,
                                const std::vector<double>& istd, int n, int d,
                                const std::vector<double>& dhn,
                                std::vector<double>& dx) {
  dx.resize(dhn.size());
  for (int i = 0; i < n; ++i) {
    const double* hni = hn.data() + static_cast<std::size_t>(i) * d;
    const double* di = dhn.data() + static_cast<std::size_t>(i) * d;
    double* dxi = dx.data() + static_cast<std::size_t>(i) * d;
    double m1 = 0.0, m2 = 0.0;
    for (int c = 0; c < d; ++c) {
      m1 += di[c];
      m2 += di[c] * hni[c];
    }
    m1 /= d;
    m2 /= d;
    for (int c = 0; c < d; ++c) dxi[c] = istd[i] * (di[c] - m1 - hni[c] * m2);
  }
}

}  // namespace detail

// Forward pass over a batch; leaves every intermediate in ws for backward.
// ws.out ends up n x out_dim.
inline void forward_batch(const ModelParams& p, Workspace& ws, const Batch& in) {
  const NetConfig& cfg = p.cfg;
  if (in.cond_dim != cfg.cond_dim) {
    throw InputError("forward_batch: batch cond_dim " + std::to_string(in.cond_dim) +
                     " != net cond_dim " + std::to_string(cfg.cond_dim));
  }
  const int n = in.n, d = cfg.hidden_dim;
  const bool is_field = cfg.head == HeadKind::kField;
  const std::size_t nd = static_cast<std::size_t>(n) * d;

  // Conditioning signal: fourier noise features + embedded conditioning.
  ws.tf.resize(nd);
  ws.e.resize(nd);
  ws.s.resize(nd);
  ws.u.resize(nd);
  ws.xin.resize(static_cast<std::size_t>(n) * 3);
  for (int i = 0; i < n; ++i) {
    double* tfi = ws.tf.data() + static_cast<std::size_t>(i) * d;
    if (is_field) {
      fourier_features(d, in.k[i], tfi);
    } else {
      for (int c = 0; c < d; ++c) tfi[c] = p.stub_tfeat.a[c];
    }
    double* ei = ws.e.data() + static_cast<std::size_t>(i) * d;
    if (in.use_null[i]) {
      for (int c = 0; c < d; ++c) ei[c] = p.null_embed.a[c];
    } else {
      const double* ci = in.cond.data() + static_cast<std::size_t>(i) * cfg.cond_dim;
      for (int c = 0; c < d; ++c) {
        const double* w = p.embed_w.data() + static_cast<std::size_t>(c) * cfg.cond_dim;
        double acc = p.embed_b.a[c];
        for (int q = 0; q < cfg.cond_dim; ++q) acc += w[q] * ci[q];
        ei[c] = acc;
      }
    }
    double* xi = ws.xin.data() + static_cast<std::size_t>(i) * 3;
    if (is_field) {
      xi[0] = in.x[3 * static_cast<std::size_t>(i)];
      xi[1] = in.x[3 * static_cast<std::size_t>(i) + 1];
      xi[2] = in.x[3 * static_cast<std::size_t>(i) + 2];
    } else {
      xi[0] = p.stub_x.a[0];
      xi[1] = p.stub_x.a[1];
      xi[2] = p.stub_x.a[2];
    }
  }
  for (std::size_t i = 0; i < nd; ++i) {
    ws.s[i] = ws.tf[i] + ws.e[i];
    ws.u[i] = detail::silu(ws.s[i]);
  }

  ws.hs.resize(cfg.n_blocks + 1);
  ws.blk.resize(cfg.n_blocks);
  detail::linear_forward(ws.xin, p.in_w, p.in_b, n, ws.hs[0]);

  for (int b = 0; b < cfg.n_blocks; ++b) {
    const BlockParams& bp = p.blocks[b];
    Workspace::BlockWs& bw = ws.blk[b];
    const std::vector<double>& h = ws.hs[b];

    detail::linear_forward(ws.u, bp.mod_w, bp.mod_b, n, bw.mod);
    detail::layer_norm(h, n, d, bw.hn1, bw.istd1);
    bw.a.resize(nd);
    for (int i = 0; i < n; ++i) {
      const double* mi = bw.mod.data() + static_cast<std::size_t>(i) * 3 * d;
      const double* hni = bw.hn1.data() + static_cast<std::size_t>(i) * d;
      double* ai = bw.a.data() + static_cast<std::size_t>(i) * d;
      for (int c = 0; c < d; ++c) ai[c] = hni[c] * (1.0 + mi[c]) + mi[d + c];
    }
    detail::linear_forward(bw.a, bp.w1, bp.b1, n, bw.z1);
    bw.gz.resize(bw.z1.size());
    for (std::size_t i = 0; i < bw.z1.size(); ++i) bw.gz[i] = detail::gelu(bw.z1[i]);
    detail::linear_forward(bw.gz, bp.w2, bp.b2, n, bw.m);
    bw.hr.resize(nd);
    for (int i = 0; i < n; ++i) {
      const double* mi = bw.mod.data() + static_cast<std::size_t>(i) * 3 * d;
      const double* hi = h.data() + static_cast<std::size_t>(i) * d;
      const double* mm = bw.m.data() + static_cast<std::size_t>(i) * d;
      double* hri = bw.hr.data() + static_cast<std::size_t>(i) * d;
      for (int c = 0; c < d; ++c) hri[c] = hi[c] + mi[2 * d + c] * mm[c];
    }
    detail::linear_forward(ws.u, bp.post_w, bp.post_b, n, bw.post);
    detail::layer_norm(bw.hr, n, d, bw.hn2, bw.istd2);
    ws.hs[b + 1].resize(nd);
    for (int i = 0; i < n; ++i) {
      const double* pi = bw.post.data() + static_cast<std::size_t>(i) * 2 * d;
      const double* hni = bw.hn2.data() + static_cast<std::size_t>(i) * d;
      double* ho = ws.hs[b + 1].data() + static_cast<std::size_t>(i) * d;
      for (int c = 0; c < d; ++c) ho[c] = hni[c] * (1.0 + pi[c]) + pi[d + c];
    }
  }
  detail::linear_forward(ws.hs[cfg.n_blocks], p.out_w, p.out_b, n, ws.out);
}

// Backward pass: consumes ws.dout (n x out_dim), accumulates into grads
// (same shapes as p; caller zeroes them).
inline void backward_batch(const ModelParams& p, Workspace& ws, const Batch& in,
                           ModelParams& grads) {
  const NetConfig& cfg = p.cfg;
  const int n = in.n, d = cfg.hidden_dim;
  const bool is_field = cfg.head == HeadKind::kField;
  const std::size_t nd = static_cast<std::size_t>(n) * d;

  ws.du.assign(nd, 0.0);
  detail::linear_backward(ws.hs[cfg.n_blocks], p.out_w, ws.dout, n, grads.out_w,
                          grads.out_b, &ws.dh);

  for (int b = cfg.n_blocks - 1; b >= 0; --b) {
    const BlockParams& bp = p.blocks[b];
    Workspace::BlockWs& bw = ws.blk[b];

    // trailing modulated norm: h_out = hn2 * (1 + sc2) + sh2
    ws.dpost.resize(static_cast<std::size_t>(n) * 2 * d);
    std::vector<double>& dhn2 = ws.da;  // reuse scratch
    dhn2.resize(nd);
    for (int i = 0; i < n; ++i) {
      const double* pi = bw.post.data() + static_cast<std::size_t>(i) * 2 * d;
      const double* hni = bw.hn2.data() + static_cast<std::size_t>(i) * d;
      const double* dhi = ws.dh.data() + static_cast<std::size_t>(i) * d;
      double* dpi = ws.dpost.data() + static_cast<std::size_t>(i) * 2 * d;
      double* dhni = dhn2.data() + static_cast<std::size_t>(i) * d;
      for (int c = 0; c < d; ++c) {
        dpi[c] = dhi[c] * hni[c];
        dpi[d + c] = dhi[c];
        dhni[c] = dhi[c] * (1.0 + pi[c]);
      }
    }
    {
      std::vector<double> du_part;
      detail::linear_backward(ws.u, bp.post_w, ws.dpost, n, grads.blocks[b].post_w,
                              grads.blocks[b].post_b, &du_part);
      for (std::size_t i = 0; i < nd; ++i) ws.du[i] += du_part[i];
    }
    detail::layer_norm_backward(bw.hn2, bw.istd2, n, d, dhn2, ws.dhr);

    // residual: hr = h + gate * m
    ws.dm.resize(nd);
    ws.dmod.assign(static_cast<std::size_t>(n) * 3 * d, 0.0);
    for (int i = 0; i < n; ++i) {
      const double* mi = bw.mod.data() + static_cast<std::size_t>(i) * 3 * d;
      const double* mm = bw.m.data() + static_cast<std::size_t>(i) * d;
      const double* dhri = ws.dhr.data() + static_cast<std::size_t>(i) * d;
      double* dmi = ws.dm.data() + static_cast<std::size_t>(i) * d;
      double* dmodi = ws.dmod.data() + static_cast<std::size_t>(i) * 3 * d;
      for (int c = 0; c < d; ++c) {
        dmodi[2 * d + c] = dhri[c] * mm[c];  // gate gradient
        dmi[c] = dhri[c] * mi[2 * d + c];
      }
    }
    detail::linear_backward(bw.gz, p.blocks[b].w2, ws.dm, n, grads.blocks[b].w2,
                            grads.blocks[b].b2, &ws.dgz);
    ws.dz1.resize(ws.dgz.size());
    for (std::size_t i = 0; i < ws.dgz.size(); ++i) {
      ws.dz1[i] = ws.dgz[i] * detail::gelu_grad(bw.z1[i]);
    }
    detail::linear_backward(bw.a, p.blocks[b].w1, ws.dz1, n, grads.blocks[b].w1,
                            grads.blocks[b].b1, &ws.da);

    // leading modulated norm: a = hn1 * (1 + sc1) + sh1
    std::vector<double>& dhn1 = ws.dgz;  // reuse scratch (right size n*4d >= n*d)
    dhn1.resize(nd);
    for (int i = 0; i < n; ++i) {
      const double* mi = bw.mod.data() + static_cast<std::size_t>(i) * 3 * d;
      const double* hni = bw.hn1.data() + static_cast<std::size_t>(i) * d;
      const double* dai = ws.da.data() + static_cast<std::size_t>(i) * d;
      double* dmodi = ws.dmod.data() + static_cast<std::size_t>(i) * 3 * d;
      double* dhni = dhn1.data() + static_cast<std::size_t>(i) * d;
      for (int c = 0; c < d; ++c) {
        dmodi[c] = dai[c] * hni[c];
        dmodi[d + c] = dai[c];
        dhni[c] = dai[c] * (1.0 + mi[c]);
      }
    }
    {
      std::vector<double> du_part;
      detail::linear_backward(ws.u, bp.mod_w, ws.dmod, n, grads.blocks[b].mod_w,
                              grads.blocks[b].mod_b, &du_part);
      for (std::size_t i = 0; i < nd; ++i) ws.du[i] += du_part[i];
    }
    {
      std::vector<double> dh_norm;
      detail::layer_norm_backward(bw.hn1, bw.istd1, n, d, dhn1, dh_norm);
      // residual skip: gradient flows both through the norm and directly
      for (std::size_t i = 0; i < nd; ++i) ws.dh[i] = ws.dhr[i] + dh_norm[i];
    }
  }

  detail::linear_backward(ws.xin, p.in_w, ws.dh, n, grads.in_w, grads.in_b,
                          &ws.dxin);
  if (!is_field) {
    for (int i = 0; i < n; ++i) {
      grads.stub_x.a[0] += ws.dxin[3 * static_cast<std::size_t>(i)];
      grads.stub_x.a[1] += ws.dxin[3 * static_cast<std::size_t>(i) + 1];
      grads.stub_x.a[2] += ws.dxin[3 * static_cast<std::size_t>(i) + 2];
    }
  }

  // conditioning signal
  ws.ds.resize(nd);
  for (std::size_t i = 0; i < nd; ++i) {
    ws.ds[i] = ws.du[i] * detail::silu_grad(ws.s[i]);
  }
  for (int i = 0; i < n; ++i) {
    const double* dsi = ws.ds.data() + static_cast<std::size_t>(i) * d;
    if (!is_field) {
      for (int c = 0; c < d; ++c) grads.stub_tfeat.a[c] += dsi[c];
    }
    if (in.use_null[i]) {
      for (int c = 0; c < d; ++c) grads.null_embed.a[c] += dsi[c];
    } else {
      const double* ci = in.cond.data() + static_cast<std::size_t>(i) * cfg.cond_dim;
      for (int c = 0; c < d; ++c) {
        double* gw = grads.embed_w.data() + static_cast<std::size_t>(c) * cfg.cond_dim;
        for (int q = 0; q < cfg.cond_dim; ++q) gw[q] += dsi[c] * ci[q];
        grads.embed_b.a[c] += dsi[c];
      }
    }
  }
}

// Mean squared error over the batch, loss = mean_i |out_i - target_i|^2,
// with gradients accumulated into `grads` (zeroed here).
inline double field_loss_and_grads(const ModelParams& p, Workspace& ws,
                                   const Batch& in, ModelParams& grads) {
  if (p.cfg.head != HeadKind::kField) {
    throw InputError("field_loss_and_grads: not a field-head net");
  }
  forward_batch(p, ws, in);
  grads.for_each_tensor([](const char*, Tensor& t) {
    std::fill(t.a.begin(), t.a.end(), 0.0);
  });
  const int n = in.n;
  ws.dout.resize(static_cast<std::size_t>(n) * 3);
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) {
      const double r = ws.out[3 * static_cast<std::size_t>(i) + c] -
                       in.target[3 * static_cast<std::size_t>(i) + c];
      loss += r * r;
      ws.dout[3 * static_cast<std::size_t>(i) + c] = 2.0 * r / n;
    }
  }
  backward_batch(p, ws, in, grads);
  return loss / n;
}

// Single-point field evaluation (batch of one). cond == nullptr selects the
// learned null embedding. Returns the raw (unprojected) 3-vector.
inline Vec3 eval_field(const ModelParams& p, Workspace& ws, const Vec3& x,
                       double k, const double* cond) {
  thread_local Batch one;
  if (one.n != 1 || one.cond_dim != p.cfg.cond_dim) {
    one.resize(1, p.cfg.cond_dim);
  }
  one.x[0] = x.x;
  one.x[1] = x.y;
  one.x[2] = x.z;
  one.k[0] = k;
  if (cond) {
    one.use_null[0] = 0;
    for (int q = 0; q < p.cfg.cond_dim; ++q) one.cond[q] = cond[q];
  } else {
    one.use_null[0] = 1;
    std::fill(one.cond.begin(), one.cond.end(), 0.0);
  }
  forward_batch(p, ws, one);
  return {ws.out[0], ws.out[1], ws.out[2]};
}

// Raw parameter-head outputs for a conditioning vector (heads ignore x and k).
inline void eval_head_raw(const ModelParams& p, Workspace& ws, const double* cond,
                          std::vector<double>& raw_out) {
  if (p.cfg.head == HeadKind::kField) {
    throw InputError("eval_head_raw: field-head net");
  }
  thread_local Batch one;
  if (one.n != 1 || one.cond_dim != p.cfg.cond_dim) {
    one.resize(1, p.cfg.cond_dim);
  }
  one.k[0] = 0.0;
  if (cond) {
    one.use_null[0] = 0;
    for (int q = 0; q < p.cfg.cond_dim; ++q) one.cond[q] = cond[q];
  } else {
    one.use_null[0] = 1;
  }
  forward_batch(p, ws, one);
  raw_out.assign(ws.out.begin(), ws.out.begin() + p.cfg.out_dim());
}

}  // namespace geoflow
