#pragma once

// von Mises-Fisher distributions on S2: exact log-density, exact sampling,
// moment-matching fit, and small mixtures. These serve three roles: ground
// truth for synthetic datasets, parametric baseline heads, and closed-form
// oracles in tests.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "geoflow/error.hpp"
#include "geoflow/rng.hpp"
#include "geoflow/sphere.hpp"
#include "geoflow/vec3.hpp"

namespace geoflow {

inline constexpr double kConcentrationCap = 1e6;

struct VmfParams {
  UnitVec3 mu;
  double conc = 1.0;  // concentration, > 0
};

inline void validate(const VmfParams& p) {
  if (!(p.conc > 0.0) || !std::isfinite(p.conc)) {
    throw InputError("VmfParams: concentration must be positive and finite, got " +
                     std::to_string(p.conc));
  }
}

// log p(y) = log( c / (4 pi sinh c) ) + c <mu, y>.
// The normalizer is evaluated as log c - log(2 pi) - c - log(1 - e^{-2c}),
// which stays finite for c up to the cap (sinh c itself overflows near 710).
// 1 - e^{-2c} goes through expm1 so the c -> 0 uniform limit is exact too.
inline double vmf_log_density(const VmfParams& p, const UnitVec3& y) {
  validate(p);
  const double c = p.conc;
  const double log_norm =
      std::log(c) - std::log(2.0 * kPi) - c - std::log(-std::expm1(-2.0 * c));
  return log_norm + c * dot(p.mu.vec(), y.vec());
}

inline double uniform_log_density() { return -std::log(4.0 * kPi); }

// Mean resultant length A(c) = coth(c) - 1/c, the expected <mu, y>.
inline double vmf_mean_resultant(double c) {
  if (!(c > 0.0)) throw InputError("vmf_mean_resultant: c must be positive");
  if (c < 1e-3) {
    // series: c/3 - c^3/45 + 2c^5/945
    const double c2 = c * c;
    return c / 3.0 - c * c2 / 45.0 + 2.0 * c2 * c2 * c / 945.0;
  }
  return 1.0 / std::tanh(c) - 1.0 / c;
}

// E[log2 p(y)] under the distribution itself (negative entropy in bits).
// Closed form: log C(c) + c A(c), converted to bits.
inline double vmf_mean_log2_density(double c) {
  if (!(c > 0.0)) throw InputError("vmf_mean_log2_density: c must be positive");
  const double log_norm =
      std::log(c) - std::log(2.0 * kPi) - c - std::log(-std::expm1(-2.0 * c));
  return (log_norm + c * vmf_mean_resultant(c)) / std::log(2.0);
}

// Exact sampler: inverse-CDF draw of w = <mu, y>, uniform azimuth, rotated so
// the pole sits at mu.
//   w = 1 + log(u + (1-u) e^{-2c}) / c,  u ~ U(0,1)
inline UnitVec3 vmf_sample(const VmfParams& p, Rng& rng) {
  validate(p);
  const double c = p.conc;
  const double u = rng.uniform();
  const double w =
      1.0 + std::log(u + (1.0 - u) * std::exp(-2.0 * c)) / c;
  const double s = std::sqrt(std::max(0.0, 1.0 - w * w));
  const double phi = rng.uniform(0.0, 2.0 * kPi);
  Vec3 e1, e2;
  orthonormal_basis(p.mu, e1, e2);
  return UnitVec3::project(s * std::cos(phi) * e1 + s * std::sin(phi) * e2 +
                           w * p.mu.vec());
}

struct VmfFit {
  VmfParams params;
  bool conc_capped = false;  // sample was too concentrated to resolve
};

// Maximum-likelihood fit: mu is the normalized resultant, the concentration
// solves A(c) = rbar by bisection (A is strictly increasing onto (0, 1)).
inline VmfFit fit_vmf_mle(const std::vector<UnitVec3>& samples) {
  if (samples.empty()) throw InputError("fit_vmf_mle: empty sample set");
  Vec3 sum{};
  for (const auto& s : samples) sum += s.vec();
  const double rbar = norm(sum) / static_cast<double>(samples.size());
  if (rbar < 1e-6) {
    throw NumericError(
        "fit_vmf_mle: resultant length " + std::to_string(rbar) +
        " is below 1e-6; sample is too dispersed to define a concentration");
  }
  const UnitVec3 mu = UnitVec3::project(sum);
  if (rbar >= vmf_mean_resultant(kConcentrationCap)) {
    return {{mu, kConcentrationCap}, true};
  }
  double lo = 1e-8, hi = kConcentrationCap;
  for (int i = 0; i < 200 && (hi - lo) > 1e-12 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    (vmf_mean_resultant(mid) < rbar ? lo : hi) = mid;
  }
  return {{mu, 0.5 * (lo + hi)}, false};
}

// ---------------------------------------------------------------------------
// Mixtures

struct VmfMixture {
  std::vector<VmfParams> comps;
  std::vector<double> weights;  // sum to 1
};

inline void validate(const VmfMixture& m) {
  if (m.comps.empty() || m.comps.size() != m.weights.size()) {
    throw InputError("VmfMixture: components and weights must be non-empty and match");
  }
  double sum = 0.0;
  for (double w : m.weights) {
    if (!(w >= 0.0)) throw InputError("VmfMixture: negative weight");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw InputError("VmfMixture: weights sum to " + std::to_string(sum) +
                     ", expected 1");
  }
  for (const auto& c : m.comps) validate(c);
}

inline double vmf_mixture_log_density(const VmfMixture& m, const UnitVec3& y) {
  validate(m);
  // log-sum-exp over components
  double max_term = -1e300;
  std::vector<double> terms(m.comps.size());
  for (std::size_t i = 0; i < m.comps.size(); ++i) {
    terms[i] = m.weights[i] <= 0.0
                   ? -1e300
                   : std::log(m.weights[i]) + vmf_log_density(m.comps[i], y);
    max_term = std::max(max_term, terms[i]);
  }
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - max_term);
  return max_term + std::log(acc);
}

inline UnitVec3 vmf_mixture_sample(const VmfMixture& m, Rng& rng) {
  validate(m);
  double u = rng.uniform();
  std::size_t pick = m.comps.size() - 1;
  for (std::size_t i = 0; i < m.weights.size(); ++i) {
    if (u < m.weights[i]) {
      pick = i;
      break;
    }
    u -= m.weights[i];
  }
  return vmf_sample(m.comps[pick], rng);
}

// ---------------------------------------------------------------------------
// Parametric heads: map raw network outputs to distribution parameters.
// Layouts:
//   single vMF  (4 values):  [mu_raw x3, conc_raw]
//   mixture of K (5K values): per component [mu_raw x3, conc_raw, weight_logit]

inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
inline double sigmoid_head(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline VmfParams vmf_head(const double* raw) {
  const Vec3 m{raw[0], raw[1], raw[2]};
  if (norm(m) < 1e-12) {
    throw SingularityError("vmf_head: direction output is numerically zero");
  }
  return {UnitVec3::project(m), softplus(raw[3])};
}

inline VmfMixture vmf_mixture_head(const double* raw, int k) {
  if (k < 1) throw InputError("vmf_mixture_head: k must be >= 1");
  VmfMixture mix;
  mix.comps.reserve(k);
  mix.weights.resize(k);
  double max_logit = -1e300;
  for (int i = 0; i < k; ++i) max_logit = std::max(max_logit, raw[5 * i + 4]);
  double z = 0.0;
  for (int i = 0; i < k; ++i) {
    mix.comps.push_back(vmf_head(raw + 5 * i));
    mix.weights[i] = std::exp(raw[5 * i + 4] - max_logit);
    z += mix.weights[i];
  }
  for (double& w : mix.weights) w /= z;
  return mix;
}

namespace detail {
// d/dc of -log C(c) pieces: dlogC/dc = 1/c - 1 - 2 e^{-2c} / (1 - e^{-2c}).
inline double dlog_norm_dconc(double c) {
  const double em = -std::expm1(-2.0 * c);  // 1 - e^{-2c}
  return 1.0 / c - 1.0 - 2.0 * std::exp(-2.0 * c) / em;
}

struct HeadTerm {
  double log_p;       // component log density at y
  Vec3 d_mu_raw;      // gradient of log_p wrt the raw direction
  double d_conc_raw;  // gradient wrt the raw concentration
};

inline HeadTerm vmf_head_term(const double* raw, const UnitVec3& y) {
  const Vec3 m{raw[0], raw[1], raw[2]};
  const double mn = norm(m);
  if (mn < 1e-12) {
    throw SingularityError("vmf head gradient: direction output is numerically zero");
  }
  const Vec3 mu = (1.0 / mn) * m;
  const double c = softplus(raw[3]);
  const double em = -std::expm1(-2.0 * c);
  const double log_norm = std::log(c) - std::log(2.0 * kPi) - c - std::log(em);
  const double mu_dot_y = dot(mu, y.vec());

  HeadTerm t;
  t.log_p = log_norm + c * mu_dot_y;
  // dlogp/dmu = c*y, pushed through mu = m/|m|: (I - mu mu^T)/|m|.
  const Vec3 cy = c * y.vec();
  t.d_mu_raw = (1.0 / mn) * (cy - dot(cy, mu) * mu);
  t.d_conc_raw = (dlog_norm_dconc(c) + mu_dot_y) * sigmoid_head(raw[3]);
  return t;
}
}  // namespace detail

// Negative log-likelihood (nats) of y under the single-vMF head, with the
// gradient wrt the 4 raw outputs. Used to train the baseline by backprop.
inline double vmf_head_nll_grad(const double* raw, const UnitVec3& y,
                                double* d_raw) {
  const auto t = detail::vmf_head_term(raw, y);
  d_raw[0] = -t.d_mu_raw.x;
  d_raw[1] = -t.d_mu_raw.y;
  d_raw[2] = -t.d_mu_raw.z;
  d_raw[3] = -t.d_conc_raw;
  return -t.log_p;
}

// Same for the K-component mixture head (5K raw values, layout above).
// Gradients combine per-component terms weighted by their posterior
// responsibilities; weight-logit gradients are responsibility - softmax.
inline double vmf_mixture_head_nll_grad(const double* raw, int k,
                                        const UnitVec3& y, double* d_raw) {
  if (k < 1) throw InputError("vmf_mixture_head_nll_grad: k must be >= 1");
  std::vector<detail::HeadTerm> terms(k);
  std::vector<double> logits(k), logw(k);
  double max_logit = -1e300;
  for (int i = 0; i < k; ++i) {
    terms[i] = detail::vmf_head_term(raw + 5 * i, y);
    logits[i] = raw[5 * i + 4];
    max_logit = std::max(max_logit, logits[i]);
  }
  double z = 0.0;
  for (int i = 0; i < k; ++i) z += std::exp(logits[i] - max_logit);
  const double log_z = max_logit + std::log(z);

  double max_term = -1e300;
  for (int i = 0; i < k; ++i) {
    logw[i] = logits[i] - log_z + terms[i].log_p;  // log w_i p_i(y)
    max_term = std::max(max_term, logw[i]);
  }
  double acc = 0.0;
  for (int i = 0; i < k; ++i) acc += std::exp(logw[i] - max_term);
  const double log_p = max_term + std::log(acc);

  for (int i = 0; i < k; ++i) {
    const double resp = std::exp(logw[i] - log_p);        // posterior of comp i
    const double soft = std::exp(logits[i] - log_z);      // prior weight
    d_raw[5 * i + 0] = -resp * terms[i].d_mu_raw.x;
    d_raw[5 * i + 1] = -resp * terms[i].d_mu_raw.y;
    d_raw[5 * i + 2] = -resp * terms[i].d_mu_raw.z;
    d_raw[5 * i + 3] = -resp * terms[i].d_conc_raw;
    d_raw[5 * i + 4] = -(resp - soft);
  }
  return -log_p;
}

}  // namespace geoflow
