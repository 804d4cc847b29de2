#pragma once

// Exact log-density evaluation by integrating the instantaneous change of
// variables alongside the flow: push the query point forward to noise time
// while accumulating the field divergence, then add the base log-density.

#include <cmath>
#include <functional>
#include <vector>

#include "geoflow/error.hpp"
#include "geoflow/formulation.hpp"
#include "geoflow/net.hpp"
#include "geoflow/ode.hpp"
#include "geoflow/sampler.hpp"
#include "geoflow/sched.hpp"
#include "geoflow/sphere.hpp"
#include "geoflow/vmf.hpp"

namespace geoflow {

using TimeField3 = std::function<Vec3(const Vec3&, double)>;

// Central-difference divergence of a time-dependent field in R^3.
inline double divergence3(const TimeField3& field, const Vec3& x, double t,
                          double h) {
  double div = 0.0;
  for (int i = 0; i < 3; ++i) {
    Vec3 hi = x, lo = x;
    (&hi.x)[i] += h;
    (&lo.x)[i] -= h;
    const Vec3 fp = field(hi, t);
    const Vec3 fm = field(lo, t);
    div += ((&fp.x)[i] - (&fm.x)[i]) / (2.0 * h);
  }
  return div;
}

// Divergence of a tangent field on the sphere, estimated in an orthonormal
// tangent basis at x with geodesic probes. The raw field values at the probe
// points are projected onto their own tangent planes before differencing.
inline double tangent_divergence(const TimeField3& field, const UnitVec3& x,
                                 double t, double h) {
  Vec3 basis[2];
  orthonormal_basis(x, basis[0], basis[1]);
  double div = 0.0;
  for (int i = 0; i < 2; ++i) {
    const UnitVec3 hi = exp_map({x, h * basis[i]});
    const UnitVec3 lo = exp_map({x, -h * basis[i]});
    const Vec3 fp = project_to_tangent(hi, field(hi.vec(), t)).v;
    const Vec3 fm = project_to_tangent(lo, field(lo.vec(), t)).v;
    div += dot(fp - fm, basis[i]) / (2.0 * h);
  }
  return div;
}

struct DensityConfig {
  SolverConfig solver;
  double fd_h = 1e-4;     // finite-difference step for divergence probes
  double guidance = 0.0;  // omega applied to the model field during the solve
};

// log p(y) for a flow in R^3 whose forward map integrates dx/dt = field from
// t_lo (data time) to t_hi (noise time). base_log evaluates the noise
// distribution at the transported point.
inline double log_density_r3(const TimeField3& field, const Vec3& y,
                             double t_lo, double t_hi,
                             const std::function<double(const Vec3&)>& base_log,
                             const SolverConfig& solver, double fd_h) {
  std::vector<double> y0{y.x, y.y, y.z, 0.0};
  OdeRhs rhs = [&](double t, const std::vector<double>& s,
                   std::vector<double>& ds) {
    const Vec3 x{s[0], s[1], s[2]};
    const Vec3 v = field(x, t);
    ds[0] = v.x;
    ds[1] = v.y;
    ds[2] = v.z;
    ds[3] = divergence3(field, x, t, fd_h);
  };
  const OdeResult r = rk45_solve(rhs, y0, t_lo, t_hi, solver);
  const Vec3 end{r.y[0], r.y[1], r.y[2]};
  return base_log(end) + r.y[3];
}

// Same change-of-variables solve for a tangent field on the sphere. The state
// is renormalized after every accepted step, the divergence is the tangent
// one, and the base distribution is uniform on the surface.
inline double log_density_s2(const TimeField3& tangent_field, const UnitVec3& y,
                             double t_lo, double t_hi,
                             const SolverConfig& solver, double fd_h) {
  std::vector<double> y0{y.vec().x, y.vec().y, y.vec().z, 0.0};
  OdeRhs rhs = [&](double t, const std::vector<double>& s,
                   std::vector<double>& ds) {
    const UnitVec3 x = UnitVec3::project(Vec3{s[0], s[1], s[2]});
    const Vec3 v = project_to_tangent(x, tangent_field(x.vec(), t)).v;
    ds[0] = v.x;
    ds[1] = v.y;
    ds[2] = v.z;
    ds[3] = tangent_divergence(tangent_field, x, t, fd_h);
  };
  OdePostStep renorm = [](std::vector<double>& s) {
    const UnitVec3 x = UnitVec3::project(Vec3{s[0], s[1], s[2]});
    s[0] = x.vec().x;
    s[1] = x.vec().y;
    s[2] = x.vec().z;
  };
  const OdeResult r = rk45_solve(rhs, y0, t_lo, t_hi, solver, renorm);
  return uniform_log_density() + r.y[3];
}

// The probability-flow velocity for each formulation, wrapped as a plain
// time-dependent field. cond may be null for the unconditional density, and
// the parameter set passed in (raw or EMA) is the one evaluated.
inline TimeField3 model_velocity_field(const ModelParams& params,
                                       Formulation form,
                                       const Scheduler& sched,
                                       const double* cond,
                                       const DensityConfig& cfg) {
  const double omega = cfg.guidance;
  switch (form) {
    case Formulation::kFlowR3:
    case Formulation::kRfmS2:
      return [&params, &sched, cond, omega](const Vec3& x, double t) {
        return guided_field(params, x, kappa(sched, t), cond, omega);
      };
    case Formulation::kDiffusionR3:
      // v = -(1/2) beta(t) (x - eps_hat / sqrt(kappa)); beta = kdot / kappa.
      return [&params, &sched, cond, omega](const Vec3& x, double t) {
        const double kap = kappa(sched, t);
        const double beta = beta_t(sched, t);
        const Vec3 eps_hat = guided_field(params, x, kap, cond, omega);
        const Vec3 drift = x - (1.0 / std::sqrt(kap)) * eps_hat;
        return -0.5 * beta * drift;
      };
  }
  throw InputError("model_velocity_field: bad formulation");
}

// The diffusion velocity is singular at both endpoints (beta blows up at
// t = 0, the noise reconstruction at t = 1), so its solve is clipped.
inline constexpr double kDiffusionTimeClip = 1e-5;

// Exact model log-density (nats) at a surface point. For the Euclidean
// formulations the base is a standard Gaussian in R^3; for the spherical one
// it is the uniform surface density.
inline double model_log_density(const ModelParams& params, Formulation form,
                                const Scheduler& sched, const UnitVec3& y,
                                const double* cond, const DensityConfig& cfg) {
  const TimeField3 field = model_velocity_field(params, form, sched, cond, cfg);
  if (form == Formulation::kRfmS2) {
    return log_density_s2(field, y, 0.0, 1.0, cfg.solver, cfg.fd_h);
  }
  const auto gauss3 = [](const Vec3& x) {
    return -1.5 * std::log(2.0 * kPi) - 0.5 * norm_squared(x);
  };
  double t_lo = 0.0, t_hi = 1.0;
  if (form == Formulation::kDiffusionR3) {
    t_lo = kDiffusionTimeClip;
    t_hi = 1.0 - kDiffusionTimeClip;
  }
  return log_density_r3(field, y.vec(), t_lo, t_hi, gauss3, cfg.solver,
                        cfg.fd_h);
}

struct NllResult {
  double bits_per_dim = 0.0;
  int n_failed = 0;  // points whose density solve failed numerically
};

// Mean negative log2-density per coordinate over n indexed evaluations (the
// handle sees the index so each point can carry its own conditioning).
// Evaluations that fail are excluded from the mean and counted; if every one
// fails the result would be meaningless, so that raises instead.
inline NllResult mean_nll_bits_per_dim(
    int n, const std::function<double(int)>& log_density_nats_at) {
  if (n < 1) throw InputError("mean_nll_bits_per_dim: empty set");
  NllResult out;
  double total = 0.0;
  int n_ok = 0;
  for (int i = 0; i < n; ++i) {
    double lp;
    try {
      lp = log_density_nats_at(i);
    } catch (const NumericError&) {
      ++out.n_failed;
      continue;
    }
    if (!std::isfinite(lp)) {
      ++out.n_failed;
      continue;
    }
    total += lp;
    ++n_ok;
  }
  if (n_ok == 0) {
    throw NumericError("mean_nll_bits_per_dim: all density solves failed");
  }
  out.bits_per_dim = -(total / n_ok) / std::log(2.0) / 3.0;
  return out;
}

struct LocalizabilityResult {
  double mean_log2_density = 0.0;
  int n_failed = 0;
};

// Expected log2-density of a generator's own samples under a density handle:
// draw n points, score each, average. Higher means mass is more concentrated.
inline LocalizabilityResult localizability(
    int n, const std::function<UnitVec3()>& draw,
    const std::function<double(const UnitVec3&)>& log_density_nats) {
  if (n < 1) throw InputError("localizability: n must be >= 1");
  LocalizabilityResult out;
  double total = 0.0;
  int n_ok = 0;
  for (int i = 0; i < n; ++i) {
    const UnitVec3 y = draw();
    double lp;
    try {
      lp = log_density_nats(y);
    } catch (const NumericError&) {
      ++out.n_failed;
      continue;
    }
    if (!std::isfinite(lp)) {
      ++out.n_failed;
      continue;
    }
    total += lp / std::log(2.0);
    ++n_ok;
  }
  if (n_ok == 0) throw NumericError("localizability: all evaluations failed");
  out.mean_log2_density = total / n_ok;
  return out;
}

}  // namespace geoflow
