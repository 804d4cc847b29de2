#pragma once

// Deterministic reverse-time samplers for all three formulations, classifier
// free guidance, and an ensemble selector that reranks candidates by an
// externally supplied score.

#include <cmath>
#include <cstdio>
#include <functional>
#include <vector>

#include "geoflow/error.hpp"
#include "geoflow/formulation.hpp"
#include "geoflow/net.hpp"
#include "geoflow/rng.hpp"
#include "geoflow/sched.hpp"
#include "geoflow/sphere.hpp"

namespace geoflow {

// Conditional and unconditional field evaluations combined on the raw network
// output: (1 + w) f(x | c) - w f(x | null). With no conditioning vector (or
// w == 0) this reduces to a single forward pass. Callers choose raw vs EMA
// weights by passing the corresponding parameter set.
inline Vec3 guided_field(const ModelParams& params, const Vec3& x,
                         double kap, const double* cond, double omega) {
  thread_local Workspace ws;
  if (cond == nullptr || omega == 0.0) {
    return eval_field(params, ws, x, kap, cond);
  }
  const Vec3 fc = eval_field(params, ws, x, kap, cond);
  const Vec3 fn = eval_field(params, ws, x, kap, nullptr);
  return (1.0 + omega) * fc - omega * fn;
}

// One reverse update for the noise-prediction parameterization. Reconstructs
// the clean-point estimate from the predicted noise, then re-noises it to the
// earlier time. At kappa == 1 the reconstruction is 0/0; the clean estimate
// is taken as the origin, which matches starting the chain from pure noise.
inline Vec3 ddim_step(const Vec3& x, const Vec3& eps_hat,
                      const Scheduler& sched, double t, double dt) {
  const double k_now = kappa(sched, t);
  const double k_prev = kappa(sched, t - dt);
  Vec3 x0_hat{0.0, 0.0, 0.0};
  if (k_now < 1.0 - 1e-12) {
    x0_hat = (1.0 / std::sqrt(1.0 - k_now)) * (x - std::sqrt(k_now) * eps_hat);
  }
  return std::sqrt(1.0 - k_prev) * x0_hat + std::sqrt(k_prev) * eps_hat;
}

// One explicit Euler update against the learned velocity.
inline Vec3 fm_euler_step(const Vec3& x, const Vec3& v_hat, double dt) {
  return x - dt * v_hat;
}

// One geodesic update on the sphere: project the raw output to the tangent
// plane, then walk backwards along it.
inline UnitVec3 rfm_step(const UnitVec3& x, const Vec3& psi_raw, double dt) {
  const Vec3 psi = project_to_tangent(x, psi_raw).v;
  return exp_map({x, -dt * psi});
}

// Integrates the reverse process from pure noise at t = 1 down to t = 0 on a
// uniform grid of n_steps updates and returns the resulting surface point.
// cond may be null for unconditional sampling.
inline UnitVec3 sample_point(const ModelParams& params, Formulation form,
                             const Scheduler& sched, const double* cond,
                             double omega, int n_steps, Rng& rng) {
  if (n_steps < 1) throw InputError("sample_point: n_steps must be >= 1");
  const double dt = 1.0 / n_steps;

  if (form == Formulation::kRfmS2) {
    UnitVec3 x = sample_uniform_sphere(rng);
    for (int i = 0; i < n_steps; ++i) {
      const double t = static_cast<double>(n_steps - i) / n_steps;
      const Vec3 raw = guided_field(params, x.vec(), kappa(sched, t), cond, omega);
      x = rfm_step(x, raw, dt);
    }
    return x;
  }

  Vec3 x{rng.gaussian(), rng.gaussian(), rng.gaussian()};
  for (int i = 0; i < n_steps; ++i) {
    const double t = static_cast<double>(n_steps - i) / n_steps;
    const Vec3 out = guided_field(params, x, kappa(sched, t), cond, omega);
    if (form == Formulation::kDiffusionR3) {
      x = ddim_step(x, out, sched, t, dt);
    } else {
      x = fm_euler_step(x, out, dt);
    }
  }
  return UnitVec3::project(x);
}

// Draws n_candidates points and keeps the one with the highest score
// (typically an unguided log-density). Candidates whose score evaluation
// fails numerically are skipped; if every candidate fails, the first one is
// returned and a warning is printed to stderr.
inline UnitVec3 sample_point_ensemble(
    const ModelParams& params, Formulation form, const Scheduler& sched,
    const double* cond, double omega, int n_steps, int n_candidates, Rng& rng,
    const std::function<double(const UnitVec3&)>& score) {
  if (n_candidates < 1) {
    throw InputError("sample_point_ensemble: n_candidates must be >= 1");
  }
  std::vector<UnitVec3> cands;
  cands.reserve(n_candidates);
  for (int i = 0; i < n_candidates; ++i) {
    cands.push_back(
        sample_point(params, form, sched, cond, omega, n_steps, rng));
  }
  if (n_candidates == 1) return cands[0];

  int best = -1;
  double best_score = 0.0;
  for (int i = 0; i < n_candidates; ++i) {
    double s;
    try {
      s = score(cands[i]);
    } catch (const NumericError&) {
      continue;
    }
    if (!std::isfinite(s)) continue;
    if (best < 0 || s > best_score) {
      best = i;
      best_score = s;
    }
  }
  if (best < 0) {
    std::fprintf(stderr,
                 "warning: ensemble scoring failed for all %d candidates; "
                 "keeping the first draw\n",
                 n_candidates);
    return cands[0];
  }
  return cands[best];
}

}  // namespace geoflow
