#pragma once

// Noise schedules kappa(t): monotone increasing maps of [0,1] onto [0,1] that
// set how much of the source noise is mixed in at time t. kappa(0) = 0 is the
// data end, kappa(1) = 1 is pure noise.

#include <cmath>
#include <string>

#include "geoflow/error.hpp"

namespace geoflow {

enum class ScheduleKind {
  kSkewedSigmoid,  // sigmoid ramp over [alpha, beta], default (-3, 7)
  kSigmoid,        // symmetric sigmoid ramp, default (-3, 3)
  kLinear,         // kappa(t) = t
};

struct Scheduler {
  ScheduleKind kind = ScheduleKind::kSkewedSigmoid;
  double alpha = -3.0;
  double beta = 7.0;
};

// Family defaults; config overrides alpha/beta afterwards if it wants to.
inline Scheduler make_scheduler(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::kSkewedSigmoid:
      return {kind, -3.0, 7.0};
    case ScheduleKind::kSigmoid:
      return {kind, -3.0, 3.0};
    case ScheduleKind::kLinear:
      return {kind, 0.0, 0.0};
  }
  throw InputError("make_scheduler: bad kind");
}

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

namespace detail {
inline double checked_time(double t) {
  // Allow a hair of slack for accumulated float error in integrator stages.
  if (!(t >= -1e-12 && t <= 1.0 + 1e-12)) {
    throw InputError("schedule time " + std::to_string(t) + " outside [0, 1]");
  }
  return t < 0.0 ? 0.0 : (t > 1.0 ? 1.0 : t);
}

inline void check_sigmoid_params(const Scheduler& s) {
  if (!(s.beta > s.alpha)) {
    throw InputError("scheduler requires beta > alpha, got alpha=" +
                     std::to_string(s.alpha) + " beta=" + std::to_string(s.beta));
  }
}
}  // namespace detail

inline double kappa(const Scheduler& s, double t) {
  t = detail::checked_time(t);
  if (s.kind == ScheduleKind::kLinear) return t;
  detail::check_sigmoid_params(s);
  // Endpoints are exact by construction: the numerator vanishes at t=0 and
  // equals the denominator at t=1.
  const double sa = sigmoid(s.alpha);
  const double sb = sigmoid(s.beta);
  return (sa - sigmoid(s.alpha + t * (s.beta - s.alpha))) / (sa - sb);
}

inline double kappa_dot(const Scheduler& s, double t) {
  t = detail::checked_time(t);
  if (s.kind == ScheduleKind::kLinear) return 1.0;
  detail::check_sigmoid_params(s);
  const double u = s.alpha + t * (s.beta - s.alpha);
  const double su = sigmoid(u);
  return -(su * (1.0 - su)) * (s.beta - s.alpha) /
         (sigmoid(s.alpha) - sigmoid(s.beta));
}

// Instantaneous noising rate kappa_dot / kappa used by the diffusion
// probability-flow field. Undefined where kappa vanishes.
inline double beta_t(const Scheduler& s, double t) {
  const double k = kappa(s, t);
  if (k < 1e-12) {
    throw NumericError("beta_t: kappa(" + std::to_string(t) +
                       ") = " + std::to_string(k) + " is below 1e-12");
  }
  return kappa_dot(s, t) / k;
}

}  // namespace geoflow
