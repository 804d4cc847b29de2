#pragma once

// Adaptive Dormand-Prince 5(4) integrator for small dense states.
//
// The embedded 4th-order solution drives the error estimate; step size is
// adjusted with a PI controller (Hairer/Wanner style). An optional post_step
// hook runs after every accepted step so constrained flows (e.g. states that
// must stay on the sphere) can re-project before drift accumulates.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "geoflow/error.hpp"

namespace geoflow {

struct SolverConfig {
  double rtol = 1e-5;
  double atol = 1e-7;
  double h_init = 0.0;    // 0 = (t1 - t0) / 100
  double h_min = 1e-10;   // below this the problem is declared stiff
  int max_steps = 100000;  // accepted + rejected attempts
};

using OdeRhs =
    std::function<void(double t, const std::vector<double>& y, std::vector<double>& dy)>;
using OdePostStep = std::function<void(std::vector<double>& y)>;

struct OdeResult {
  std::vector<double> y;
  int n_accepted = 0;
  int n_rejected = 0;
  int n_rhs = 0;
};

namespace detail {
inline std::string state_string(double t, const std::vector<double>& y) {
  std::string s = "t=" + std::to_string(t) + " y=[";
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(y[i]);
  }
  return s + "]";
}
}  // namespace detail

inline OdeResult rk45_solve(const OdeRhs& rhs, std::vector<double> y0, double t0,
                            double t1, const SolverConfig& cfg = {},
                            const OdePostStep& post_step = nullptr) {
  // Dormand-Prince tableau. b5 is the 5th-order propagating solution (== a7x,
  // making the last stage FSAL), d is b5 - b4 for the error estimate.
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                          a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33,
                          a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                          b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  static constexpr double d1 = b1 - 5179.0 / 57600, d3 = b3 - 7571.0 / 16695,
                          d4 = b4 - 393.0 / 640, d5 = b5 + 92097.0 / 339200,
                          d6 = b6 - 187.0 / 2100, d7 = -1.0 / 40;

  const std::size_t n = y0.size();
  if (n == 0) throw InputError("rk45_solve: empty state");
  if (t1 == t0) return {std::move(y0), 0, 0, 0};
  if (!(cfg.rtol > 0.0) || !(cfg.atol > 0.0)) {
    throw InputError("rk45_solve: tolerances must be positive");
  }

  const double dir = t1 > t0 ? 1.0 : -1.0;
  double t = t0;
  double h = cfg.h_init > 0.0 ? dir * cfg.h_init : (t1 - t0) / 100.0;

  OdeResult res;
  res.y = std::move(y0);
  std::vector<double> k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n);
  std::vector<double> ytmp(n), ynew(n);

  rhs(t, res.y, k1);
  ++res.n_rhs;

  double err_prev = 1.0;
  bool k1_fresh = true;

  for (int attempt = 0; attempt < cfg.max_steps; ++attempt) {
    if (std::abs(h) < cfg.h_min) {
      throw StiffnessError("rk45_solve: step underflow (" + std::to_string(h) +
                           ") at " + detail::state_string(t, res.y) +
                           "; the field is too stiff for the tolerance");
    }
    // Land on t1 exactly.
    if ((t + h - t1) * dir > 0.0) h = t1 - t;

    if (!k1_fresh) {
      rhs(t, res.y, k1);
      ++res.n_rhs;
      k1_fresh = true;
    }
    for (std::size_t i = 0; i < n; ++i) ytmp[i] = res.y[i] + h * a21 * k1[i];
    rhs(t + c2 * h, ytmp, k2);
    for (std::size_t i = 0; i < n; ++i)
      ytmp[i] = res.y[i] + h * (a31 * k1[i] + a32 * k2[i]);
    rhs(t + c3 * h, ytmp, k3);
    for (std::size_t i = 0; i < n; ++i)
      ytmp[i] = res.y[i] + h * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
    rhs(t + c4 * h, ytmp, k4);
    for (std::size_t i = 0; i < n; ++i)
      ytmp[i] = res.y[i] +
                h * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
    rhs(t + c5 * h, ytmp, k5);
    for (std::size_t i = 0; i < n; ++i)
      ytmp[i] = res.y[i] + h * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] +
                                a64 * k4[i] + a65 * k5[i]);
    rhs(t + h, ytmp, k6);
    for (std::size_t i = 0; i < n; ++i)
      ynew[i] = res.y[i] + h * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] +
                                b5 * k5[i] + b6 * k6[i]);
    rhs(t + h, ynew, k7);
    res.n_rhs += 6;

    // Scaled RMS error of the embedded difference.
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = h * (d1 * k1[i] + d3 * k3[i] + d4 * k4[i] + d5 * k5[i] +
                            d6 * k6[i] + d7 * k7[i]);
      const double scale =
          cfg.atol + cfg.rtol * std::max(std::abs(res.y[i]), std::abs(ynew[i]));
      err += (e / scale) * (e / scale);
    }
    err = std::sqrt(err / static_cast<double>(n));
    if (!std::isfinite(err)) {
      throw NumericError("rk45_solve: non-finite state at " +
                         detail::state_string(t, res.y));
    }

    if (err <= 1.0) {
      t += h;
      res.y = ynew;
      ++res.n_accepted;
      if (post_step) {
        post_step(res.y);
        k1_fresh = false;  // projection moved the state; FSAL slope is stale
      } else {
        k1 = k7;  // FSAL: first slope of the next step
      }
      if (t == t1 || std::abs(t - t1) < 1e-15 * std::max(1.0, std::abs(t1))) {
        return res;
      }
      // PI controller (accepted branch): react to this error, damp with the
      // previous one.
      const double e = std::max(err, 1e-10);
      double fac = 0.9 * std::pow(e, -0.17) * std::pow(err_prev, 0.04);
      fac = std::min(5.0, std::max(0.2, fac));
      err_prev = e;
      h *= fac;
    } else {
      ++res.n_rejected;
      const double fac = std::max(0.2, 0.9 * std::pow(err, -0.2));
      h *= std::min(1.0, fac);
    }
  }
  throw NumericError("rk45_solve: exceeded " + std::to_string(cfg.max_steps) +
                     " step attempts at " + detail::state_string(t, res.y));
}

}  // namespace geoflow
