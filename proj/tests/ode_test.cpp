#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "geoflow/ode.hpp"
#include "geoflow/sphere.hpp"

using namespace geoflow;

TEST(Ode, ExponentialGrowth) {
  OdeRhs rhs = [](double, const std::vector<double>& y,
                  std::vector<double>& dy) { dy[0] = y[0]; };
  const OdeResult r = rk45_solve(rhs, {1.0}, 0.0, 1.0, {});
  EXPECT_NEAR(r.y[0], std::exp(1.0), 1e-4);
  EXPECT_GT(r.n_accepted, 0);
  EXPECT_GT(r.n_rhs, 0);
}

TEST(Ode, BackwardIntegration) {
  OdeRhs rhs = [](double, const std::vector<double>& y,
                  std::vector<double>& dy) { dy[0] = y[0]; };
  const OdeResult r = rk45_solve(rhs, {std::exp(1.0)}, 1.0, 0.0, {});
  EXPECT_NEAR(r.y[0], 1.0, 1e-4);
}

TEST(Ode, HarmonicOscillator) {
  // y = (sin t, cos t); at t = pi the state is (0, -1).
  OdeRhs rhs = [](double, const std::vector<double>& y,
                  std::vector<double>& dy) {
    dy[0] = y[1];
    dy[1] = -y[0];
  };
  const OdeResult r = rk45_solve(rhs, {0.0, 1.0}, 0.0, kPi, {});
  EXPECT_NEAR(r.y[0], 0.0, 1e-4);
  EXPECT_NEAR(r.y[1], -1.0, 1e-4);
}

TEST(Ode, ToleranceControlsError) {
  OdeRhs rhs = [](double t, const std::vector<double>& y,
                  std::vector<double>& dy) { dy[0] = std::cos(t) * y[0]; };
  // Exact solution exp(sin t).
  SolverConfig loose;
  loose.rtol = 1e-3;
  loose.atol = 1e-5;
  SolverConfig tight;
  tight.rtol = 1e-9;
  tight.atol = 1e-11;
  const double exact = std::exp(std::sin(2.0));
  const double e_loose =
      std::abs(rk45_solve(rhs, {1.0}, 0.0, 2.0, loose).y[0] - exact);
  const double e_tight =
      std::abs(rk45_solve(rhs, {1.0}, 0.0, 2.0, tight).y[0] - exact);
  EXPECT_LT(e_tight, e_loose);
  EXPECT_LT(e_tight, 1e-8);
}

TEST(Ode, LandsExactlyOnEndpoint) {
  double last_t = -1.0;
  OdeRhs rhs = [&](double t, const std::vector<double>& y,
                   std::vector<double>& dy) {
    last_t = t;
    dy[0] = 1.0;
  };
  const OdeResult r = rk45_solve(rhs, {0.0}, 0.0, 0.37, {});
  EXPECT_NEAR(r.y[0], 0.37, 1e-12);
  EXPECT_LE(last_t, 0.37 + 1e-12);
}

TEST(Ode, PostStepHookRuns) {
  OdeRhs rhs = [](double, const std::vector<double>& y,
                  std::vector<double>& dy) { dy[0] = y[0]; };
  int calls = 0;
  OdePostStep hook = [&](std::vector<double>& y) {
    ++calls;
    y[0] = std::min(y[0], 1.5);
  };
  const OdeResult r = rk45_solve(rhs, {1.0}, 0.0, 1.0, {}, hook);
  EXPECT_GT(calls, 0);
  EXPECT_LE(r.y[0], 1.5 + 1e-9);
}

TEST(Ode, StiffProblemRaises) {
  OdeRhs rhs = [](double, const std::vector<double>& y,
                  std::vector<double>& dy) { dy[0] = -1e12 * y[0]; };
  EXPECT_THROW(rk45_solve(rhs, {1.0}, 0.0, 1.0, {}), StiffnessError);
}

TEST(Ode, StepBudgetRaises) {
  OdeRhs rhs = [](double, const std::vector<double>& y,
                  std::vector<double>& dy) {
    dy[0] = y[1];
    dy[1] = -y[0];
  };
  SolverConfig cfg;
  cfg.max_steps = 3;
  EXPECT_THROW(rk45_solve(rhs, {0.0, 1.0}, 0.0, 100.0, cfg), NumericError);
}

TEST(Ode, NonFiniteStateRaises) {
  OdeRhs rhs = [](double, const std::vector<double>& y,
                  std::vector<double>& dy) { dy[0] = y[0] / 0.0; };
  EXPECT_THROW(rk45_solve(rhs, {1.0}, 0.0, 1.0, {}), NumericError);
}
