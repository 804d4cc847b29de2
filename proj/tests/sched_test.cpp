#include <gtest/gtest.h>

#include <cmath>

#include "geoflow/sched.hpp"

using namespace geoflow;

// Reference values computed independently from the closed form
// (sig(a) - sig(a + t(b - a))) / (sig(a) - sig(b)).
TEST(Schedule, FrozenSkewedSigmoidValues) {
  const Scheduler s = make_scheduler(ScheduleKind::kSkewedSigmoid);
  EXPECT_DOUBLE_EQ(kappa(s, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(kappa(s, 1.0), 1.0);
  EXPECT_NEAR(kappa(s, 0.25), 0.3468820048552639, 1e-15);
  EXPECT_NEAR(kappa(s, 0.5), 0.8756998418272638, 1e-15);
  EXPECT_NEAR(kappa(s, 0.75), 0.9894123333202318, 1e-15);
  EXPECT_NEAR(kappa_dot(s, 0.5), 1.103264254885775, 1e-13);
}

TEST(Schedule, SymmetricSigmoidMidpoint) {
  const Scheduler s = make_scheduler(ScheduleKind::kSigmoid);
  EXPECT_EQ(s.alpha, -3.0);
  EXPECT_EQ(s.beta, 3.0);
  EXPECT_NEAR(kappa(s, 0.5), 0.5, 1e-14);
  EXPECT_DOUBLE_EQ(kappa(s, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(kappa(s, 1.0), 1.0);
}

TEST(Schedule, Linear) {
  const Scheduler s = make_scheduler(ScheduleKind::kLinear);
  for (double t : {0.0, 0.125, 0.5, 0.99, 1.0}) {
    EXPECT_DOUBLE_EQ(kappa(s, t), t);
    EXPECT_DOUBLE_EQ(kappa_dot(s, t), 1.0);
  }
}

TEST(Schedule, MonotoneAndBounded) {
  for (ScheduleKind kind : {ScheduleKind::kSkewedSigmoid, ScheduleKind::kSigmoid,
                            ScheduleKind::kLinear}) {
    const Scheduler s = make_scheduler(kind);
    double prev = -1.0;
    for (int i = 0; i <= 1000; ++i) {
      const double t = i / 1000.0;
      const double k = kappa(s, t);
      EXPECT_GT(k, prev);
      EXPECT_GE(k, 0.0);
      EXPECT_LE(k, 1.0);
      prev = k;
      EXPECT_GT(kappa_dot(s, t), 0.0);
    }
  }
}

TEST(Schedule, DerivativeMatchesFiniteDifference) {
  const Scheduler s = make_scheduler(ScheduleKind::kSkewedSigmoid);
  const double h = 1e-6;
  for (double t : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    const double fd = (kappa(s, t + h) - kappa(s, t - h)) / (2.0 * h);
    EXPECT_NEAR(kappa_dot(s, t), fd, 1e-8);
  }
}

TEST(Schedule, TimeSlackAndValidation) {
  const Scheduler s = make_scheduler(ScheduleKind::kSkewedSigmoid);
  // Integrator stages may land a hair outside [0, 1]; that is clamped.
  EXPECT_DOUBLE_EQ(kappa(s, -1e-13), 0.0);
  EXPECT_DOUBLE_EQ(kappa(s, 1.0 + 1e-13), 1.0);
  EXPECT_THROW(kappa(s, -0.01), InputError);
  EXPECT_THROW(kappa(s, 1.01), InputError);
  EXPECT_THROW(kappa(Scheduler{ScheduleKind::kSigmoid, 2.0, 2.0}, 0.5),
               InputError);
}

TEST(Schedule, NoisingRate) {
  const Scheduler s = make_scheduler(ScheduleKind::kSkewedSigmoid);
  EXPECT_THROW(beta_t(s, 0.0), NumericError);
  const double b = beta_t(s, 0.5);
  EXPECT_NEAR(b, 1.103264254885775 / 0.8756998418272638, 1e-12);
  const Scheduler lin = make_scheduler(ScheduleKind::kLinear);
  EXPECT_DOUBLE_EQ(beta_t(lin, 0.5), 2.0);
}
