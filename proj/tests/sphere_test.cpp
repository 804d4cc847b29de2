// Geometry and RNG foundations. This file also pulls in every public header
// so API drift anywhere in the library breaks the build here first.

#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "geoflow/checkpoint.hpp"
#include "geoflow/config.hpp"
#include "geoflow/data.hpp"
#include "geoflow/density.hpp"
#include "geoflow/error.hpp"
#include "geoflow/formulation.hpp"
#include "geoflow/gen.hpp"
#include "geoflow/heads.hpp"
#include "geoflow/metrics.hpp"
#include "geoflow/net.hpp"
#include "geoflow/ode.hpp"
#include "geoflow/optim.hpp"
#include "geoflow/rng.hpp"
#include "geoflow/sampler.hpp"
#include "geoflow/sched.hpp"
#include "geoflow/sphere.hpp"
#include "geoflow/vec3.hpp"
#include "geoflow/vmf.hpp"

using namespace geoflow;

TEST(Vec3, Basics) {
  const Vec3 a{1.0, 2.0, 3.0};
  const Vec3 b{-2.0, 0.5, 4.0};
  EXPECT_DOUBLE_EQ(dot(a, b), -2.0 + 1.0 + 12.0);
  const Vec3 c = cross(Vec3{1, 0, 0}, Vec3{0, 1, 0});
  EXPECT_DOUBLE_EQ(c.x, 0.0);
  EXPECT_DOUBLE_EQ(c.y, 0.0);
  EXPECT_DOUBLE_EQ(c.z, 1.0);
  EXPECT_DOUBLE_EQ(norm(Vec3{3, 4, 0}), 5.0);
  EXPECT_DOUBLE_EQ(norm_squared(a), 14.0);
}

TEST(UnitVec, ProjectRejectsNearZero) {
  EXPECT_THROW(UnitVec3::project(Vec3{0, 0, 0}), SingularityError);
  EXPECT_THROW(UnitVec3::project(Vec3{1e-13, 0, 0}), SingularityError);
  const UnitVec3 u = UnitVec3::project(Vec3{0, 0, 2.5});
  EXPECT_DOUBLE_EQ(u.vec().z, 1.0);
}

TEST(LatLon, KnownPoints) {
  const UnitVec3 np = latlon_to_unit({90.0, 0.0});
  EXPECT_NEAR(np.vec().z, 1.0, 1e-15);
  const UnitVec3 eq = latlon_to_unit({0.0, 0.0});
  EXPECT_NEAR(eq.vec().x, 1.0, 1e-15);
  const UnitVec3 e90 = latlon_to_unit({0.0, 90.0});
  EXPECT_NEAR(e90.vec().y, 1.0, 1e-15);

  EXPECT_THROW(latlon_to_unit({91.0, 0.0}), InputError);
  // Wrapped longitudes up to a full turn are tolerated on input.
  EXPECT_NO_THROW(latlon_to_unit({0.0, 181.0}));
  EXPECT_THROW(latlon_to_unit({0.0, 361.0}), InputError);
}

TEST(LatLon, PolesGetZeroLongitude) {
  const LatLon np = unit_to_latlon(UnitVec3::assume_normalized({0, 0, 1}));
  EXPECT_DOUBLE_EQ(np.lat_deg, 90.0);
  EXPECT_DOUBLE_EQ(np.lon_deg, 0.0);
  const LatLon sp = unit_to_latlon(UnitVec3::assume_normalized({0, 0, -1}));
  EXPECT_DOUBLE_EQ(sp.lat_deg, -90.0);
  EXPECT_DOUBLE_EQ(sp.lon_deg, 0.0);
}

TEST(LatLon, RoundTrip) {
  Rng rng(11);
  for (int i = 0; i < 1000; ++i) {
    const double lat = rng.uniform(-90.0, 90.0);
    const double lon = rng.uniform(-180.0, 180.0);
    const LatLon back = unit_to_latlon(latlon_to_unit({lat, lon}));
    EXPECT_NEAR(back.lat_deg, lat, 1e-9);
    EXPECT_NEAR(back.lon_deg, lon, 1e-9);
  }
}

TEST(Distance, FrozenValues) {
  // Half and quarter circumference of the 6371 km sphere.
  const double anti =
      haversine_km({0.0, 0.0}, {0.0, 180.0});
  EXPECT_NEAR(anti, 20015.086796020572, 1e-6);
  const double quarter = haversine_km({0.0, 0.0}, {90.0, 0.0});
  EXPECT_NEAR(quarter, 10007.543398010286, 1e-6);
  EXPECT_DOUBLE_EQ(haversine_km({12.5, 33.0}, {12.5, 33.0}), 0.0);
}

TEST(Distance, SymmetricAndClamped) {
  Rng rng(7);
  for (int i = 0; i < 200; ++i) {
    const UnitVec3 a = sample_uniform_sphere(rng);
    const UnitVec3 b = sample_uniform_sphere(rng);
    const double dab = geodesic_distance(a, b);
    EXPECT_DOUBLE_EQ(dab, geodesic_distance(b, a));
    EXPECT_GE(dab, 0.0);
    EXPECT_LE(dab, kPi);
  }
  // acos argument clamped: numerically |dot| can exceed 1 by rounding.
  const UnitVec3 x = UnitVec3::project(Vec3{1.0, 1e-16, 0.0});
  EXPECT_NO_THROW(geodesic_distance(x, x));
  EXPECT_DOUBLE_EQ(geodesic_distance(x, x), 0.0);
}

TEST(Tangent, ProjectionIsOrthogonal) {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const UnitVec3 x = sample_uniform_sphere(rng);
    const Vec3 w{rng.gaussian(), rng.gaussian(), rng.gaussian()};
    const TangentVec t = project_to_tangent(x, w);
    EXPECT_NEAR(dot(t.v, x.vec()), 0.0, 1e-14);
    // Projecting twice changes nothing.
    const TangentVec t2 = project_to_tangent(x, t.v);
    EXPECT_NEAR(norm(t2.v - t.v), 0.0, 1e-14);
  }
}

TEST(LogExp, RoundTrip) {
  Rng rng(5);
  for (int i = 0; i < 500; ++i) {
    const UnitVec3 x = sample_uniform_sphere(rng);
    const UnitVec3 y = sample_uniform_sphere(rng);
    if (geodesic_distance(x, y) > kPi - 1e-3) continue;
    const TangentVec t = log_map(x, y);
    EXPECT_NEAR(dot(t.v, x.vec()), 0.0, 1e-12);
    EXPECT_NEAR(norm(t.v), geodesic_distance(x, y), 1e-12);
    const UnitVec3 back = exp_map(t);
    EXPECT_NEAR(geodesic_distance(back, y), 0.0, 1e-12);
  }
}

TEST(LogExp, SmallSteps) {
  const UnitVec3 x = latlon_to_unit({37.0, -122.0});
  Vec3 e1, e2;
  orthonormal_basis(x, e1, e2);
  const UnitVec3 y = exp_map({x, 1e-10 * e1});
  EXPECT_NEAR(geodesic_distance(x, y), 1e-10, 1e-16);
  const TangentVec back = log_map(x, y);
  EXPECT_NEAR(norm(back.v), 1e-10, 1e-16);
}

TEST(LogExp, AntipodalThrows) {
  const UnitVec3 x = latlon_to_unit({0.0, 0.0});
  const UnitVec3 y = latlon_to_unit({0.0, 180.0});
  EXPECT_THROW(log_map(x, y), SingularityError);
}

TEST(Basis, Orthonormal) {
  Rng rng(19);
  for (int i = 0; i < 200; ++i) {
    const UnitVec3 x = sample_uniform_sphere(rng);
    Vec3 e1, e2;
    orthonormal_basis(x, e1, e2);
    EXPECT_NEAR(norm(e1), 1.0, 1e-14);
    EXPECT_NEAR(norm(e2), 1.0, 1e-14);
    EXPECT_NEAR(dot(e1, e2), 0.0, 1e-14);
    EXPECT_NEAR(dot(e1, x.vec()), 0.0, 1e-14);
    EXPECT_NEAR(dot(e2, x.vec()), 0.0, 1e-14);
  }
  // Stable near the axes too.
  Vec3 e1, e2;
  EXPECT_NO_THROW(orthonormal_basis(latlon_to_unit({90.0, 0.0}), e1, e2));
  EXPECT_NEAR(dot(e1, e2), 0.0, 1e-14);
}

TEST(UniformSphere, MomentsAndNorm) {
  Rng rng(23);
  Vec3 mean{0, 0, 0};
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const UnitVec3 u = sample_uniform_sphere(rng);
    EXPECT_NEAR(norm(u.vec()), 1.0, 1e-12);
    mean += u.vec();
  }
  mean *= 1.0 / n;
  // Standard error of each coordinate is ~ 1/sqrt(3n) ~ 0.004.
  EXPECT_NEAR(mean.x, 0.0, 0.02);
  EXPECT_NEAR(mean.y, 0.0, 0.02);
  EXPECT_NEAR(mean.z, 0.0, 0.02);
}

TEST(Rng, DeterministicAndSerializable) {
  Rng a(123), b(123);
  for (int i = 0; i < 100; ++i) {
    EXPECT_DOUBLE_EQ(a.uniform(), b.uniform());
    EXPECT_DOUBLE_EQ(a.gaussian(), b.gaussian());
  }
  const std::string snap = a.save_state();
  std::vector<double> expect;
  for (int i = 0; i < 50; ++i) expect.push_back(a.gaussian());
  Rng c(999);
  c.restore_state(snap);
  for (int i = 0; i < 50; ++i) EXPECT_DOUBLE_EQ(c.gaussian(), expect[i]);
  EXPECT_THROW(c.restore_state("not a state"), ParseError);
}

TEST(Rng, RangesAndShuffle) {
  Rng rng(77);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    EXPECT_GT(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 1000; ++i) {
    const std::uint64_t v = rng.integer(7);
    EXPECT_LT(v, 7u);
    seen.insert(v);
  }
  EXPECT_EQ(seen.size(), 7u);

  std::vector<std::uint64_t> perm(100);
  for (size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  rng.shuffle(perm);
  std::set<std::uint64_t> vals(perm.begin(), perm.end());
  EXPECT_EQ(vals.size(), 100u);
}
