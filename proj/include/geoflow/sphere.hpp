#pragma once

// Geometry of the unit sphere S2 embedded in R3: strong types for points on
// the sphere and vectors in its tangent planes, exponential/logarithm maps,
// geodesic distance, lat/lon conversion, and uniform sampling.
//
// Conventions:
//   - angles are radians unless a name says _deg / _km,
//   - latitude in [-90, 90] deg, longitude in (-180, 180] deg, poles get lon 0,
//   - distances on the Earth use a 6371 km sphere.

#include <algorithm>
#include <cmath>

#include "geoflow/error.hpp"
#include "geoflow/rng.hpp"
#include "geoflow/vec3.hpp"

namespace geoflow {

inline constexpr double kEarthRadiusKm = 6371.0;
inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kDegPerRad = 180.0 / kPi;

// log_map domain margin: inputs closer than this (radians) to antipodal are
// rejected, the direction of the geodesic is numerically meaningless there.
inline constexpr double kAntipodalMargin = 1e-6;

// Below this vector magnitude the exp/log maps switch to second-order series
// to avoid 0/0 in sin(t)/t.
inline constexpr double kSeriesThreshold = 1e-8;

// A point on S2. Construction is explicit about whether the input still needs
// normalizing, so downstream code can rely on |v| == 1.
class UnitVec3 {
 public:
  UnitVec3() : v_{1.0, 0.0, 0.0} {}

  // Normalizes v. Throws SingularityError when |v| is too small to define a
  // direction (the zero vector has no meaningful projection).
  static UnitVec3 project(const Vec3& v) {
    const double n = norm(v);
    if (n < 1e-12) {
      throw SingularityError("UnitVec3::project: vector norm " +
                             std::to_string(n) + " is below 1e-12");
    }
    return UnitVec3(Vec3{v.x / n, v.y / n, v.z / n});
  }

  // Caller guarantees |v| == 1 already (e.g. output of a closed-form rotation).
  static UnitVec3 assume_normalized(const Vec3& v) { return UnitVec3(v); }

  const Vec3& vec() const { return v_; }
  double x() const { return v_.x; }
  double y() const { return v_.y; }
  double z() const { return v_.z; }

 private:
  explicit UnitVec3(const Vec3& v) : v_(v) {}
  Vec3 v_;
};

// An ambient 3-vector constrained to the tangent plane of `base`.
struct TangentVec {
  UnitVec3 base;
  Vec3 v;
};

struct LatLon {
  double lat_deg = 0.0;
  double lon_deg = 0.0;
};

inline double clamp_unit(double x) { return std::clamp(x, -1.0, 1.0); }

inline UnitVec3 latlon_to_unit(const LatLon& p) {
  if (!(p.lat_deg >= -90.0 && p.lat_deg <= 90.0)) {
    throw InputError("latlon_to_unit: latitude " + std::to_string(p.lat_deg) +
                     " outside [-90, 90]");
  }
  if (!(p.lon_deg >= -360.0 && p.lon_deg <= 360.0)) {
    throw InputError("latlon_to_unit: longitude " + std::to_string(p.lon_deg) +
                     " outside [-360, 360]");
  }
  const double lat = p.lat_deg / kDegPerRad;
  const double lon = p.lon_deg / kDegPerRad;
  const double cl = std::cos(lat);
  return UnitVec3::assume_normalized(
      {cl * std::cos(lon), cl * std::sin(lon), std::sin(lat)});
}

inline LatLon unit_to_latlon(const UnitVec3& u) {
  // atan2(0, 0) == 0, which realizes the "poles get longitude 0" convention
  // without a special case. atan2 returns (-pi, pi]; -pi cannot occur for
  // y == +-0 with x < 0 giving pi, so lon lands in (-180, 180].
  const double lat = std::asin(clamp_unit(u.z()));
  double lon = std::atan2(u.y(), u.x());
  if (lon <= -kPi) lon = kPi;  // fold the open end of atan2's range
  return {lat * kDegPerRad, lon * kDegPerRad};
}

inline double geodesic_distance(const UnitVec3& a, const UnitVec3& b) {
  // atan2 of chord length against co-chord length. Unlike acos of the dot
  // product this stays fully accurate at both ends: identical points give
  // exactly 0 and antipodal points exactly pi.
  return 2.0 * std::atan2(norm(a.vec() - b.vec()), norm(a.vec() + b.vec()));
}

inline double haversine_km(const LatLon& a, const LatLon& b) {
  return kEarthRadiusKm * geodesic_distance(latlon_to_unit(a), latlon_to_unit(b));
}

// Removes the radial component of w at x. The result lives in T_x S2.
inline TangentVec project_to_tangent(const UnitVec3& x, const Vec3& w) {
  return {x, w - dot(w, x.vec()) * x.vec()};
}

// Riemannian logarithm: the tangent vector at x pointing along the minimizing
// geodesic to y, with |log_map(x, y)| == geodesic_distance(x, y).
inline TangentVec log_map(const UnitVec3& x, const UnitVec3& y) {
  const double c = clamp_unit(dot(x.vec(), y.vec()));
  const double theta = std::acos(c);
  if (theta > kPi - kAntipodalMargin) {
    throw SingularityError(
        "log_map: points are antipodal within " + std::to_string(kAntipodalMargin) +
        " rad (separation " + std::to_string(theta) + "), direction undefined");
  }
  const Vec3 perp = y.vec() - c * x.vec();  // exactly tangent at x
  // theta / sin(theta), series below the threshold where both vanish.
  const double scale = theta < kSeriesThreshold
                           ? 1.0 + theta * theta / 6.0
                           : theta / std::sin(theta);
  return {x, scale * perp};
}

// Riemannian exponential: walk from t.base along the geodesic with initial
// velocity t.v for arclength |t.v|.
inline UnitVec3 exp_map(const TangentVec& t) {
  const double n = norm(t.v);
  Vec3 r;
  if (n < kSeriesThreshold) {
    // cos n ~ 1 - n^2/2, sin(n)/n ~ 1 - n^2/6; error O(n^4) is below double
    // resolution here.
    r = (1.0 - 0.5 * n * n) * t.base.vec() + (1.0 - n * n / 6.0) * t.v;
  } else {
    r = std::cos(n) * t.base.vec() + (std::sin(n) / n) * t.v;
  }
  // |r| == 1 analytically; renormalize to keep round-trip drift at the
  // rounding floor instead of letting it accumulate.
  return UnitVec3::project(r);
}

// Deterministic orthonormal basis (e1, e2) of the tangent plane at x.
// Anchored on the smallest component of x for stability near the axes.
inline void orthonormal_basis(const UnitVec3& x, Vec3& e1, Vec3& e2) {
  const double ax = std::abs(x.x()), ay = std::abs(x.y()), az = std::abs(x.z());
  Vec3 anchor;
  if (ax <= ay && ax <= az) {
    anchor = {1.0, 0.0, 0.0};
  } else if (ay <= az) {
    anchor = {0.0, 1.0, 0.0};
  } else {
    anchor = {0.0, 0.0, 1.0};
  }
  const Vec3 c = cross(x.vec(), anchor);
  const double n = norm(c);
  e1 = {c.x / n, c.y / n, c.z / n};
  e2 = cross(x.vec(), e1);  // already unit: |x|=|e1|=1 and x _|_ e1
}

// Uniform point on S2: normalized isotropic gaussian. The resample loop on a
// near-zero draw fires with probability ~1e-18 per draw but keeps project()
// from ever throwing here.
inline UnitVec3 sample_uniform_sphere(Rng& rng) {
  for (;;) {
    const Vec3 g{rng.gaussian(), rng.gaussian(), rng.gaussian()};
    if (norm(g) >= 1e-6) return UnitVec3::project(g);
  }
}

}  // namespace geoflow
