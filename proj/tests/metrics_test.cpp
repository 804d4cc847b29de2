#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "geoflow/metrics.hpp"
#include "geoflow/rng.hpp"
#include "geoflow/sphere.hpp"
#include "geoflow/vmf.hpp"

using namespace geoflow;

TEST(GeoScore, FrozenValues) {
  EXPECT_DOUBLE_EQ(geoscore(0.0), 5000.0);
  // Error equal to the scale constant: 5000 / e.
  EXPECT_NEAR(geoscore(1492.7), 1839.3972058572117, 1e-9);
  // Antipodal error: half circumference of the 6371 km sphere.
  EXPECT_NEAR(geoscore(20015.086796020572), 0.007510498633759078, 1e-12);
  EXPECT_THROW(geoscore(-1.0), InputError);
}

TEST(GeoScore, Monotone) {
  double prev = geoscore(0.0);
  for (double km : {1.0, 10.0, 100.0, 1000.0, 10000.0}) {
    const double s = geoscore(km);
    EXPECT_LT(s, prev);
    EXPECT_GT(s, 0.0);
    prev = s;
  }
}

namespace {

std::vector<UnitVec3> random_points(int n, Rng& rng) {
  std::vector<UnitVec3> v;
  v.reserve(n);
  for (int i = 0; i < n; ++i) v.push_back(sample_uniform_sphere(rng));
  return v;
}

// Reference implementation: full sort, one self-exclusion.
double knn_radius_brute(const UnitVec3& z, const std::vector<UnitVec3>& Z,
                        int k) {
  std::vector<double> d;
  bool skipped = false;
  for (const auto& p : Z) {
    if (!skipped && p.x() == z.x() && p.y() == z.y() && p.z() == z.z()) {
      skipped = true;
      continue;
    }
    d.push_back(geodesic_distance(z, p));
  }
  std::sort(d.begin(), d.end());
  return d[k - 1];
}

}  // namespace

TEST(Knn, MatchesBruteForce) {
  Rng rng(13);
  const std::vector<UnitVec3> Z = random_points(100, rng);
  for (int k : {1, 3, 7}) {
    for (const auto& z : Z) {
      EXPECT_DOUBLE_EQ(knn_radius(z, Z, k), knn_radius_brute(z, Z, k));
    }
    // Query point not in the set: nothing is excluded.
    const UnitVec3 q = sample_uniform_sphere(rng);
    EXPECT_DOUBLE_EQ(knn_radius(q, Z, k), knn_radius_brute(q, Z, k));
  }
}

TEST(Knn, ExcludesSelfExactlyOnce) {
  const UnitVec3 p = latlon_to_unit({10.0, 20.0});
  const UnitVec3 q = latlon_to_unit({11.0, 20.0});
  // Two exact copies of p: querying p skips one copy, keeps the other.
  const std::vector<UnitVec3> Z{p, p, q};
  EXPECT_DOUBLE_EQ(knn_radius(p, Z, 1), 0.0);
  EXPECT_DOUBLE_EQ(knn_radius(p, Z, 2), geodesic_distance(p, q));
  EXPECT_THROW(knn_radius(p, Z, 3), InputError);
  EXPECT_THROW(knn_radius(p, Z, 0), InputError);
}

TEST(Prdc, SelfComparisonIsPerfect) {
  Rng rng(29);
  const std::vector<UnitVec3> X = random_points(60, rng);
  const PrdcResult r = prdc(X, X, 3);
  EXPECT_DOUBLE_EQ(r.precision, 1.0);
  EXPECT_DOUBLE_EQ(r.recall, 1.0);
  EXPECT_DOUBLE_EQ(r.coverage, 1.0);
  EXPECT_GT(r.density, 0.9);
}

TEST(Prdc, DisjointClustersScoreZero) {
  Rng rng(37);
  std::vector<UnitVec3> X, Y;
  VmfParams px{latlon_to_unit({80.0, 0.0}), 500.0};
  VmfParams py{latlon_to_unit({-80.0, 0.0}), 500.0};
  for (int i = 0; i < 50; ++i) {
    X.push_back(vmf_sample(px, rng));
    Y.push_back(vmf_sample(py, rng));
  }
  const PrdcResult r = prdc(X, Y, 3);
  EXPECT_DOUBLE_EQ(r.precision, 0.0);
  EXPECT_DOUBLE_EQ(r.recall, 0.0);
  EXPECT_DOUBLE_EQ(r.density, 0.0);
  EXPECT_DOUBLE_EQ(r.coverage, 0.0);
}

TEST(Prdc, EmptyInputRejected) {
  Rng rng(1);
  const std::vector<UnitVec3> X = random_points(10, rng);
  EXPECT_THROW(prdc({}, X, 3), InputError);
  EXPECT_THROW(prdc(X, {}, 3), InputError);
}

TEST(Report, PointMetricsFromKnownErrors) {
  MetricsReport r;
  fill_point_metrics(r, {0.0, 30.0, 100.0, 5000.0});
  const double expect_score =
      (geoscore(0.0) + geoscore(30.0) + geoscore(100.0) + geoscore(5000.0)) /
      4.0;
  EXPECT_DOUBLE_EQ(r.geoscore_mean, expect_score);
  EXPECT_DOUBLE_EQ(r.haversine_mean_km, 1282.5);
  EXPECT_DOUBLE_EQ(r.haversine_median_km, 65.0);
  EXPECT_DOUBLE_EQ(r.accuracy_25km, 0.25);
  EXPECT_DOUBLE_EQ(r.accuracy_200km, 0.75);
  EXPECT_DOUBLE_EQ(r.accuracy_750km, 0.75);
  EXPECT_DOUBLE_EQ(r.accuracy_2500km, 0.75);
  EXPECT_EQ(r.n_eval, 4);
  EXPECT_THROW(fill_point_metrics(r, {}), InputError);
}

TEST(Report, TextAndCsvAreDeterministic) {
  MetricsReport r;
  fill_point_metrics(r, {12.0, 250.0, 900.0});
  r.has_nll = true;
  r.nll_bits_per_dim = -0.0421;
  r.has_prdc = true;
  r.prdc_result = {0.9, 0.8, 1.1, 0.95};
  r.n_generated = 3;

  const std::string t1 = report_text(r), t2 = report_text(r);
  EXPECT_EQ(t1, t2);
  EXPECT_NE(t1.find("geoscore_mean = "), std::string::npos);
  EXPECT_NE(t1.find("nll_bits_per_dim = "), std::string::npos);
  EXPECT_NE(t1.find("precision = "), std::string::npos);

  const std::string c1 = report_csv(r), c2 = report_csv(r);
  EXPECT_EQ(c1, c2);
  // Two lines, equal field counts.
  const size_t nl = c1.find('\n');
  ASSERT_NE(nl, std::string::npos);
  const std::string head = c1.substr(0, nl);
  const std::string row = c1.substr(nl + 1);
  EXPECT_EQ(std::count(head.begin(), head.end(), ','),
            std::count(row.begin(), row.end(), ','));
}
