#pragma once

// Evaluation metrics.
//
// Point-prediction side: haversine error statistics, a bounded exponential
// score (5000 at zero error, e-fold drop every 1492.7 km), and accuracy at
// fixed radii. Distribution side: k-NN manifold precision/recall/density/
// coverage between a real and a generated sample set, all in geodesic
// radians. Everything here is brute force; evaluation sets are small.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "geoflow/error.hpp"
#include "geoflow/sphere.hpp"

namespace geoflow {

inline constexpr double kGeoScoreMax = 5000.0;
inline constexpr double kGeoScoreScaleKm = 1492.7;
inline constexpr double kAccuracyRadiiKm[] = {25.0, 200.0, 750.0, 2500.0};

inline double geoscore(double error_km) {
  if (!(error_km >= 0.0)) {
    throw InputError("geoscore: negative distance " + std::to_string(error_km));
  }
  return kGeoScoreMax * std::exp(-error_km / kGeoScoreScaleKm);
}

// Radius of the k-NN ball around z with respect to Z, geodesic radians.
// If z is itself an element of Z (exact value match), one such occurrence is
// excluded so a point is never its own neighbor.
inline double knn_radius(const UnitVec3& z, const std::vector<UnitVec3>& Z, int k) {
  if (k < 1) throw InputError("knn_radius: k must be >= 1");
  std::vector<double> d;
  d.reserve(Z.size());
  bool excluded_self = false;
  for (const auto& p : Z) {
    if (!excluded_self && p.x() == z.x() && p.y() == z.y() && p.z() == z.z()) {
      excluded_self = true;
      continue;
    }
    d.push_back(geodesic_distance(z, p));
  }
  if (static_cast<std::size_t>(k) > d.size()) {
    throw InputError("knn_radius: k=" + std::to_string(k) + " but only " +
                     std::to_string(d.size()) + " neighbors available");
  }
  std::nth_element(d.begin(), d.begin() + (k - 1), d.end());
  return d[k - 1];
}

struct PrdcResult {
  double precision = 0.0;
  double recall = 0.0;
  double density = 0.0;
  double coverage = 0.0;
};

// k-NN manifold metrics between real points X and generated points Y:
//   precision: fraction of y inside some ball B(x, r_k(x, X))
//   recall:    fraction of x inside some ball B(y, r_k(y, Y))
//   density:   mean over y of (number of x-balls containing y) / k
//   coverage:  fraction of x whose ball contains at least one y
inline PrdcResult prdc(const std::vector<UnitVec3>& X,
                       const std::vector<UnitVec3>& Y, int k = 3) {
  if (X.empty() || Y.empty()) throw InputError("prdc: empty sample set");
  const std::size_t n = X.size(), m = Y.size();

  std::vector<double> rx(n), ry(m);
  for (std::size_t i = 0; i < n; ++i) rx[i] = knn_radius(X[i], X, k);
  for (std::size_t j = 0; j < m; ++j) ry[j] = knn_radius(Y[j], Y, k);

  std::size_t in_precision = 0, covered = 0, in_recall = 0;
  double density_hits = 0.0;
  std::vector<bool> x_covered(n, false);
  for (std::size_t j = 0; j < m; ++j) {
    std::size_t balls = 0;
    bool inside_any = false;
    for (std::size_t i = 0; i < n; ++i) {
      const double dij = geodesic_distance(Y[j], X[i]);
      if (dij <= rx[i]) {
        ++balls;
        inside_any = true;
        x_covered[i] = true;
      }
    }
    if (inside_any) ++in_precision;
    density_hits += static_cast<double>(balls);
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (x_covered[i]) ++covered;
    for (std::size_t j = 0; j < m; ++j) {
      if (geodesic_distance(X[i], Y[j]) <= ry[j]) {
        ++in_recall;
        break;
      }
    }
  }

  PrdcResult r;
  r.precision = static_cast<double>(in_precision) / static_cast<double>(m);
  r.recall = static_cast<double>(in_recall) / static_cast<double>(n);
  r.density = density_hits / (static_cast<double>(k) * static_cast<double>(m));
  r.coverage = static_cast<double>(covered) / static_cast<double>(n);
  return r;
}

struct MetricsReport {
  double geoscore_mean = 0.0;
  double haversine_mean_km = 0.0;
  double haversine_median_km = 0.0;
  double accuracy_25km = 0.0;
  double accuracy_200km = 0.0;
  double accuracy_750km = 0.0;
  double accuracy_2500km = 0.0;
  double nll_bits_per_dim = 0.0;
  int nll_failures = 0;
  bool has_nll = false;
  PrdcResult prdc_result;
  bool has_prdc = false;
  int n_eval = 0;
  int n_generated = 0;
};

// Point metrics from per-item geodesic errors (km).
inline void fill_point_metrics(MetricsReport& r, std::vector<double> errors_km) {
  if (errors_km.empty()) throw InputError("fill_point_metrics: no errors");
  const double n = static_cast<double>(errors_km.size());
  double score = 0.0, mean = 0.0;
  double acc[4] = {0, 0, 0, 0};
  for (double e : errors_km) {
    score += geoscore(e);
    mean += e;
    for (int a = 0; a < 4; ++a) {
      if (e <= kAccuracyRadiiKm[a]) acc[a] += 1.0;
    }
  }
  std::sort(errors_km.begin(), errors_km.end());
  const std::size_t mid = errors_km.size() / 2;
  r.geoscore_mean = score / n;
  r.haversine_mean_km = mean / n;
  r.haversine_median_km = errors_km.size() % 2
                              ? errors_km[mid]
                              : 0.5 * (errors_km[mid - 1] + errors_km[mid]);
  r.accuracy_25km = acc[0] / n;
  r.accuracy_200km = acc[1] / n;
  r.accuracy_750km = acc[2] / n;
  r.accuracy_2500km = acc[3] / n;
  r.n_eval = static_cast<int>(errors_km.size());
}

namespace detail {
inline void append_kv(std::string& out, const char* key, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  out += key;
  out += " = ";
  out += buf;
  out += "\n";
}
inline void append_num(std::string& out, double v, bool first) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  if (!first) out += ",";
  out += buf;
}
}  // namespace detail

inline std::string report_text(const MetricsReport& r) {
  std::string out;
  detail::append_kv(out, "geoscore_mean", r.geoscore_mean);
  detail::append_kv(out, "haversine_mean_km", r.haversine_mean_km);
  detail::append_kv(out, "haversine_median_km", r.haversine_median_km);
  detail::append_kv(out, "accuracy_25km", r.accuracy_25km);
  detail::append_kv(out, "accuracy_200km", r.accuracy_200km);
  detail::append_kv(out, "accuracy_750km", r.accuracy_750km);
  detail::append_kv(out, "accuracy_2500km", r.accuracy_2500km);
  if (r.has_nll) {
    detail::append_kv(out, "nll_bits_per_dim", r.nll_bits_per_dim);
    detail::append_kv(out, "nll_failures", r.nll_failures);
  }
  if (r.has_prdc) {
    detail::append_kv(out, "precision", r.prdc_result.precision);
    detail::append_kv(out, "recall", r.prdc_result.recall);
    detail::append_kv(out, "density", r.prdc_result.density);
    detail::append_kv(out, "coverage", r.prdc_result.coverage);
  }
  detail::append_kv(out, "n_eval", r.n_eval);
  detail::append_kv(out, "n_generated", r.n_generated);
  return out;
}

inline std::string report_csv(const MetricsReport& r) {
  std::string head =
      "geoscore_mean,haversine_mean_km,haversine_median_km,accuracy_25km,"
      "accuracy_200km,accuracy_750km,accuracy_2500km";
  std::string row;
  detail::append_num(row, r.geoscore_mean, true);
  detail::append_num(row, r.haversine_mean_km, false);
  detail::append_num(row, r.haversine_median_km, false);
  detail::append_num(row, r.accuracy_25km, false);
  detail::append_num(row, r.accuracy_200km, false);
  detail::append_num(row, r.accuracy_750km, false);
  detail::append_num(row, r.accuracy_2500km, false);
  if (r.has_nll) {
    head += ",nll_bits_per_dim,nll_failures";
    detail::append_num(row, r.nll_bits_per_dim, false);
    detail::append_num(row, r.nll_failures, false);
  }
  if (r.has_prdc) {
    head += ",precision,recall,density,coverage";
    detail::append_num(row, r.prdc_result.precision, false);
    detail::append_num(row, r.prdc_result.recall, false);
    detail::append_num(row, r.prdc_result.density, false);
    detail::append_num(row, r.prdc_result.coverage, false);
  }
  head += ",n_eval,n_generated";
  detail::append_num(row, r.n_eval, false);
  detail::append_num(row, r.n_generated, false);
  return head + "\n" + row + "\n";
}

}  // namespace geoflow
