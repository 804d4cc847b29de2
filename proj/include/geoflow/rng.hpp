#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "geoflow/error.hpp"

namespace geoflow {

// Deterministic RNG used throughout. Wraps mt19937_64 but derives uniforms and
// gaussians itself so the engine state alone is the complete RNG state: the
// std distribution objects keep hidden internal state (normal_distribution
// caches a spare deviate) that would be lost when training state is saved for
// an exact resume.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform on the open interval (0, 1). Never returns 0, so log(u) is safe.
  double uniform() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller. The companion deviate is discarded on
  // purpose: a fixed two-draws-per-gaussian budget keeps replay exact.
  double gaussian() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

  // Uniform integer in [0, n). Rejection sampling, no modulo bias.
  std::uint64_t integer(std::uint64_t n) {
    if (n == 0) throw InputError("Rng::integer: n must be positive");
    const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
    const std::uint64_t limit = max - (max % n);
    std::uint64_t r;
    do {
      r = engine_();
    } while (r >= limit);
    return r % n;
  }

  // Fisher-Yates in-place shuffle.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[integer(i)]);
    }
  }

  // Engine state round-trip for training-state files.
  std::string save_state() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
  }

  void restore_state(const std::string& s) {
    std::istringstream is(s);
    is >> engine_;
    if (!is) throw ParseError("Rng::restore_state: malformed engine state");
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace geoflow
