#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace tubekit {

/// Deterministic random source. Draws come from std::mt19937_64 (whose output
/// sequence is fixed by the standard) and are mapped to doubles with explicit
/// arithmetic, so streams are reproducible across platforms and toolchains.
/// std::uniform_real_distribution et al. are deliberately avoided: their
/// output is implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer in [lo, hi] via rejection-free modulo over a wide range;
  /// bias is negligible for the narrow ranges used here and, more to the
  /// point, deterministic.
  int uniform_int(int lo, int hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(eng_() % span);
  }

  /// Standard normal via Box-Muller on explicit uniforms.
  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double two_pi = 6.283185307179586476925286766559;
    spare_ = r * std::sin(two_pi * u2);
    have_spare_ = true;
    return r * std::cos(two_pi * u2);
  }

 private:
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace tubekit
