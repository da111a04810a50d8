#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "lrsng/linalg.hpp"

namespace lrsng {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent random stream for (seed, index).
//
// Derivation, stable across versions: the engine is std::mt19937_64 seeded
// with splitmix64(splitmix64(seed) ^ index). Uniforms take the top 53 bits of
// one engine draw. Normals use Box-Muller on two uniforms and hand out both
// values before drawing again. Nothing here depends on the standard library's
// distribution classes, whose output is implementation-defined.
class Stream {
 public:
  Stream(std::uint64_t seed, std::uint64_t index)
      : engine_(splitmix64(splitmix64(seed) ^ index)) {}

  // Uniform on [0, 1).
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
  }

  bool bernoulli(double p) {
    // Always consume one draw so the stream layout is independent of p.
    return uniform() < p;
  }

  Vector normal_vector(Eigen::Index n) {
    Vector z(n);
    for (Eigen::Index i = 0; i < n; ++i) z(i) = normal();
    return z;
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Samples mean + F z with F Fᵀ = cov. Works for singular covariances.
class GaussianSampler {
 public:
  GaussianSampler(Vector mean, const Matrix& cov)
      : mean_(std::move(mean)), factor_(psd_factor(cov)) {}

  Vector operator()(Stream& s) const {
    return mean_ + factor_ * s.normal_vector(mean_.size());
  }

 private:
  Vector mean_;
  Matrix factor_;
};

}  // namespace lrsng
