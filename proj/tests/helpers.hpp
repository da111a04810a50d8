#pragma once

#include <cstdint>

#include "lrsng/linalg.hpp"
#include "lrsng/model.hpp"
#include "lrsng/random.hpp"

namespace lrsng::fixtures {

inline Matrix random_matrix(Stream& rng, int rows, int cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = scale * rng.uniform(-1.0, 1.0);
  return m;
}

// G Gᵀ + floor·I.
inline Matrix random_spd(Stream& rng, int n, double floor) {
  const Matrix g = random_matrix(rng, n, n);
  return symmetrized(g * g.transpose() + floor * Matrix::Identity(n, n));
}

inline Matrix random_diagonal(Stream& rng, int n, double lo, double hi) {
  Matrix d = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) d(i, i) = rng.uniform(lo, hi);
  return d;
}

// A random game satisfying the standing assumptions, with diagonal
// covariances so it also works in tree mode.
inline GameSpec random_spec(std::uint64_t seed, int n, int m1, int m2, int N,
                            double p = 0.6) {
  Stream rng(seed, 0);
  GameSpec s;
  s.n = n;
  s.m1 = m1;
  s.m2 = m2;
  s.N = N;
  s.p = p;
  s.A = random_matrix(rng, n, n, 0.9);
  s.BL = random_matrix(rng, n, m1);
  s.BR = random_matrix(rng, n, m2);
  s.QL = random_spd(rng, n, 0.1);
  s.QR = random_spd(rng, n, 0.1);
  s.SL = random_spd(rng, m1, 0.5);
  s.SR = random_spd(rng, m1, 0.5);
  s.ML = random_spd(rng, m2, 0.5);
  s.MR = random_spd(rng, m2, 0.5);
  s.PL_term = random_spd(rng, n, 0.1);
  s.PR_term = random_spd(rng, n, 0.1);
  s.mu = random_matrix(rng, n, 1);
  s.Sigma_x0 = random_diagonal(rng, n, 0.2, 1.0);
  s.Sigma_w = random_diagonal(rng, n, 0.1, 0.5);
  return s;
}

inline Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

}  // namespace lrsng::fixtures
