#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace lrsng {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Pivot thresholds for the PD / PSD factorization tests.
struct Tolerances {
  double pd_pivot = 1e-12;
  double psd_pivot = -1e-10;
};

inline double asymmetry(const Matrix& x) {
  if (x.rows() != x.cols() || x.size() == 0) return 0.0;
  return (x - x.transpose()).cwiseAbs().maxCoeff();
}

inline Matrix symmetrized(const Matrix& x) {
  return 0.5 * (x + x.transpose());
}

inline double max_abs(const Matrix& x) {
  return x.size() == 0 ? 0.0 : x.cwiseAbs().maxCoeff();
}

namespace detail {

// Pivoted LDLᵀ of a symmetric matrix. Returns false if the factorization does
// not reproduce the input, which happens for indefinite matrices with a zero
// leading diagonal that the diagonal-pivoting scheme cannot handle.
inline bool ldlt_pivots(const Matrix& x, Vector& pivots) {
  Eigen::LDLT<Matrix> ldlt(x);
  if (ldlt.info() != Eigen::Success) return false;
  pivots = ldlt.vectorD();
  if (!pivots.allFinite()) return false;
  const double scale = std::max(1.0, max_abs(x));
  return (ldlt.reconstructedMatrix() - x).cwiseAbs().maxCoeff() <= 1e-9 * scale;
}

}  // namespace detail

inline bool is_positive_definite(const Matrix& x, double pivot_tol = 1e-12) {
  if (x.rows() != x.cols()) return false;
  if (x.size() == 0) return true;
  Vector d;
  if (!detail::ldlt_pivots(symmetrized(x), d)) return false;
  return d.minCoeff() > pivot_tol;
}

inline bool is_positive_semidefinite(const Matrix& x,
                                     double pivot_tol = -1e-10) {
  if (x.rows() != x.cols()) return false;
  if (x.size() == 0) return true;
  Vector d;
  if (!detail::ldlt_pivots(symmetrized(x), d)) return false;
  return d.minCoeff() >= pivot_tol;
}

// Symmetric square root factor F with F Fᵀ = x for a PSD x. Negative
// eigenvalues from roundoff are clamped to zero.
inline Matrix psd_factor(const Matrix& x) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrized(x));
  Vector root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal();
}

inline Matrix block_diagonal(const Matrix& a, const Matrix& b) {
  Matrix out = Matrix::Zero(a.rows() + b.rows(), a.cols() + b.cols());
  out.topLeftCorner(a.rows(), a.cols()) = a;
  out.bottomRightCorner(b.rows(), b.cols()) = b;
  return out;
}

}  // namespace lrsng
