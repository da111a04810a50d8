#pragma once

#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lrsng/errors.hpp"
#include "lrsng/linalg.hpp"

namespace lrsng {

// Problem data for the local/remote game
//
//   x_{k+1} = A x_k + BL u^L_k + BR u^R_k + w_k,     k = 0..N,
//
// with stage costs for k = 0..N and a terminal cost on x_{N+1}. The remote
// player receives x_k with probability p at each stage.
struct GameSpec {
  int n = 0;
  int m1 = 0;
  int m2 = 0;
  int N = 0;

  Matrix A, BL, BR;
  Matrix QL, QR;            // state weights
  Matrix SL, SR;            // local-input weights, m1×m1
  Matrix ML, MR;            // remote-input weights, m2×m2
  Matrix PL_term, PR_term;  // terminal weights on x_{N+1}

  double p = 1.0;
  Vector mu;
  Matrix Sigma_x0;
  Matrix Sigma_w;
};

struct ValidationReport {
  std::vector<std::string> violations;

  bool ok() const { return violations.empty(); }

  bool mentions(const std::string& needle) const {
    for (const auto& v : violations)
      if (v.find(needle) != std::string::npos) return true;
    return false;
  }

  std::string str() const {
    std::ostringstream os;
    for (std::size_t i = 0; i < violations.size(); ++i)
      os << (i ? "; " : "") << violations[i];
    return os.str();
  }
};

// 𝔅 = [BL BR], Λ^L = diag(SL, ML), Λ^R = diag(SR, MR).
struct CompositeMatrices {
  Matrix B_cal;
  Matrix LambdaL;
  Matrix LambdaR;
};

inline constexpr double kSymmetryTolerance = 1e-10;

namespace detail {

struct NamedMatrix {
  const char* name;
  const Matrix* value;
  long rows;
  long cols;
};

inline std::vector<NamedMatrix> shaped_matrices(const GameSpec& s) {
  return {{"A", &s.A, s.n, s.n},
          {"BL", &s.BL, s.n, s.m1},
          {"BR", &s.BR, s.n, s.m2},
          {"QL", &s.QL, s.n, s.n},
          {"QR", &s.QR, s.n, s.n},
          {"SL", &s.SL, s.m1, s.m1},
          {"SR", &s.SR, s.m1, s.m1},
          {"ML", &s.ML, s.m2, s.m2},
          {"MR", &s.MR, s.m2, s.m2},
          {"PL_term", &s.PL_term, s.n, s.n},
          {"PR_term", &s.PR_term, s.n, s.n},
          {"Sigma_x0", &s.Sigma_x0, s.n, s.n},
          {"Sigma_w", &s.Sigma_w, s.n, s.n}};
}

inline std::string shape_message(const NamedMatrix& m) {
  std::ostringstream os;
  os << m.name << " has shape " << m.value->rows() << "x" << m.value->cols()
     << ", expected " << m.rows << "x" << m.cols;
  return os.str();
}

}  // namespace detail

// Returns the first dimension mismatch, or an empty string.
inline std::string shape_mismatch(const GameSpec& s) {
  if (s.n <= 0 || s.m1 <= 0 || s.m2 <= 0)
    return "dimensions n, m1, m2 must be positive";
  for (const auto& m : detail::shaped_matrices(s))
    if (m.value->rows() != m.rows || m.value->cols() != m.cols)
      return detail::shape_message(m);
  if (s.mu.size() != s.n)
    return "mu has length " + std::to_string(s.mu.size()) + ", expected " +
           std::to_string(s.n);
  return {};
}

inline void require_shapes(const GameSpec& s) {
  if (auto msg = shape_mismatch(s); !msg.empty()) throw StructuralError(msg);
}

// Replaces weight and covariance matrices whose asymmetry is within
// kSymmetryTolerance by (X + Xᵀ)/2. Larger asymmetry is left in place for
// validate() to report.
inline void symmetrize_inputs(GameSpec& s) {
  for (Matrix* x : {&s.QL, &s.QR, &s.SL, &s.SR, &s.ML, &s.MR, &s.PL_term,
                    &s.PR_term, &s.Sigma_x0, &s.Sigma_w}) {
    if (x->rows() == x->cols() && asymmetry(*x) <= kSymmetryTolerance)
      *x = symmetrized(*x);
  }
}

inline ValidationReport validate(const GameSpec& s, const Tolerances& tol = {}) {
  ValidationReport report;
  auto& v = report.violations;

  if (s.n <= 0) v.push_back("n must be positive");
  if (s.m1 <= 0) v.push_back("m1 must be positive");
  if (s.m2 <= 0) v.push_back("m2 must be positive");
  if (s.N < 0) v.push_back("N must be nonnegative");
  if (!(s.p >= 0.0 && s.p <= 1.0)) v.push_back("p out of [0,1]");

  bool shapes_ok = true;
  for (const auto& m : detail::shaped_matrices(s)) {
    if (m.value->rows() != m.rows || m.value->cols() != m.cols) {
      v.push_back(detail::shape_message(m));
      shapes_ok = false;
    } else if (!m.value->allFinite()) {
      v.push_back(std::string(m.name) + " has non-finite entries");
      shapes_ok = false;
    }
  }
  if (s.mu.size() != s.n) {
    v.push_back("mu has length " + std::to_string(s.mu.size()) +
                ", expected " + std::to_string(s.n));
    shapes_ok = false;
  }
  if (!shapes_ok) return report;

  enum class Definiteness { psd, pd };
  const std::pair<const char*, std::pair<const Matrix*, Definiteness>> checks[] = {
      {"QL", {&s.QL, Definiteness::psd}},
      {"QR", {&s.QR, Definiteness::psd}},
      {"SL", {&s.SL, Definiteness::pd}},
      {"SR", {&s.SR, Definiteness::pd}},
      {"ML", {&s.ML, Definiteness::pd}},
      {"MR", {&s.MR, Definiteness::pd}},
      {"PL_term", {&s.PL_term, Definiteness::psd}},
      {"PR_term", {&s.PR_term, Definiteness::psd}},
      {"Sigma_x0", {&s.Sigma_x0, Definiteness::psd}},
      {"Sigma_w", {&s.Sigma_w, Definiteness::psd}},
  };
  for (const auto& [name, entry] : checks) {
    const auto& [x, kind] = entry;
    if (asymmetry(*x) > kSymmetryTolerance) {
      v.push_back(std::string(name) + " not symmetric");
      continue;
    }
    if (kind == Definiteness::pd && !is_positive_definite(*x, tol.pd_pivot))
      v.push_back(std::string(name) + " not positive definite");
    if (kind == Definiteness::psd && !is_positive_semidefinite(*x, tol.psd_pivot))
      v.push_back(std::string(name) + " not positive semidefinite");
  }
  return report;
}

inline CompositeMatrices composites(const GameSpec& s) {
  require_shapes(s);
  CompositeMatrices c;
  c.B_cal.resize(s.n, s.m1 + s.m2);
  c.B_cal << s.BL, s.BR;
  c.LambdaL = block_diagonal(s.SL, s.ML);
  c.LambdaR = block_diagonal(s.SR, s.MR);
  return c;
}

// The same game over a different horizon.
inline GameSpec with_horizon(GameSpec s, int horizon) {
  s.N = horizon;
  return s;
}

// The numerical example: N = 50, p = 0.5, μ = 0, identity weights. The noise
// statistics are not given with the example; identity covariances
// are used.
inline GameSpec reference_example() {
  GameSpec s;
  s.n = 2;
  s.m1 = 2;
  s.m2 = 2;
  s.N = 50;
  s.p = 0.5;
  s.A.resize(2, 2);
  s.A << 1.2, 0.0, 0.0, 1.1;
  s.BL.resize(2, 2);
  s.BL << 0.3, 0.2, 0.4, -0.1;
  s.BR.resize(2, 2);
  s.BR << 0.1, 0.2, 0.0, 0.1;
  const Matrix I = Matrix::Identity(2, 2);
  s.QL = s.QR = s.SL = s.SR = s.ML = s.MR = I;
  s.PL_term = s.PR_term = I;
  s.mu = Vector::Zero(2);
  s.Sigma_x0 = I;
  s.Sigma_w = I;
  return s;
}

}  // namespace lrsng
