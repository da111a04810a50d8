#pragma once

#include <stdexcept>
#include <string>

namespace lrsng {

// Base class for every error raised by the toolkit. The CLI prints what()
// verbatim and exits nonzero.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Matrix shapes that do not agree with the declared dimensions.
class StructuralError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

// A Riccati stage where Λ^L + 𝔅ᵀP^L𝔅 or the remote gain matrix is not PD.
class RiccatiInfeasible : public Error {
 public:
  RiccatiInfeasible(int stage, const std::string& which)
      : Error("Riccati infeasible at stage " + std::to_string(stage) + ": " +
              which + " is not positive definite"),
        stage_(stage) {}

  int stage() const { return stage_; }

 private:
  int stage_;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class UnsupportedConfiguration : public Error {
 public:
  using Error::Error;
};

class TreeSizeError : public Error {
 public:
  TreeSizeError(long long count, long long cap)
      : Error("scenario tree would have " + std::to_string(count) +
              " nodes, exceeding the cap of " + std::to_string(cap)),
        count_(count) {}

  long long count() const { return count_; }

 private:
  long long count_;
};

class MeasurabilityError : public Error {
 public:
  using Error::Error;
};

class SingularSystemError : public Error {
 public:
  SingularSystemError(long long dimension, long long rank)
      : Error("open-loop system not uniquely solvable: rank " +
              std::to_string(rank) + " of " + std::to_string(dimension) +
              " (deficiency " + std::to_string(dimension - rank) + ")"),
        dimension_(dimension),
        rank_(rank) {}

  long long dimension() const { return dimension_; }
  long long rank() const { return rank_; }

 private:
  long long dimension_;
  long long rank_;
};

}  // namespace lrsng
