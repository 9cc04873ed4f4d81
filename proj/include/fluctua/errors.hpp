#pragma once

#include <stdexcept>
#include <string>

namespace fluctua {

/// Invalid user-supplied parameters (temperatures, grid sizes, volumes).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A physical model violates one of its invariants (e.g. a non-PSD tensor).
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The 1D massless kernel has no finite Green's function at zero frequency.
class ZeroModeError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A factorization met a non-positive determinant or a zero pivot.
class SingularError : public std::runtime_error {
 public:
  SingularError(const std::string& what, double smallest_pivot)
      : std::runtime_error(what), smallest_pivot_(smallest_pivot) {}
  double smallest_pivot() const noexcept { return smallest_pivot_; }

 private:
  double smallest_pivot_;
};

/// Series expansion requested outside its radius of convergence.
class DivergentSeriesError : public std::domain_error {
 public:
  DivergentSeriesError(const std::string& what, double radius)
      : std::domain_error(what), radius_(radius) {}
  double radius() const noexcept { return radius_; }

 private:
  double radius_;
};

/// Quadrature did not reach its tolerance within the evaluation budget.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& what, double achieved_tolerance)
      : std::runtime_error(what), achieved_(achieved_tolerance) {}
  double achieved_tolerance() const noexcept { return achieved_; }

 private:
  double achieved_;
};

}  // namespace fluctua
