#pragma once

#include <stdexcept>
#include <string>

namespace mplkit {

// Parameter outside its mathematical domain (sigma <= 0, x <= 0, u outside (0,1), ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// |xi| below the Gumbel guard; the GEV formulas divide by xi.
class ShapeTooSmallError : public DomainError {
 public:
  explicit ShapeTooSmallError(double xi)
      : DomainError("shape too close to zero (|xi| < 1e-8): " + std::to_string(xi)) {}
};

// Malformed or inconsistent input data.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// The sample carries no information about the dispersion (S == 0).
class DegenerateSampleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// No parameter value in the search region gives a finite likelihood.
class InfeasibleModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The sample-space derivative matrix is singular or too badly conditioned.
class ModificationUndefinedError : public std::runtime_error {
 public:
  explicit ModificationUndefinedError(double condition_number)
      : std::runtime_error("modification undefined: sample-space derivative matrix is singular "
                           "(condition number " + std::to_string(condition_number) + ")"),
        condition_number_(condition_number) {}

  [[nodiscard]] double condition_number() const noexcept { return condition_number_; }

 private:
  double condition_number_;
};

}  // namespace mplkit
