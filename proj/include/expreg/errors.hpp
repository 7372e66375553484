#pragma once

#include <stdexcept>
#include <string>

namespace expreg {

/// File access or parse failure on one of the CSV/JSON surfaces.
class io_error : public std::runtime_error {
 public:
  explicit io_error(const std::string& what) : std::runtime_error(what) {}
};

/// Numerical breakdown: factorization failure after jitter escalation,
/// eigensolver failure, non-finite intermediate values.
class numerical_error : public std::runtime_error {
 public:
  explicit numerical_error(const std::string& what) : std::runtime_error(what) {}
};

/// The solver ran out of iterations; carries the state it stopped in.
class convergence_error : public numerical_error {
 public:
  convergence_error(const std::string& what, int iterations, double objective,
                    double gradient_norm)
      : numerical_error(what),
        iterations(iterations),
        objective(objective),
        gradient_norm(gradient_norm) {}

  int iterations;
  double objective;
  double gradient_norm;
};

}  // namespace expreg
