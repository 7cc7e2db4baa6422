#pragma once

#include <stdexcept>
#include <string>

namespace resotube {

/// Bad or inconsistent run configuration (unknown key, invalid value, ...).
/// The CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Numerical breakdown (NaN/Inf in a solver state, diverging training loss).
/// The CLI maps this to exit code 3.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A requested iteration did not converge within its budget.
/// The CLI maps this to exit code 4.
struct ConvergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

} // namespace resotube
