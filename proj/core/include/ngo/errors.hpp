#pragma once

#include <stdexcept>
#include <string>

namespace ngo {

/// Raised when a linear solve fails; carries a reciprocal condition estimate.
class SolverError : public std::runtime_error {
public:
  SolverError(const std::string& what, double rcond)
      : std::runtime_error(what + " (rcond estimate " + std::to_string(rcond) + ")"),
        rcond_(rcond) {}
  double rcond() const { return rcond_; }

private:
  double rcond_;
};

/// Raised when a run configuration is inconsistent or incomplete.
class ConfigError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised when an iteration produces non-finite values.
class NumericalError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace ngo
