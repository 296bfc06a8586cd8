#pragma once

#include <stdexcept>
#include <string>

namespace qbcharge {

// Input violates a documented precondition (non-Hermitian, non-density, ...).
class ContractViolation : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

class DimensionError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

// State or operator has weight outside the one-excitation sector.
class LeakageError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Schedule derivative is unbounded at the requested time (cube-root at t=0).
class SingularDerivativeError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

// Eigenvector matching between consecutive frames failed; use a finer grid.
class TrackingError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Levels inside a block are (numerically) degenerate where the operation needs a gap.
class DegeneracyError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace qbcharge
