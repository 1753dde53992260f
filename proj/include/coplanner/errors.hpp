#pragma once

#include <stdexcept>
#include <string>

namespace coplanner {

// Shape/length mismatches between composed objects.
struct StructuralError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad values inside otherwise well-shaped data (NaN, negative speed, ...).
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad user-facing configuration (files, ranges, role mismatches).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Degenerate linear algebra (zero covariance, alpha_bar == 1 in conversions).
struct SingularityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A caller broke a documented contract (e.g. candidates not sharing the anchor).
struct ContractViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace coplanner
