#pragma once

#include <stdexcept>
#include <string>

namespace logimix {

/// Bad input: dimension mismatch, out-of-range argument, malformed file,
/// violated parameter invariant.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

/// A computation that could not produce a trustworthy result
/// (non-convergence, exhausted search, unresolved quadrature).
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

inline void require(bool ok, const char* message) {
  if (!ok) throw ValidationError(message);
}

inline void require(bool ok, const std::string& message) {
  if (!ok) throw ValidationError(message);
}

}  // namespace detail
}  // namespace logimix
