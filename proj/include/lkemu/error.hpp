#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lkemu {

enum class ErrorCategory {
  kDomain,         // argument outside a function's domain
  kParameter,      // invalid model parameter
  kConfiguration,  // inconsistent sizes, grids, windows
  kCoverage,       // location not covered by any basis function
  kStability,      // SAR center a <= 4
  kNumerical,      // singular or indefinite system
  kFactorization,  // sparse Cholesky failed
  kQuadrature,     // oracle integration tolerance not met
  kCalibration,
  kEncoding,
  kUnsupported,
  kIo,
  kOracle,
};

std::string_view category_name(ErrorCategory category);

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

[[noreturn]] inline void fail(ErrorCategory category, const std::string& message) {
  throw Error(category, message);
}

}  // namespace lkemu
