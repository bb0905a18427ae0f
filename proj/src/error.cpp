#include "lkemu/error.hpp"

namespace lkemu {

std::string_view category_name(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::kDomain: return "domain";
    case ErrorCategory::kParameter: return "parameter";
    case ErrorCategory::kConfiguration: return "config";
    case ErrorCategory::kCoverage: return "coverage";
    case ErrorCategory::kStability: return "stability";
    case ErrorCategory::kNumerical: return "numerical";
    case ErrorCategory::kFactorization: return "factorization";
    case ErrorCategory::kQuadrature: return "quadrature";
    case ErrorCategory::kCalibration: return "calibration";
    case ErrorCategory::kEncoding: return "encoding";
    case ErrorCategory::kUnsupported: return "unsupported";
    case ErrorCategory::kIo: return "io";
    case ErrorCategory::kOracle: return "oracle";
  }
  return "unknown";
}

}  // namespace lkemu
