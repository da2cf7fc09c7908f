#include "rsindex/errors.hpp"

namespace rsindex {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kIo: return "io";
    case ErrorKind::kEmptyInput: return "empty_input";
    case ErrorKind::kMalformedSeries: return "malformed_series";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kVersion: return "version";
    case ErrorKind::kLengthMismatch: return "length_mismatch";
    case ErrorKind::kUnsupportedPrediction: return "unsupported_prediction";
    case ErrorKind::kDomain: return "domain";
    case ErrorKind::kIdentifiability: return "identifiability";
    case ErrorKind::kNonIdentifiable: return "non_identifiable";
    case ErrorKind::kNegativeWeight: return "negative_weight";
    case ErrorKind::kConvergence: return "convergence";
  }
  return "unknown";
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kDomain:
    case ErrorKind::kIdentifiability:
    case ErrorKind::kNonIdentifiable:
    case ErrorKind::kNegativeWeight:
    case ErrorKind::kConvergence:
      return 3;
    default:
      return 2;
  }
}

}  // namespace rsindex
