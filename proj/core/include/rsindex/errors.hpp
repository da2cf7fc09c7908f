#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rsindex {

enum class ErrorKind {
  kIo,
  kEmptyInput,
  kMalformedSeries,
  kConfig,
  kVersion,
  kLengthMismatch,
  kUnsupportedPrediction,
  kDomain,
  kIdentifiability,
  kNonIdentifiable,
  kNegativeWeight,
  kConvergence,
};

// Stable machine-readable name, used in error JSON emitted by the CLI.
std::string_view to_string(ErrorKind kind);

// 2 for data/input problems, 3 for numerical or convergence failures.
int exit_code(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace rsindex
