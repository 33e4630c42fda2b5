#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace maskgcd {

enum class ErrorCode {
  kSumMismatch,
  kFormatError,
  kDimensionMismatch,
  kDanglingGeometry,
  kIoError,
  kParamError,
  kKTooLarge,
  kIndexOutOfRange,
  kEmptyClass,
  kNotEnoughCandidates,
  kCoverageGap,
  kOverlap,
  kShapeMismatch,
  kInvalidInstance,
  kConfigError,
};

std::string_view to_string(ErrorCode code);

// Errors that carry a machine-readable code. The CLI maps codes to exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace maskgcd
