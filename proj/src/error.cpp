#include "maskgcd/error.hpp"

namespace maskgcd {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kSumMismatch: return "SUM_MISMATCH";
    case ErrorCode::kFormatError: return "FORMAT_ERROR";
    case ErrorCode::kDimensionMismatch: return "DIMENSION_MISMATCH";
    case ErrorCode::kDanglingGeometry: return "DANGLING_GEOMETRY";
    case ErrorCode::kIoError: return "IO_ERROR";
    case ErrorCode::kParamError: return "PARAM_ERROR";
    case ErrorCode::kKTooLarge: return "K_TOO_LARGE";
    case ErrorCode::kIndexOutOfRange: return "INDEX_OUT_OF_RANGE";
    case ErrorCode::kEmptyClass: return "EMPTY_CLASS";
    case ErrorCode::kNotEnoughCandidates: return "NOT_ENOUGH_CANDIDATES";
    case ErrorCode::kCoverageGap: return "COVERAGE_GAP";
    case ErrorCode::kOverlap: return "OVERLAP";
    case ErrorCode::kShapeMismatch: return "SHAPE_MISMATCH";
    case ErrorCode::kInvalidInstance: return "INVALID_INSTANCE";
    case ErrorCode::kConfigError: return "CONFIG_ERROR";
  }
  return "UNKNOWN";
}

}  // namespace maskgcd
