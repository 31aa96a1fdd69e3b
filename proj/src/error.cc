#include "fedtree/error.h"

namespace fedtree {

std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMalformedInput: return "MalformedInput";
    case ErrorCode::kInconsistentDimensions: return "InconsistentDimensions";
    case ErrorCode::kOutOfBounds: return "OutOfBounds";
    case ErrorCode::kBadRatios: return "BadRatios";
    case ErrorCode::kOverflow: return "Overflow";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kEmptySelection: return "EmptySelection";
    case ErrorCode::kTooLarge: return "TooLarge";
    case ErrorCode::kEmptyTree: return "EmptyTree";
    case ErrorCode::kZeroWorkload: return "ZeroWorkload";
    case ErrorCode::kOutOfRange: return "OutOfRange";
    case ErrorCode::kBadSymbol: return "BadSymbol";
    case ErrorCode::kMissingFeature: return "MissingFeature";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kOrphanVertex: return "OrphanVertex";
    case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::kConfigError: return "ConfigError";
    case ErrorCode::kEmptyReport: return "EmptyReport";
    case ErrorCode::kIo: return "Io";
  }
  return "Unknown";
}

}  // namespace fedtree
