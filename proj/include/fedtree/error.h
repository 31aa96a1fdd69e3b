#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fedtree {

enum class ErrorCode {
  kMalformedInput,
  kInconsistentDimensions,
  kOutOfBounds,
  kBadRatios,
  kOverflow,
  kInvalidArgument,
  kEmptySelection,
  kTooLarge,
  kEmptyTree,
  kZeroWorkload,
  kOutOfRange,
  kBadSymbol,
  kMissingFeature,
  kShapeMismatch,
  kOrphanVertex,
  kNonFiniteLoss,
  kConfigError,
  kEmptyReport,
  kIo,
};

std::string_view ErrorCodeName(ErrorCode code);

// All library failures are reported through this exception type; `code()`
// identifies the failure class so callers can branch without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace fedtree
