#pragma once

#include <stdexcept>
#include <string>

namespace meal {

/// Error categories raised across the library. The CLI maps them onto exit
/// codes; tests match on the code rather than the message.
enum class ErrorCode {
  kDimensionMismatch,
  kInvalidArgument,
  kGammaTooLarge,
  kAllZeroMatrix,
  kNotSymmetric,
  kNonPositiveAlpha,
  kMissingMetadata,
  kWindowTooShort,
  kNotComposite,
  kSubproblemNonconvexUnsupported,
  kUnsupportedSubproblemPath,
  kRangeTooSmall,
  kInsufficientData,
  kSchemaError,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace meal
