#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pdzseg {

enum class ErrorKind {
  kMalformedManifest,
  kSplitOverlap,
  kDanglingReference,
  kShapeMismatch,
  kBadLabel,
  kNoRegion,
  kOutOfBounds,
  kIndivisibleSize,
  kAlreadyAdapted,
  kEmptyFeatures,
  kNonFiniteLoss,
  kOutOfRange,
  kUndefinedMetric,
  kBadSeverity,
  kInvalidConfig,
  kInvalidPrompt,
  kUnknownPromptKind,
  kUnknownModel,
  kImageTooLarge,
  kIo,
  kCheckpoint,
};

std::string_view to_string(ErrorKind kind);

// Every failure raised by the library carries one of the kinds above so
// callers (CLI exit codes, HTTP status mapping, tests) can branch on it.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace pdzseg
