#include "pdzseg/error.hpp"

namespace pdzseg {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kMalformedManifest: return "MalformedManifest";
    case ErrorKind::kSplitOverlap: return "SplitOverlap";
    case ErrorKind::kDanglingReference: return "DanglingReference";
    case ErrorKind::kShapeMismatch: return "ShapeMismatch";
    case ErrorKind::kBadLabel: return "BadLabel";
    case ErrorKind::kNoRegion: return "NoRegion";
    case ErrorKind::kOutOfBounds: return "OutOfBounds";
    case ErrorKind::kIndivisibleSize: return "IndivisibleSize";
    case ErrorKind::kAlreadyAdapted: return "AlreadyAdapted";
    case ErrorKind::kEmptyFeatures: return "EmptyFeatures";
    case ErrorKind::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::kOutOfRange: return "OutOfRange";
    case ErrorKind::kUndefinedMetric: return "UndefinedMetric";
    case ErrorKind::kBadSeverity: return "BadSeverity";
    case ErrorKind::kInvalidConfig: return "InvalidConfig";
    case ErrorKind::kInvalidPrompt: return "InvalidPrompt";
    case ErrorKind::kUnknownPromptKind: return "UnknownPromptKind";
    case ErrorKind::kUnknownModel: return "UnknownModel";
    case ErrorKind::kImageTooLarge: return "ImageTooLarge";
    case ErrorKind::kIo: return "IoError";
    case ErrorKind::kCheckpoint: return "CheckpointError";
  }
  return "Unknown";
}

}  // namespace pdzseg
