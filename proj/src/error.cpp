#include "aimdit/error.hpp"

namespace aimdit {

std::string_view error_token(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDimension: return "E_DIMENSION";
    case ErrorCode::kConfig: return "E_CONFIG";
    case ErrorCode::kLabelRange: return "E_LABEL_RANGE";
    case ErrorCode::kShape: return "E_SHAPE";
    case ErrorCode::kGraph: return "E_GRAPH";
    case ErrorCode::kNumeric: return "E_NUMERIC";
    case ErrorCode::kIo: return "E_IO";
    case ErrorCode::kMagic: return "E_MAGIC";
    case ErrorCode::kVersion: return "E_VERSION";
    case ErrorCode::kChecksum: return "E_CHECKSUM";
  }
  return "E_UNKNOWN";
}

int exit_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNumeric:
      return 2;
    case ErrorCode::kIo:
    case ErrorCode::kMagic:
    case ErrorCode::kVersion:
    case ErrorCode::kChecksum:
      return 3;
    default:
      return 1;
  }
}

}  // namespace aimdit
