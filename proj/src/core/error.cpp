#include "error.hpp"

namespace viewgen {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kOk: return "ok";
    case ErrorCode::kInvalidShape: return "invalid_shape";
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kInvalidBatch: return "invalid_batch";
    case ErrorCode::kConfig: return "config";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kFormat: return "format";
    case ErrorCode::kVersion: return "version";
    case ErrorCode::kTruncated: return "truncated";
    case ErrorCode::kChecksum: return "checksum";
    case ErrorCode::kUnknownClass: return "unknown_class";
    case ErrorCode::kInvalidCamera: return "invalid_camera";
    case ErrorCode::kInvalidCrop: return "invalid_crop";
    case ErrorCode::kNoModel: return "no_model";
    case ErrorCode::kEmptyClass: return "empty_class";
    case ErrorCode::kEmptyHoldout: return "empty_holdout";
    case ErrorCode::kDivergence: return "divergence";
    case ErrorCode::kOutputExists: return "output_exists";
    case ErrorCode::kUsage: return "usage";
    case ErrorCode::kVerification: return "verification";
    case ErrorCode::kInternal: return "internal";
  }
  return "unknown";
}

}  // namespace viewgen
