#pragma once

#include <stdexcept>
#include <string>

namespace viewgen {

// Values are mirrored by the VG_ERR_* constants in viewgen/viewgen.h.
enum class ErrorCode : int {
  kOk = 0,
  kInvalidShape = 1,
  kInvalidArgument = 2,
  kInvalidBatch = 3,
  kConfig = 4,
  kIo = 5,
  kFormat = 6,
  kVersion = 7,
  kTruncated = 8,
  kChecksum = 9,
  kUnknownClass = 10,
  kInvalidCamera = 11,
  kInvalidCrop = 12,
  kNoModel = 13,
  kEmptyClass = 14,
  kEmptyHoldout = 15,
  kDivergence = 16,
  kOutputExists = 17,
  kUsage = 18,
  kVerification = 19,
  kInternal = 20,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) throw Error(code, message);
}

}  // namespace viewgen
