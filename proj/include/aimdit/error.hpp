#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace aimdit {

enum class ErrorCode {
  kDimension,
  kConfig,
  kLabelRange,
  kShape,
  kGraph,
  kNumeric,
  kIo,
  kMagic,
  kVersion,
  kChecksum,
};

// Stable machine-readable token, e.g. "E_DIMENSION".
std::string_view error_token(ErrorCode code);

// Process exit status for a code: 1 validation, 2 numeric, 3 I/O.
int exit_status(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace aimdit
