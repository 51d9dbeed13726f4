#pragma once

#include <stdexcept>
#include <string>

namespace stylerank {

enum class ErrorCode {
  InvalidArgument,
  Parse,
  Io,
  NotFound,
  Duplicate,
  Unrankable,
  FormatVersion,
  StaleIndex,
  GenerationMismatch,
  EmptyPopulation,
  Diverged,
  Internal,
};

const char* error_code_name(ErrorCode code) noexcept;

// All core failures are reported through this exception; the C API maps
// the code onto sr_status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace stylerank
