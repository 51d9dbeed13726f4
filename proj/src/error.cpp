#include "stylerank/error.hpp"

namespace stylerank {

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid_argument";
    case ErrorCode::Parse: return "parse_error";
    case ErrorCode::Io: return "io_error";
    case ErrorCode::NotFound: return "not_found";
    case ErrorCode::Duplicate: return "duplicate";
    case ErrorCode::Unrankable: return "unrankable";
    case ErrorCode::FormatVersion: return "format_version";
    case ErrorCode::StaleIndex: return "stale_index";
    case ErrorCode::GenerationMismatch: return "generation_mismatch";
    case ErrorCode::EmptyPopulation: return "empty_population";
    case ErrorCode::Diverged: return "diverged";
    case ErrorCode::Internal: return "internal";
  }
  return "internal";
}

}  // namespace stylerank
