#include "fundascreen/error.hpp"

namespace fundascreen {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "INVALID_ARGUMENT";
    case ErrorCode::io: return "IO";
    case ErrorCode::parse: return "PARSE";
    case ErrorCode::single_class: return "SINGLE_CLASS";
    case ErrorCode::shape_mismatch: return "SHAPE_MISMATCH";
    case ErrorCode::diverged: return "DIVERGED";
    case ErrorCode::missing_input: return "MISSING_INPUT";
    case ErrorCode::config: return "CONFIG";
    case ErrorCode::undefined: return "UNDEFINED";
    case ErrorCode::unsupported: return "UNSUPPORTED";
  }
  return "UNKNOWN";
}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace fundascreen
