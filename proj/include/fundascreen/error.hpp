#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fundascreen {

// Machine-readable failure categories. The CLI prints them as `ERROR:<NAME>:`.
enum class ErrorCode {
  invalid_argument,
  io,
  parse,
  single_class,
  shape_mismatch,
  diverged,
  missing_input,
  config,
  undefined,
  unsupported,
};

std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace fundascreen
