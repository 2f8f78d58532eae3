#pragma once

#include <stdexcept>
#include <string>

namespace mswa {

// Error taxonomy shared by the C++ core and the C API status codes.
enum class ErrorCode {
  InvalidArgument = 1,
  Plan = 2,
  Shape = 3,
  Vocab = 4,
  Io = 5,
  Numeric = 6,
  State = 7,
  Config = 8,
  Data = 9,
};

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

}  // namespace mswa
