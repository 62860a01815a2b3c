#pragma once

#include <stdexcept>
#include <string>

namespace fruit4d {

enum class ErrorCode {
  kInvalidInput,
  kEmptyWindow,
  kSequencing,
  kRegistrationFailure,
  kParse,
  kIo,
};

// All recoverable failures carry a code so the CLI can map them to exit
// codes (input errors vs. algorithmic failures).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const { return code_; }

  // Input-shaped problems (bad files, bad arguments, violated preconditions).
  bool IsInputError() const {
    return code_ == ErrorCode::kInvalidInput || code_ == ErrorCode::kParse ||
           code_ == ErrorCode::kIo || code_ == ErrorCode::kSequencing ||
           code_ == ErrorCode::kEmptyWindow;
  }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void ThrowInvalidInput(const std::string& what) {
  throw Error(ErrorCode::kInvalidInput, what);
}

}  // namespace fruit4d
