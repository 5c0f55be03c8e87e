#pragma once

#include <stdexcept>
#include <string>

namespace cloudtomo {

// Error classes; values line up with ctomo_status in c_api.h and with
// CLI exit codes.
enum class ErrorCode : int {
  ok = 0,
  invalid_argument = 1,
  config = 2,
  io = 3,
  corrupt_file = 4,
  format = 5,
  dependency = 6,
  geometry = 7,
  generation = 8,
  budget = 9,
  runtime = 10,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool ok, ErrorCode code, const std::string& what) {
  if (!ok) fail(code, what);
}

}  // namespace cloudtomo
