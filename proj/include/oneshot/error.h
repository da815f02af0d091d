#ifndef ONESHOT_ERROR_H_
#define ONESHOT_ERROR_H_

#include <stdexcept>
#include <string>

namespace oneshot {

// Process exit codes used by the CLI: 0 ok, 2 usage, 3 data, 4 numeric.
enum class ErrorCode { kUsage = 2, kData = 3, kNumeric = 4 };

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string &what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }
  int exit_code() const { return static_cast<int>(code_); }

 private:
  ErrorCode code_;
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string &what) : Error(ErrorCode::kUsage, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string &what) : Error(ErrorCode::kData, what) {}
};

// Dimension or shape mismatch between two operands.
class ShapeError : public DataError {
 public:
  explicit ShapeError(const std::string &what) : DataError(what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string &what)
      : Error(ErrorCode::kNumeric, what) {}
};

}  // namespace oneshot

#endif  // ONESHOT_ERROR_H_
