#pragma once

#include <stdexcept>
#include <string>

namespace hdx {

// Every error raised by the library derives from Error. The category decides
// the process exit code used by the command-line tool.
enum class ErrorCategory {
  kArgument = 2,
  kData = 3,
  kRuntime = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }
  int exit_code() const noexcept { return static_cast<int>(category_); }

 private:
  ErrorCategory category_;
};

// Invalid argument, out-of-range index, dimension mismatch.
class ArgumentError : public Error {
 public:
  explicit ArgumentError(const std::string& what)
      : Error(ErrorCategory::kArgument, what) {}
};

// Dataset loading problems. The kind distinguishes the failure modes.
class DataError : public Error {
 public:
  enum class Kind {
    kMissingFile,
    kMissingColumn,
    kParse,
    kSingleClass,
    kEmpty,
  };

  DataError(Kind kind, const std::string& what)
      : Error(ErrorCategory::kData, what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

// Malformed binary artifact (bad magic, wrong version, truncation, IDX layout).
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what)
      : Error(ErrorCategory::kData, what) {}
};

// A score cache built for a different model instance.
class StaleCacheError : public Error {
 public:
  explicit StaleCacheError(const std::string& what)
      : Error(ErrorCategory::kData, "stale cache: " + what) {}
};

// Requested variant needs something the model does not have.
class UnsupportedError : public Error {
 public:
  explicit UnsupportedError(const std::string& what)
      : Error(ErrorCategory::kArgument, what) {}
};

// Non-finite loss during optimisation and other numeric failures.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what)
      : Error(ErrorCategory::kRuntime, what) {}
};

}  // namespace hdx
