#pragma once

#include <stdexcept>
#include <string>

namespace psdet {

// Bad flags or configuration values. CLI exit code 1.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class DataErrorKind {
  unreadable,         // file cannot be opened or read
  malformed,          // not JSON, or a required field is missing / mistyped
  dangling_image_id,  // annotation points at an image id that does not exist
  empty_dataset,      // no gt/anchor pairs to compute normalizers from
};

const char* to_string(DataErrorKind kind);

// Problems with input data. CLI exit code 2.
class DataError : public std::runtime_error {
 public:
  DataError(DataErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  DataErrorKind kind() const { return kind_; }

 private:
  DataErrorKind kind_;
};

}  // namespace psdet
