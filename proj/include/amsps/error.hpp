#pragma once

#include <stdexcept>
#include <string>

namespace amsps {

// Categories double as process exit codes for the CLI.
enum class ErrorCategory : int {
  Usage = 2,
  Io = 3,
  Format = 4,
  Data = 5,
  Numeric = 6,
  Shape = 7,
};

inline const char* category_name(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::Usage: return "usage";
    case ErrorCategory::Io: return "io";
    case ErrorCategory::Format: return "format";
    case ErrorCategory::Data: return "data";
    case ErrorCategory::Numeric: return "numeric";
    case ErrorCategory::Shape: return "shape";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

}  // namespace amsps
