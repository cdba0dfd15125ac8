#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace apfopf {

/// Coarse failure class. The CLI maps each category onto its exit code.
enum class ErrorCategory {
  Usage,
  Parse,
  Validation,
  Assembly,
  Numeric,
  Solve,
  Audit,
};

std::string_view to_string(ErrorCategory category) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

}  // namespace apfopf
