#pragma once

#include <stdexcept>
#include <string>

namespace dtdens {

//! Broad failure class; the CLI maps these to exit codes.
enum class ErrorCategory
{
  validation,
  numerical,
  configuration
};

//! Exception carrying a stable error name (e.g. "ObservabilityViolation").
class Error : public std::runtime_error
{
public:
  Error(std::string name, ErrorCategory category, const std::string& detail)
    : std::runtime_error(name + ": " + detail)
    , name_(std::move(name))
    , category_(category)
  {}

  const std::string& name() const noexcept { return name_; }
  ErrorCategory category() const noexcept { return category_; }

private:
  std::string name_;
  ErrorCategory category_;
};

namespace detail {

[[noreturn]] inline void
fail_validation(const std::string& name, const std::string& detail)
{
  throw Error(name, ErrorCategory::validation, detail);
}

[[noreturn]] inline void
fail_numerical(const std::string& name, const std::string& detail)
{
  throw Error(name, ErrorCategory::numerical, detail);
}

[[noreturn]] inline void
fail_config(const std::string& name, const std::string& detail)
{
  throw Error(name, ErrorCategory::configuration, detail);
}

} // namespace detail
} // namespace dtdens
