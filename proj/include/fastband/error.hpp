#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fastband {

enum class ErrorKind {
  NotPositiveDefinite,
  SingularBandwidth,
  DegenerateAxis,
  OutOfRange,
  ShapeMismatch,
  TooFewPoints,
  AllDuplicates,
  UnknownModel,
  ParseError,
  InvalidArgument,
};

/// Input errors are the caller's fault (bad data, bad flags); numerical
/// errors come from the arithmetic itself. The CLI maps them to exit codes
/// 2 and 3 respectively.
enum class ErrorCategory { Input, Numerical };

std::string_view to_string(ErrorKind kind);
ErrorCategory category_of(ErrorKind kind);

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }
  ErrorCategory category() const noexcept { return category_of(kind_); }

private:
  ErrorKind kind_;
};

} // namespace fastband
