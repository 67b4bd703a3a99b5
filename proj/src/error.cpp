#include "fastband/error.hpp"

namespace fastband {

std::string_view to_string(ErrorKind kind)
{
  switch (kind) {
  case ErrorKind::NotPositiveDefinite: return "NotPositiveDefinite";
  case ErrorKind::SingularBandwidth: return "SingularBandwidth";
  case ErrorKind::DegenerateAxis: return "DegenerateAxis";
  case ErrorKind::OutOfRange: return "OutOfRange";
  case ErrorKind::ShapeMismatch: return "ShapeMismatch";
  case ErrorKind::TooFewPoints: return "TooFewPoints";
  case ErrorKind::AllDuplicates: return "AllDuplicates";
  case ErrorKind::UnknownModel: return "UnknownModel";
  case ErrorKind::ParseError: return "ParseError";
  case ErrorKind::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

ErrorCategory category_of(ErrorKind kind)
{
  switch (kind) {
  case ErrorKind::NotPositiveDefinite:
  case ErrorKind::SingularBandwidth:
    return ErrorCategory::Numerical;
  default:
    return ErrorCategory::Input;
  }
}

Error::Error(ErrorKind kind, const std::string& message)
  : std::runtime_error(std::string(to_string(kind)) + ": " + message)
  , kind_(kind)
{
}

} // namespace fastband
