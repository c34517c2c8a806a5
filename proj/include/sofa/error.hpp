#pragma once

#include <stdexcept>
#include <string>

namespace sofa {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define SOFA_DEFINE_ERROR(Name)                 \
  class Name : public Error {                   \
   public:                                      \
    using Error::Error;                         \
  }

SOFA_DEFINE_ERROR(NumericalError);
SOFA_DEFINE_ERROR(ConfigError);
SOFA_DEFINE_ERROR(Unsupported);
SOFA_DEFINE_ERROR(EnvelopeUndefined);
SOFA_DEFINE_ERROR(DegenerateGeometry);
SOFA_DEFINE_ERROR(EmptyGeometry);
SOFA_DEFINE_ERROR(ShapeMismatch);
SOFA_DEFINE_ERROR(UnboundedRegion);
SOFA_DEFINE_ERROR(IoError);

#undef SOFA_DEFINE_ERROR

/// Malformed text input; carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

}  // namespace sofa
