#pragma once

#include <stdexcept>
#include <string>

namespace rpd {

// Invalid shapes, layouts or configuration values.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// An operation was called in a state where it is not allowed.
struct UsageError : std::logic_error {
  using std::logic_error::logic_error;
};

// A loss term evaluated to NaN or Inf.
struct NumericalError : std::runtime_error {
  NumericalError(std::string term_name, const std::string& what)
      : std::runtime_error(what), term(std::move(term_name)) {}
  std::string term;
};

// Malformed teacher request or response.
struct ProtocolError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Remote teacher could not be reached after all retries.
struct TeacherUnavailable : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace rpd
