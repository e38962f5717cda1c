#pragma once

#include <stdexcept>
#include <string>

namespace kaf {

enum class ErrorKind
{
  invalid_input,
  numerical_blowup,
  tuning_failure,
  degenerate_geometry,
  out_of_support,
  numerical,
  divergence
};

inline const char* to_string(ErrorKind kind)
{
  switch (kind) {
    case ErrorKind::invalid_input: return "invalid-input";
    case ErrorKind::numerical_blowup: return "numerical-blowup";
    case ErrorKind::tuning_failure: return "tuning-failure";
    case ErrorKind::degenerate_geometry: return "degenerate-geometry";
    case ErrorKind::out_of_support: return "out-of-support";
    case ErrorKind::numerical: return "numerical";
    case ErrorKind::divergence: return "divergence";
  }
  return "unknown";
}

//! Library error carrying a machine-readable kind.
class Error : public std::runtime_error
{
public:
  Error(ErrorKind kind, const std::string& what)
    : std::runtime_error(std::string(to_string(kind)) + ": " + what)
    , kind_(kind)
  {}

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

inline void require(bool condition, const std::string& what)
{
  if (!condition)
    throw Error(ErrorKind::invalid_input, what);
}

} // namespace kaf
