#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cps {

enum class ErrorKind {
  TruncationInsufficient,
  EpsilonNonPositive,
  EmptyGrid,
  SParameterPositive,
  EfficiencyTooLow,
  QuadratureNotConverged,
  SamplerNotConverged,
  IndexOutOfRange,
  DegenerateNormalization,
  GridMismatch,
  InvalidState,
  Config,
  Io,
};

std::string_view to_string(ErrorKind kind);

/// Single exception type for the library; the kind selects the CLI exit code.
class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

}  // namespace cps
