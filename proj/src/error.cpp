#include "cps/error.hpp"

namespace cps {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::TruncationInsufficient: return "TruncationInsufficient";
    case ErrorKind::EpsilonNonPositive: return "EpsilonNonPositive";
    case ErrorKind::EmptyGrid: return "EmptyGrid";
    case ErrorKind::SParameterPositive: return "SParameterPositive";
    case ErrorKind::EfficiencyTooLow: return "EfficiencyTooLow";
    case ErrorKind::QuadratureNotConverged: return "QuadratureNotConverged";
    case ErrorKind::SamplerNotConverged: return "SamplerNotConverged";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::DegenerateNormalization: return "DegenerateNormalization";
    case ErrorKind::GridMismatch: return "GridMismatch";
    case ErrorKind::InvalidState: return "InvalidState";
    case ErrorKind::Config: return "ConfigError";
    case ErrorKind::Io: return "IoError";
  }
  return "Unknown";
}

}  // namespace cps
