#include "flask/error.hpp"

namespace flask {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonPositiveDuration: return "NonPositiveDuration";
    case ErrorCode::SingularGramian: return "SingularGramian";
    case ErrorCode::InvalidBracket: return "InvalidBracket";
    case ErrorCode::OutOfDomain: return "OutOfDomain";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::SpeedSingularity: return "SpeedSingularity";
    case ErrorCode::ThrustSingularity: return "ThrustSingularity";
    case ErrorCode::GimbalSingularity: return "GimbalSingularity";
    case ErrorCode::SingularActuation: return "SingularActuation";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::SemanticError: return "SemanticError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ValidationError: return "ValidationError";
  }
  return "Unknown";
}

}  // namespace flask
