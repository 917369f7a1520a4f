#include "skelrig/error.hpp"

namespace skelrig {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DegenerateInput: return "DegenerateInput";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::DegenerateAxis: return "DegenerateAxis";
    case ErrorCode::MissingPlacement: return "MissingPlacement";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::ZeroSegment: return "ZeroSegment";
    case ErrorCode::AngleLimit: return "AngleLimit";
    case ErrorCode::ModelMarkerMismatch: return "ModelMarkerMismatch";
    case ErrorCode::OpenMesh: return "OpenMesh";
    case ErrorCode::TopologyMismatch: return "TopologyMismatch";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::HashMismatch: return "HashMismatch";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::FormatError: return "FormatError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace skelrig
