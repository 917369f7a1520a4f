#pragma once

#include <stdexcept>
#include <string>

namespace skelrig {

enum class ErrorCode {
  DegenerateInput,
  DomainError,
  DegenerateAxis,
  MissingPlacement,
  ConfigError,
  DimensionMismatch,
  InsufficientData,
  ZeroSegment,
  AngleLimit,
  ModelMarkerMismatch,
  OpenMesh,
  TopologyMismatch,
  IoError,
  HashMismatch,
  VersionMismatch,
  FormatError,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace skelrig
