#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace ldr {

/// Shapes of operands are incompatible.
struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A caller broke a documented precondition of an operation.
struct ContractViolation : std::logic_error {
  using std::logic_error::logic_error;
};

/// Invalid configuration (schedule ranges, LoRA targets, dataset sizes...).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Invalid numeric parameter for an image operator.
struct ParameterError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed file content; `offset` is the byte position where parsing failed.
struct FormatError : std::runtime_error {
  FormatError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"), offset(offset) {}
  std::uint64_t offset;
};

/// The finite-difference oracle itself is unusable (non-deterministic f).
struct OracleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss.
struct TrainingDiverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace ldr
