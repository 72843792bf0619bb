#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace fimfuse {

// Base for every error the library raises on bad input. The CLI maps the
// subclasses onto its exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or usage (exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Vector or matrix shapes that do not line up.
class DimensionError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// Operation requested on a model with the wrong fusion mode.
class ModeError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// A metric that is undefined for the given input (e.g. AUROC on one class).
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failure (exit code 3).
class IoError : public Error {
 public:
  using Error::Error;
};

/// Wrong magic or unsupported version.
class FormatError : public IoError {
 public:
  using IoError::IoError;
};

/// Truncated or checksum-failing file. Carries the byte offset where reading
/// stopped making sense.
class CorruptionError : public IoError {
 public:
  CorruptionError(const std::string& what, std::uint64_t offset)
      : IoError(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

/// Well-formed file whose contents break a data invariant (NaN, bad label...).
class ValidationError : public IoError {
 public:
  ValidationError(const std::string& what, std::string record_id)
      : IoError(what), record_id_(std::move(record_id)) {}

  const std::string& record_id() const noexcept { return record_id_; }

 private:
  std::string record_id_;
};

/// Non-finite loss or gradients during training (exit code 4).
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Caller broke an API contract, e.g. reusing a forward cache after the
/// parameters changed.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace fimfuse
