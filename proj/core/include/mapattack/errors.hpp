#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mapattack {

/// Base class for all toolkit errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Degenerate or malformed geometry (zero-length polyline, empty point set, ...).
class InvalidGeometryError : public Error {
 public:
  using Error::Error;
};

/// Too few points for an operation (e.g. curvature needs >= 3).
class InsufficientPointsError : public InvalidGeometryError {
 public:
  using InvalidGeometryError::InvalidGeometryError;
};

/// Out-of-range index or coordinate.
class BoundsError : public Error {
 public:
  using Error::Error;
};

/// Invalid or inconsistent configuration (bad run config, unsupported spec combination).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Filesystem-level failure (missing file, write failure).
class IoError : public Error {
 public:
  using Error::Error;
};

/// Persisted artifact carries an unknown schema version.
class SchemaVersionError : public IoError {
 public:
  using IoError::IoError;
};

/// Artifact contents do not match the recorded checksum.
class ChecksumError : public IoError {
 public:
  using IoError::IoError;
};

/// Malformed encoded payload. Carries the byte offset where decoding failed when known.
class DecodeError : public Error {
 public:
  explicit DecodeError(const std::string& what, std::size_t byte_offset = 0)
      : Error(what), byte_offset_(byte_offset) {}
  std::size_t byte_offset() const { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

/// Transport/auth failure talking to an external service (VLM endpoint, oracle adapter).
class ServiceError : public Error {
 public:
  using Error::Error;
};

/// VLM refinement produced no parseable verdict after retries.
class RefinementFailedError : public ServiceError {
 public:
  using ServiceError::ServiceError;
};

/// External map-oracle adapter failed its handshake or died.
class OracleUnavailableError : public Error {
 public:
  using Error::Error;
};

/// Bad command-line usage (maps to exit code 2 in the CLI).
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace mapattack
