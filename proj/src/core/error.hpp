#pragma once

#include <stdexcept>
#include <string>

namespace ffcl {

// Base class for every error the library raises deliberately.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape mismatches and violated operation contracts.
struct ShapeError : Error {
  using Error::Error;
};

// Invalid values: labels outside {0,1}, NaN inputs, out-of-range fields.
struct ValidationError : Error {
  using Error::Error;
};

// Malformed, incomplete, or inconsistent configuration.
struct ConfigError : Error {
  using Error::Error;
};

// Filesystem and file-format failures.
struct IoError : Error {
  using Error::Error;
};

// Training aborted: non-finite loss or gradients.
struct TrainingError : Error {
  using Error::Error;
};

// Checkpoint load failures, one type per failure mode.
struct CheckpointVersionError : IoError {
  using IoError::IoError;
};
struct CheckpointDigestError : IoError {
  using IoError::IoError;
};
struct CheckpointTruncatedError : IoError {
  using IoError::IoError;
};

// IDX file failures.
struct IdxMagicError : IoError {
  using IoError::IoError;
};
struct IdxTruncatedError : IoError {
  using IoError::IoError;
};
struct IdxCountError : ValidationError {
  using ValidationError::ValidationError;
};

// Pair sampling failures (single-class data, too few samples).
struct SamplingError : ValidationError {
  using ValidationError::ValidationError;
};

}  // namespace ffcl
