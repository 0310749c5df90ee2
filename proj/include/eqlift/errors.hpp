#pragma once

#include <stdexcept>
#include <string>

namespace eqlift {

// Error hierarchy. Exit-code mapping (see tools/eqlift.cpp):
//   ConfigError -> 2, DataError -> 3, NumericError -> 4, IoError -> 5.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeMismatch : NumericError {
    using NumericError::NumericError;
};
struct NonPositiveDepth : NumericError {
    using NumericError::NumericError;
};
struct DegenerateTarget : NumericError {
    using NumericError::NumericError;
};
struct BatchTooSmall : NumericError {
    using NumericError::NumericError;
};
struct NonFiniteLoss : NumericError {
    using NumericError::NumericError;
};

struct ParseError : DataError {
    using DataError::DataError;
};
struct SchemaVersionMismatch : DataError {
    using DataError::DataError;
};
struct SchemaMismatch : DataError {
    using DataError::DataError;
};
struct EmptySplit : DataError {
    using DataError::DataError;
};
struct MissingGroundTruth : DataError {
    using DataError::DataError;
};
struct GeometryUnknown : DataError {
    using DataError::DataError;
};
struct UnknownCamera : DataError {
    using DataError::DataError;
};
struct InsufficientViews : DataError {
    using DataError::DataError;
};
struct BadFps : DataError {
    using DataError::DataError;
};
struct StatsMissing : DataError {
    using DataError::DataError;
};
struct ChecksumError : DataError {
    using DataError::DataError;
};

struct ConfigInvalid : ConfigError {
    using ConfigError::ConfigError;
};

struct DiskError : IoError {
    using IoError::IoError;
};

}  // namespace eqlift
