#pragma once

#include <stdexcept>
#include <string>

namespace aml {

// Exit-code mapping used by the CLI: ConfigError -> 2, data-shaped errors -> 3,
// everything else derived from Error -> 4.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

// Input data is malformed or inconsistent with what was asked of it.
class DataError : public Error {
public:
    using Error::Error;
};

class SchemaError : public DataError {
public:
    using DataError::DataError;
};

class RowError : public DataError {
public:
    using DataError::DataError;
};

class SplitError : public DataError {
public:
    using DataError::DataError;
};

class ConsistencyError : public DataError {
public:
    using DataError::DataError;
};

class MetricError : public DataError {
public:
    using DataError::DataError;
};

// Tensor shape mismatches; message names both shapes.
class ShapeError : public Error {
public:
    using Error::Error;
};

// API misuse: wrong argument combinations, missing state, non-scalar backward roots.
class ContractError : public Error {
public:
    using Error::Error;
};

}  // namespace aml
