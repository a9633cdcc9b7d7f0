#pragma once

#include <stdexcept>
#include <string>

namespace plu {

// Exit codes used by the command line front-end.
enum class ExitCode : int {
    ok = 0,
    config_error = 2,
    data_error = 3,
    numerical_failure = 4,
};

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual ExitCode exit_code() const noexcept { return ExitCode::data_error; }
};

// Bad argument to a library function (degenerate box, empty batch, ...).
class InvalidInput : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
    ExitCode exit_code() const noexcept override { return ExitCode::config_error; }
};

// Malformed or inconsistent files on disk.
class DataError : public Error {
public:
    using Error::Error;
};

// File content disagrees with its own header.
class SchemaError : public DataError {
public:
    using DataError::DataError;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

// NaN/Inf in parameters, gradients or losses.
class NumericalError : public Error {
public:
    using Error::Error;
    ExitCode exit_code() const noexcept override { return ExitCode::numerical_failure; }
};

// Tasks executed out of order, or label hygiene violated.
class ProtocolError : public Error {
public:
    using Error::Error;
};

} // namespace plu
