#pragma once
// Exception hierarchy. The CLI maps the three leaf families onto exit codes
// (UsageError -> 1, DataError -> 2, NumericalError -> 3).

#include <stdexcept>
#include <string>

namespace tensormem {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad invocation: malformed query pattern, unknown flag, invalid config value.
class UsageError : public Error {
public:
    using Error::Error;
};

// Problems with the data or with arguments that do not fit the data:
// unknown ids, wrong entity kinds, shape mismatches, malformed files.
class DataError : public Error {
public:
    using Error::Error;
};

class UnknownIdError : public DataError {
public:
    using DataError::DataError;
};

class KindError : public DataError {
public:
    using DataError::DataError;
};

class DimensionError : public DataError {
public:
    using DataError::DataError;
};

class ParseError : public DataError {
public:
    ParseError(const std::string& what, std::size_t line)
        : DataError(what + " (line " + std::to_string(line) + ")"), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

// The requested operation is not defined for the given model family.
class UnsupportedError : public DataError {
public:
    using DataError::DataError;
};

// Non-finite cost, negative mass on the exact query path, degenerate
// normalizers.
class NumericalError : public Error {
public:
    using Error::Error;
};

class DivergenceError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

}  // namespace tensormem
