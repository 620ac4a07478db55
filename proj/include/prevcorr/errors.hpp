#pragma once

#include <stdexcept>
#include <string>

namespace prevcorr {

/// Base class for all errors raised by this library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid input: malformed files, inconsistent counts, bad configuration.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Malformed text input; carries the 1-based line number when known.
class ParseError : public ValidationError {
public:
    ParseError(const std::string& message, int line)
        : ValidationError(message + " (line " + std::to_string(line) + ")"), line_(line) {}
    explicit ParseError(const std::string& message) : ValidationError(message), line_(0) {}

    int line() const noexcept { return line_; }

private:
    int line_;
};

/// Estimation cannot proceed on the given data (empty sample, untested
/// category, degenerate model).
class EstimationError : public Error {
public:
    using Error::Error;
};

} // namespace prevcorr
