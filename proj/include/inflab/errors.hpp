#pragma once

#include <stdexcept>
#include <string>

namespace inflab {

// Base class for all errors raised by the library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed input file content. Carries a 1-based line number when known.
struct ParseError : Error {
    ParseError(const std::string& what, std::size_t line = 0)
        : Error(line ? what + " (line " + std::to_string(line) + ")" : what), line_number(line) {}
    std::size_t line_number = 0;
};

struct IoError : Error {
    using Error::Error;
};

// Invalid configuration value or an operation applied to incompatible data.
struct ConfigError : Error {
    using Error::Error;
};

// A requested size exceeds what the inputs can provide (pool too small,
// not enough sentinel symbols, ...).
struct CapacityError : Error {
    using Error::Error;
};

// A structural invariant does not hold for the given data.
struct ValidationError : Error {
    ValidationError(const std::string& what, std::size_t line = 0)
        : Error(line ? what + " (line " + std::to_string(line) + ")" : what), line_number(line) {}
    std::size_t line_number = 0;
};

// A sequence does not fit the model's position budget.
struct TruncationError : Error {
    using Error::Error;
};

// Raised when the training loop cannot continue; message carries a
// diagnostic dump of the loop state at the point of failure.
struct TrainingError : Error {
    using Error::Error;
};

}  // namespace inflab
