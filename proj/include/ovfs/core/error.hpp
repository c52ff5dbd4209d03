#pragma once

#include <stdexcept>
#include <string>

namespace ovfs {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes or malformed dimensions.
struct ShapeError : Error {
    using Error::Error;
};

// NaN/Inf in a forward output, or a domain violation (log of 0, zero norm).
struct NumericError : Error {
    using Error::Error;
};

// File system / serialization failures.
struct IoError : Error {
    using Error::Error;
};

// Bad run configuration (unknown keys, invalid values, missing inputs).
struct ConfigError : Error {
    using Error::Error;
};

// Out-of-range indices, invalid arguments.
struct ValueError : Error {
    using Error::Error;
};

}  // namespace ovfs
