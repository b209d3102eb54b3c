#pragma once

#include <stdexcept>
#include <string>

namespace stflow {

// Base for every error raised by the library. The CLI maps the concrete
// subclasses onto process exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Tensor shapes or parameter tables that do not line up.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Invalid configuration values (bad window sizes, alpha = 0 with the
// inverse-time schedule, k > n, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

// Unreadable, corrupt or missing input data.
class DataError : public Error {
public:
    using Error::Error;
};

// Non-finite values surfaced during computation.
class NumericError : public Error {
public:
    using Error::Error;
};

// API misuse, e.g. calling a backward pass without its forward cache.
class UsageError : public Error {
public:
    using Error::Error;
};

}  // namespace stflow
