#pragma once

#include <stdexcept>
#include <string>

namespace iptdet {

/// Base class for all errors raised by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Malformed input text (annotation rows, metadata, config files).
/// Messages carry "<origin>:<line>:" prefixes where applicable.
struct ParseError : Error {
    using Error::Error;
};

/// Input violates a documented precondition (bad shapes, bad values).
struct ValidationError : Error {
    using Error::Error;
};

/// Invalid or inconsistent configuration.
struct ConfigError : Error {
    using Error::Error;
};

/// Filesystem or codec failure.
struct IoError : Error {
    using Error::Error;
};

/// Non-finite values where finite ones are required (diverged training).
struct NumericError : Error {
    using Error::Error;
};

} // namespace iptdet
