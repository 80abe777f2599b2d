#pragma once

#include <stdexcept>
#include <string>

namespace dialogkit {

// Base for every error the toolkit raises on purpose.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid or inconsistent configuration (bad knob values, missing files).
class ConfigError : public Error {
public:
    using Error::Error;
};

// Malformed input data.
class DataError : public Error {
public:
    using Error::Error;
};

// A serialized model that cannot be decoded.
class FormatError : public Error {
public:
    using Error::Error;
};

// A serialized model written by a newer format revision.
class VersionError : public FormatError {
public:
    using FormatError::FormatError;
};

}  // namespace dialogkit
