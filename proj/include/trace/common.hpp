#pragma once

#include <cstdlib>
#include <stdexcept>
#include <string>

namespace trace {

inline constexpr const char* kVersion = "0.1.0";

// Error taxonomy. The CLI maps ConfigError to exit code 2 and DataError
// (including its subclasses) to exit code 3; everything else is 1.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class DataError : public Error {
public:
    using Error::Error;
};

class DegenerateDataError : public DataError {
public:
    using DataError::DataError;
};

class SampleSizeError : public DataError {
public:
    using DataError::DataError;
};

class CompatibilityError : public DataError {
public:
    using DataError::DataError;
};

class UsageError : public Error {
public:
    using Error::Error;
};

class DimError : public UsageError {
public:
    using UsageError::UsageError;
};

class NumericError : public Error {
public:
    using Error::Error;
};

// TRACE_DEBUG=1 enables per-op finite checks in the tensor engine.
inline bool debug_checks() {
    static const bool on = [] {
        const char* v = std::getenv("TRACE_DEBUG");
        return v != nullptr && std::string(v) == "1";
    }();
    return on;
}

} // namespace trace
