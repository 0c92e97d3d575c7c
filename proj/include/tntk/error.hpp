#pragma once

#include <stdexcept>
#include <string>

namespace tntk {

// Error taxonomy used across the library. The CLI maps these to exit codes:
// UsageError -> 1, everything else -> 2.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor shape / dimension mismatch.
struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error("shape error: " + msg) {}
};

// Non-finite values or numerically impossible requests.
struct NumericError : Error {
    explicit NumericError(const std::string& msg) : Error("numeric error: " + msg) {}
};

// Invalid argument values (out-of-range probabilities, degenerate polygons, ...).
struct ValueError : Error {
    explicit ValueError(const std::string& msg) : Error("value error: " + msg) {}
};

// Malformed input files, unknown vocabulary characters, missing annotations.
struct DataError : Error {
    explicit DataError(const std::string& msg) : Error("data error: " + msg) {}
};

// Bad run configuration (unknown key, unparsable value).
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error("config error: " + msg) {}
};

// API misuse (backward on a non-scalar, missing tape, ...).
struct UsageError : Error {
    explicit UsageError(const std::string& msg) : Error("usage error: " + msg) {}
};

}  // namespace tntk
