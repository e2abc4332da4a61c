#ifndef FEDMETER_ERRORS_HPP
#define FEDMETER_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace fedmeter {

// Shape/dimension mismatch between tensor operands.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed input data (CSV rows, series too short, empty segments).
struct DataError : std::runtime_error {
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Invalid experiment configuration.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite values or degenerate numerical state in the compute path.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Corrupt or truncated update payload.
struct PayloadError : std::runtime_error {
    explicit PayloadError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace fedmeter

#endif
