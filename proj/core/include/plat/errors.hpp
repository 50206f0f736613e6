#pragma once

#include <stdexcept>
#include <string>

namespace plat {

// Error taxonomy shared across the library. Each maps to one failure class
// the CLI reports with a distinct prefix and exit code.

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& m) : std::runtime_error("shape error: " + m) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& m) : std::runtime_error("numeric error: " + m) {}
};

struct ContractError : std::runtime_error {
    explicit ContractError(const std::string& m) : std::runtime_error("contract error: " + m) {}
};

struct CapacityError : std::runtime_error {
    explicit CapacityError(const std::string& m) : std::runtime_error("capacity error: " + m) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& m) : std::runtime_error("config error: " + m) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& m) : std::runtime_error("io error: " + m) {}
};

struct DependencyError : std::runtime_error {
    explicit DependencyError(const std::string& m) : std::runtime_error("dependency error: " + m) {}
};

}  // namespace plat
