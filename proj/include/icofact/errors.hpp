#pragma once

#include <stdexcept>
#include <string>

namespace icofact {

// Thrown when an input does not match the dimensions implied by the mesh
// level or the factor shapes.
class DimensionMismatch : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A factor picked up a NaN or infinity during an update.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(std::string factor, long iteration)
        : std::runtime_error("non-finite entries in factor " + factor +
                             " at iteration " + std::to_string(iteration)),
          factor_(std::move(factor)),
          iteration_(iteration) {}

    const std::string& factor() const noexcept { return factor_; }
    long iteration() const noexcept { return iteration_; }

private:
    std::string factor_;
    long iteration_;
};

// Every design column already sits at the data resolution.
class RefinementExhausted : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace icofact
