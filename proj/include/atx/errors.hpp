#pragma once

#include <stdexcept>

namespace atx {

struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

// Raised whenever a tensor would hold NaN or Inf.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid user-supplied configuration or input content.
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A checkpoint does not fit the data or run config it is applied to.
struct CompatibilityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace atx
