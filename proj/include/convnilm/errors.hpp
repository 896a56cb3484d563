#pragma once

#include <stdexcept>
#include <string>

namespace convnilm {

// Error taxonomy mirrored by the CLI exit-code contract:
// config/usage -> 1, data -> 2, numeric -> 3.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace convnilm
