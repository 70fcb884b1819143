#pragma once

#include <stdexcept>
#include <string>

namespace fmc {

// Invalid caller input is reported as std::invalid_argument. The three types
// below map onto the CLI exit codes 2, 3 and 4.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace fmc
