#pragma once

#include <stdexcept>
#include <string>

namespace fpdetect {

// Error taxonomy maps onto process exit codes (see tools/fpdetect_main.cpp):
// ConfigError -> 1, DataError -> 2, InternalError -> 3.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InternalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace fpdetect
