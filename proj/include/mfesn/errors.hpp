#pragma once

#include <stdexcept>
#include <string>

namespace mfesn {

// Exit-code mapping used by the CLI: config/usage -> 1, numerical -> 2,
// statistical precondition -> 3.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

struct StatisticalError : std::runtime_error {
    explicit StatisticalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace mfesn
