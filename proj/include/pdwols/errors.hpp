#pragma once

#include <stdexcept>
#include <string>

namespace pdwols {

// Error taxonomy maps onto the CLI exit codes: parse 2, numeric 3, config 4.
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace pdwols
