#pragma once

#include <stdexcept>
#include <string>

namespace taxo {

// Bad inputs, malformed files, violated preconditions. The CLI maps these
// to exit code 2.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// NaN/Inf or other numeric breakdown at runtime. The CLI maps these to
// exit code 3.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace taxo
