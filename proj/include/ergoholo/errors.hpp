#pragma once

#include <stdexcept>
#include <string>

namespace ergoholo {

/// Bad or inconsistent user input: malformed files, missing paths, invalid
/// physical parameters. The CLI maps it to exit code 2.
class InputError : public std::runtime_error {
public:
    explicit InputError(const std::string& msg) : std::runtime_error{msg} {}
};

/// Non-finite values produced during a computation. The CLI maps it to exit
/// code 3.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& msg) : std::runtime_error{msg} {}
};

} // namespace ergoholo
