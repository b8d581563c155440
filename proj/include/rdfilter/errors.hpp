#pragma once

#include <stdexcept>
#include <string>

namespace rdf {

// Invalid arguments, malformed configuration or files. Maps to exit code 1.
class UsageError : public std::invalid_argument {
public:
    explicit UsageError(const std::string& what) : std::invalid_argument(what) {}
};

// Failures arising during computation (non-finite values, singular kinetics,
// degenerate weights that cannot be normalized). Maps to exit code 2.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace rdf
