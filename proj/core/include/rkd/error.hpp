#pragma once

#include <stdexcept>
#include <string>

namespace rkd {

// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Precondition or contract violation (bad dimensions, out-of-range values,
// invalid configuration).
class InvalidInputError : public Error {
public:
    explicit InvalidInputError(const std::string& msg) : Error(msg) {}
};

// Malformed text input: CSV rows, strategy expressions, config files.
// Messages name the offending row / position / key.
class ParseError : public Error {
public:
    explicit ParseError(const std::string& msg) : Error(msg) {}
};

// Filesystem failures, always naming the path.
class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

} // namespace rkd
