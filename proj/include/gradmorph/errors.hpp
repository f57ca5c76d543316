#pragma once

#include <stdexcept>
#include <string>

namespace gradmorph {

// Caller broke a documented precondition (shape mismatch, bad label, ...).
// Mapped to exit code 1 by the CLI.
struct ContractViolation : std::invalid_argument {
    explicit ContractViolation(const std::string& msg) : std::invalid_argument(msg) {}
};

// A dataset sample is malformed (bad label range, missing mask, ...).
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem / serialization failure. Mapped to exit code 2 by the CLI.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed on-disk payload; carries the byte offset of the first bad byte.
struct ParseError : IoError {
    std::size_t offset;
    ParseError(const std::string& msg, std::size_t off)
        : IoError(msg + " (at byte offset " + std::to_string(off) + ")"), offset(off) {}
};

}  // namespace gradmorph
