#pragma once

#include <stdexcept>
#include <string>

namespace parc {

// Base class for all errors thrown by this library.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad shapes, bad configuration values, unknown config keys.
struct ValidationError : Error {
    explicit ValidationError(const std::string& msg) : Error(msg) {}
};

// NaN/Inf detected. Never propagated silently.
struct NumericsError : Error {
    explicit NumericsError(const std::string& msg) : Error(msg) {}
};

// Iterative solver failed to reach its tolerance.
struct SolverError : Error {
    explicit SolverError(const std::string& msg) : Error(msg) {}
};

// File-format problems: bad magic, truncation, version mismatch, missing files.
struct IoError : Error {
    explicit IoError(const std::string& msg) : Error(msg) {}
};

struct BadMagicError : IoError {
    explicit BadMagicError(const std::string& msg) : IoError(msg) {}
};

struct VersionMismatchError : IoError {
    explicit VersionMismatchError(const std::string& msg) : IoError(msg) {}
};

struct TruncatedFileError : IoError {
    explicit TruncatedFileError(const std::string& msg) : IoError(msg) {}
};

// Broken training contract, e.g. stage-2 with unfrozen differentiator weights.
struct ContractError : Error {
    explicit ContractError(const std::string& msg) : Error(msg) {}
};

}  // namespace parc
