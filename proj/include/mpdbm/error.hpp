#pragma once

#include <stdexcept>
#include <string>

namespace mpdbm {

// Base for every error raised by the library. The CLI maps subclasses onto
// process exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class EnumerationBoundError : public Error {
public:
    EnumerationBoundError() : Error("enumeration bound exceeded") {}
    explicit EnumerationBoundError(const std::string& detail)
        : Error("enumeration bound exceeded: " + detail) {}
};

// Non-finite values in a loss or gradient.
class NumericError : public Error {
public:
    using Error::Error;
};

// Invalid configuration. `path` is a JSON-pointer-like location ("$.mp.epochs").
class ConfigError : public Error {
public:
    ConfigError(std::string path, const std::string& what)
        : Error(path + ": " + what), path_(std::move(path)) {}
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

// Malformed files (IDX, checkpoints).
class FormatError : public Error {
public:
    enum class Kind { io, bad_magic, truncated, count_mismatch, unsupported_version, checksum, malformed };

    FormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

}  // namespace mpdbm
