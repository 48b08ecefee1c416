#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sccoex {

/// Malformed or inconsistent input data (files, ids, partitions).
class InputError : public std::runtime_error {
public:
    explicit InputError(const std::string& what) : std::runtime_error(what) {}

    InputError(const std::string& what, std::size_t line)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

    /// 1-based line number of the offending record, 0 when not applicable.
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_ = 0;
};

/// A numerical routine failed to meet its contract (non-convergence, bad domain).
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace sccoex
