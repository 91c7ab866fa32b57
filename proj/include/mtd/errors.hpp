// Copyright 2026 The mtdistill Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace mtd {

/// Raised for shape mismatches, invalid configs and missing entries.
/// The CLI maps it to exit code 1.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Raised when a non-finite value or an undefined numeric case is hit.
/// The CLI maps it to exit code 2.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what, int level = -1)
        : std::runtime_error(what), level_(level) {}

    /// Block / feature level where the failure was detected, -1 if unknown.
    int level() const noexcept { return level_; }

private:
    int level_;
};

}  // namespace mtd
