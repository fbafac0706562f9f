// Copyright (C) 2026 The ldlb Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace ldlb {

/// Argument outside the mathematical domain of an operation (t outside [0,1],
/// variance outside the invertible range, sigma_t = 0, ...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Invalid or unsupported configuration. The message names the offending field.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Shape or dimension mismatch between tensors / networks.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Malformed or truncated file, unreadable path.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-finite values, solver step limits, and similar numerical failures.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace ldlb
