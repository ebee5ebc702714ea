// Copyright (C) 2026 The loftq-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <stdexcept>
#include <string>

namespace loftq {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Caller passed an out-of-range parameter (bits, rank, code, shape...).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// A quantization plan that cannot be executed, e.g. rank above min(rows, cols).
class InvalidPlan : public InvalidArgument {
public:
    using InvalidArgument::InvalidArgument;
};

/// Numeric input the algorithms cannot work with (NaN, Inf, float32 overflow).
class InvalidInput : public Error {
public:
    using Error::Error;
};

/// Malformed or inconsistent bytes: packed codes, tensor containers, checkpoints.
class FormatError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double last_estimate)
        : Error(what), last_estimate_(last_estimate) {}

    double last_estimate() const noexcept { return last_estimate_; }

private:
    double last_estimate_;
};

}  // namespace loftq
