// Copyright (c) 2026 the racecar authors
// Licensed under the Apache License, Version 2.0.

#pragma once

#include <stdexcept>
#include <string>

namespace racecar {

/// Dimension mismatch between operands (matmul, loss pairing, ...).
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

/// Non-finite values or a numerical routine that failed to converge.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& what, double residual = 0.0)
        : std::runtime_error(what), residual(residual) {}
    double residual;
};

/// Caller violated an API precondition (trace/net mismatch, bad range, ...).
struct ContractError : std::runtime_error {
    explicit ContractError(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed input file. `offset` is the byte offset for binary formats
/// and the line number for text formats.
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& what, long offset = -1)
        : std::runtime_error(what), offset(offset) {}
    long offset;
};

/// Failure while assembling a network or reverse plan.
struct BuildError : std::runtime_error {
    explicit BuildError(const std::string& what) : std::runtime_error(what) {}
};

/// Training diverged. Carries the epoch where the loss became non-finite.
struct TrainingError : std::runtime_error {
    explicit TrainingError(const std::string& what, long epoch = -1)
        : std::runtime_error(what), epoch(epoch) {}
    long epoch;
};

}  // namespace racecar
