// Copyright (c) 2026 latentswap contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>

namespace lswap {

/// Base class for all library errors. The CLI maps these onto exit codes.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Shape or size disagreement between tensors / modules.
struct DimensionError : Error { using Error::Error; };

/// A value-level invariant was violated (non-finite entry, out-of-range pixel).
struct ValidationError : Error { using Error::Error; };

/// A computation produced a non-finite value at runtime.
struct NumericError : Error { using Error::Error; };

/// Bad argument to an operation (empty list, zero count, ...).
struct ArgumentError : Error { using Error::Error; };

/// Malformed or inconsistent configuration.
struct ConfigError : Error { using Error::Error; };

/// Filesystem / stream failure.
struct IoError : Error { using Error::Error; };

/// Checkpoint contents disagree with their manifest or expected layout.
struct CheckpointError : Error { using Error::Error; };

/// A component was asked for something it does not support.
struct CapabilityError : Error { using Error::Error; };

} // namespace lswap
