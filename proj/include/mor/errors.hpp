// Copyright (c) 2026 The mor-kit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Exception types shared by the config, checkpoint, and CLI layers. The
// CLI maps them onto exit codes, so new user-facing failures should reuse
// these instead of inventing more.

#pragma once

#include <stdexcept>

namespace mor {

/// Malformed or invalid user-supplied input: config files, checkpoint
/// schemas, bad flag values.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Filesystem failures: missing files, unreadable or unwritable paths.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace mor
