// Copyright (c) 2026 The mor-kit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Versioned JSON checkpoints. Every double survives a save/load round
// trip bit-exactly, and identical parameters always serialize to
// identical bytes, so rerunning a seeded experiment reproduces its
// checkpoint byte for byte.

#pragma once

#include <string>

#include "mor/errors.hpp"
#include "mor/model.hpp"

namespace mor {

/// Parse failures and schema violations; the message names the offending
/// key or the byte offset of the syntax error.
struct CheckpointError : ConfigError {
  using ConfigError::ConfigError;
};

inline constexpr const char* kCheckpointSchema = "mor-kit/model";
inline constexpr std::uint64_t kCheckpointVersion = 1;

/// Model as a JSON string (schema tag and version included). Throws
/// CheckpointError if any parameter is non-finite.
std::string encode_model(const Model& model);

/// Inverse of encode_model. Loaded layers start at revision 0.
Model decode_model(const std::string& text);

/// encode_model to a file; IoError on filesystem trouble.
void save_model(const Model& model, const std::string& path);

/// decode_model from a file; IoError if unreadable, CheckpointError if
/// corrupt or off-schema.
Model load_model(const std::string& path);

/// Human-readable summary: schema version, mode, shapes, parameter norms.
std::string inspect_model(const Model& model);

/// Summary of a checkpoint file; never mutates it.
std::string inspect_checkpoint(const std::string& path);

}  // namespace mor
