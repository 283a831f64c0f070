// Copyright (c) 2026 The mor-kit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Experiment configuration: a strict JSON schema with four sections
// (model, train, task, output). Missing keys take the published
// defaults; unknown keys are rejected naming the first offender.
// Precedence when running experiments is flag > environment > file.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mor/errors.hpp"
#include "mor/model.hpp"
#include "mor/trainer.hpp"

namespace mor {

struct OutputConfig {
  std::string dir = "out";
  std::vector<std::string> formats = {"csv", "json"};  // subset of {csv, json}
};

struct ExperimentConfig {
  ModelSpec model;
  TrainSettings train;
  std::size_t n_samples = 512;
  std::uint64_t seed = 1234;
  SyntheticTaskSpec task;  // d_in / d_out mirror the model section
  OutputConfig output;
};

ExperimentConfig default_config();

/// Parse and validate JSON text ("{}" is the default experiment).
/// Throws ConfigError naming the first offending key.
ExperimentConfig parse_config(const std::string& text);

/// load + parse; IoError if the file cannot be read.
ExperimentConfig load_config(const std::string& path);

/// Effective config as JSON; parse_config(encode_config(c)) == c, and the
/// emitted bytes are identical for identical configs.
std::string encode_config(const ExperimentConfig& config);

/// MOR_KIT_SEED and MOR_KIT_OUT_DIR override the file (and nothing else).
/// Empty variables count as unset; malformed values throw ConfigError.
void apply_env_overrides(ExperimentConfig& config);

/// Range and cross-field checks; throws ConfigError naming the field.
void validate(const ExperimentConfig& config);

}  // namespace mor
