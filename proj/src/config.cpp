// Copyright (c) 2026 The mor-kit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mor/config.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <initializer_list>
#include <iterator>
#include <string>

#include "json.hpp"

namespace mor {

namespace {

using json = nlohmann::ordered_json;

void reject_extras(const json& j, std::initializer_list<const char*> allowed,
                   const std::string& ctx) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* key : allowed) {
      if (it.key() == key) {
        known = true;
        break;
      }
    }
    if (!known) throw ConfigError(ctx + ": unknown key \"" + it.key() + "\"");
  }
}

void read_size(const json& j, const char* key, const std::string& ctx, std::size_t& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  if (!it->is_number_unsigned()) {
    throw ConfigError(ctx + "." + key + " must be a nonnegative integer");
  }
  out = it->get<std::size_t>();
}

void read_u64(const json& j, const char* key, const std::string& ctx, std::uint64_t& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  if (!it->is_number_unsigned()) {
    throw ConfigError(ctx + "." + key + " must be a nonnegative integer");
  }
  out = it->get<std::uint64_t>();
}

void read_double(const json& j, const char* key, const std::string& ctx, double& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  if (!it->is_number() || !std::isfinite(it->get<double>())) {
    throw ConfigError(ctx + "." + key + " must be a finite number");
  }
  out = it->get<double>();
}

void read_string(const json& j, const char* key, const std::string& ctx, std::string& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  if (!it->is_string()) throw ConfigError(ctx + "." + key + " must be a string");
  out = it->get<std::string>();
}

void parse_model(const json& j, ModelSpec& m) {
  const std::string ctx = "model";
  reject_extras(j,
                {"layers", "d_in", "d_out", "n_experts", "n_routers", "k_experts",
                 "k_routers", "rank", "alpha", "temperature", "mode"},
                ctx);
  read_size(j, "layers", ctx, m.layers);
  read_size(j, "d_in", ctx, m.d_in);
  read_size(j, "d_out", ctx, m.d_out);
  read_size(j, "n_experts", ctx, m.n_experts);
  read_size(j, "n_routers", ctx, m.n_routers);
  read_size(j, "k_experts", ctx, m.k_experts);
  read_size(j, "k_routers", ctx, m.k_routers);
  read_size(j, "rank", ctx, m.rank);
  read_double(j, "alpha", ctx, m.alpha);
  read_double(j, "temperature", ctx, m.temperature);
  std::string mode;
  read_string(j, "mode", ctx, mode);
  if (!mode.empty()) {
    try {
      m.mode = parse_routing_mode(mode);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(ctx + ".mode: " + e.what());
    }
  }
}

void parse_train(const json& j, ExperimentConfig& c) {
  const std::string ctx = "train";
  reject_extras(j,
                {"epochs", "batch_size", "optimizer", "lr", "beta1", "beta2", "eps",
                 "weight_decay", "lambda_expert", "lambda_router", "n_samples", "seed"},
                ctx);
  read_size(j, "epochs", ctx, c.train.epochs);
  read_size(j, "batch_size", ctx, c.train.batch_size);
  std::string optimizer;
  read_string(j, "optimizer", ctx, optimizer);
  if (!optimizer.empty()) {
    if (optimizer == "sgd") {
      c.train.optimizer.kind = OptimizerConfig::Kind::sgd;
    } else if (optimizer == "adam") {
      c.train.optimizer.kind = OptimizerConfig::Kind::adam;
    } else {
      throw ConfigError("train.optimizer must be \"sgd\" or \"adam\", got \"" + optimizer +
                        "\"");
    }
  }
  read_double(j, "lr", ctx, c.train.optimizer.lr);
  read_double(j, "beta1", ctx, c.train.optimizer.beta1);
  read_double(j, "beta2", ctx, c.train.optimizer.beta2);
  read_double(j, "eps", ctx, c.train.optimizer.eps);
  read_double(j, "weight_decay", ctx, c.train.optimizer.weight_decay);
  read_double(j, "lambda_expert", ctx, c.train.lambda_expert);
  read_double(j, "lambda_router", ctx, c.train.lambda_router);
  read_size(j, "n_samples", ctx, c.n_samples);
  read_u64(j, "seed", ctx, c.seed);
}

void parse_task(const json& j, SyntheticTaskSpec& t) {
  const std::string ctx = "task";
  reject_extras(j, {"clusters", "noise_sigma", "center_scale"}, ctx);
  read_size(j, "clusters", ctx, t.clusters);
  read_double(j, "noise_sigma", ctx, t.noise_sigma);
  read_double(j, "center_scale", ctx, t.center_scale);
}

void parse_output(const json& j, OutputConfig& o) {
  const std::string ctx = "output";
  reject_extras(j, {"dir", "formats"}, ctx);
  read_string(j, "dir", ctx, o.dir);
  auto it = j.find("formats");
  if (it != j.end()) {
    if (!it->is_array()) throw ConfigError("output.formats must be an array of strings");
    o.formats.clear();
    for (const json& f : *it) {
      if (!f.is_string()) throw ConfigError("output.formats must be an array of strings");
      o.formats.push_back(f.get<std::string>());
    }
  }
}

const json& section(const json& root, const char* name) {
  const json& s = root.at(name);
  if (!s.is_object()) {
    throw ConfigError(std::string("config: \"") + name + "\" must be an object");
  }
  return s;
}

const char* kind_name(OptimizerConfig::Kind kind) {
  return kind == OptimizerConfig::Kind::sgd ? "sgd" : "adam";
}

}  // namespace

ExperimentConfig default_config() { return ExperimentConfig{}; }

ExperimentConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config: parse error at byte " + std::to_string(e.byte) + ": " +
                      e.what());
  }
  if (!root.is_object()) throw ConfigError("config: top level must be an object");
  reject_extras(root, {"model", "train", "task", "output"}, "config");

  ExperimentConfig c = default_config();
  if (root.contains("model")) parse_model(section(root, "model"), c.model);
  if (root.contains("train")) parse_train(section(root, "train"), c);
  if (root.contains("task")) parse_task(section(root, "task"), c.task);
  if (root.contains("output")) parse_output(section(root, "output"), c.output);
  c.task.d_in = c.model.d_in;
  c.task.d_out = c.model.d_out;
  validate(c);
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("config: cannot open: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("config: read failed: " + path);
  return parse_config(text);
}

std::string encode_config(const ExperimentConfig& c) {
  json root{
      {"model",
       json{{"layers", c.model.layers},
            {"d_in", c.model.d_in},
            {"d_out", c.model.d_out},
            {"n_experts", c.model.n_experts},
            {"n_routers", c.model.n_routers},
            {"k_experts", c.model.k_experts},
            {"k_routers", c.model.k_routers},
            {"rank", c.model.rank},
            {"alpha", c.model.alpha},
            {"temperature", c.model.temperature},
            {"mode", to_string(c.model.mode)}}},
      {"train",
       json{{"epochs", c.train.epochs},
            {"batch_size", c.train.batch_size},
            {"optimizer", kind_name(c.train.optimizer.kind)},
            {"lr", c.train.optimizer.lr},
            {"beta1", c.train.optimizer.beta1},
            {"beta2", c.train.optimizer.beta2},
            {"eps", c.train.optimizer.eps},
            {"weight_decay", c.train.optimizer.weight_decay},
            {"lambda_expert", c.train.lambda_expert},
            {"lambda_router", c.train.lambda_router},
            {"n_samples", c.n_samples},
            {"seed", c.seed}}},
      {"task",
       json{{"clusters", c.task.clusters},
            {"noise_sigma", c.task.noise_sigma},
            {"center_scale", c.task.center_scale}}},
      {"output", json{{"dir", c.output.dir}, {"formats", c.output.formats}}},
  };
  return root.dump(2) + "\n";
}

void apply_env_overrides(ExperimentConfig& c) {
  if (const char* seed = std::getenv("MOR_KIT_SEED"); seed != nullptr && *seed != '\0') {
    if (!std::isdigit(static_cast<unsigned char>(seed[0]))) {
      throw ConfigError(std::string("MOR_KIT_SEED is not a decimal integer: ") + seed);
    }
    errno = 0;
    char* end = nullptr;
    unsigned long long v = std::strtoull(seed, &end, 10);
    if (errno == ERANGE || *end != '\0') {
      throw ConfigError(std::string("MOR_KIT_SEED is not a decimal integer: ") + seed);
    }
    c.seed = v;
  }
  if (const char* dir = std::getenv("MOR_KIT_OUT_DIR"); dir != nullptr && *dir != '\0') {
    c.output.dir = dir;
  }
}

void validate(const ExperimentConfig& c) {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(what);
  };
  need(c.model.layers >= 1, "model.layers must be >= 1");
  need(c.model.d_in >= 1, "model.d_in must be >= 1");
  need(c.model.d_out >= 1, "model.d_out must be >= 1");
  need(c.model.n_experts >= 1, "model.n_experts must be >= 1");
  need(c.model.n_routers >= 1, "model.n_routers must be >= 1");
  need(c.model.k_experts >= 1 && c.model.k_experts <= c.model.n_experts,
       "model.k_experts must be between 1 and model.n_experts");
  need(c.model.k_routers >= 1 && c.model.k_routers <= c.model.n_routers,
       "model.k_routers must be between 1 and model.n_routers");
  need(c.model.rank >= 1 && c.model.rank <= std::min(c.model.d_in, c.model.d_out),
       "model.rank must be between 1 and min(model.d_in, model.d_out)");
  need(c.model.alpha > 0.0, "model.alpha must be > 0");
  need(c.model.temperature > 0.0, "model.temperature must be > 0");

  need(c.train.epochs >= 1, "train.epochs must be >= 1");
  need(c.train.batch_size >= 1, "train.batch_size must be >= 1");
  need(c.train.optimizer.lr > 0.0, "train.lr must be > 0");
  need(c.train.optimizer.beta1 >= 0.0 && c.train.optimizer.beta1 < 1.0,
       "train.beta1 must be in [0, 1)");
  need(c.train.optimizer.beta2 >= 0.0 && c.train.optimizer.beta2 < 1.0,
       "train.beta2 must be in [0, 1)");
  need(c.train.optimizer.eps > 0.0, "train.eps must be > 0");
  need(c.train.optimizer.weight_decay >= 0.0, "train.weight_decay must be >= 0");
  need(c.train.lambda_expert >= 0.0, "train.lambda_expert must be >= 0");
  need(c.train.lambda_router >= 0.0, "train.lambda_router must be >= 0");
  need(c.n_samples >= 1, "train.n_samples must be >= 1");

  need(c.task.clusters >= 1, "task.clusters must be >= 1");
  need(c.task.noise_sigma >= 0.0, "task.noise_sigma must be >= 0");
  need(c.task.center_scale > 0.0, "task.center_scale must be > 0");
  need(c.task.d_in == c.model.d_in && c.task.d_out == c.model.d_out,
       "task dims must mirror the model section");

  need(!c.output.dir.empty(), "output.dir must not be empty");
  need(!c.output.formats.empty(), "output.formats must not be empty");
  for (const std::string& f : c.output.formats) {
    need(f == "csv" || f == "json", "output.formats entries must be \"csv\" or \"json\"");
  }
  need(std::count(c.output.formats.begin(), c.output.formats.end(), "csv") <= 1 &&
           std::count(c.output.formats.begin(), c.output.formats.end(), "json") <= 1,
       "output.formats must not repeat entries");
}

}  // namespace mor
