// Copyright (c) 2026 The mor-kit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mor/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>

#include "doctest.h"

using mor::ConfigError;
using mor::ExperimentConfig;
using mor::OptimizerConfig;
using mor::RoutingMode;

namespace {

template <class E, class F>
std::string thrown_message(F&& f) {
  try {
    f();
  } catch (const E& e) {
    return e.what();
  }
  return {};
}

// setenv for one scope, restore on exit
struct EnvVar {
  const char* name;
  EnvVar(const char* n, const char* value) : name(n) { ::setenv(n, value, 1); }
  ~EnvVar() { ::unsetenv(name); }
};

}  // namespace

TEST_CASE("empty config is the default experiment") {
  ExperimentConfig c = mor::parse_config("{}");
  CHECK(mor::encode_config(c) == mor::encode_config(mor::default_config()));
  CHECK(c.model.n_experts == 8);
  CHECK(c.model.n_routers == 2);
  CHECK(c.model.k_experts == 2);
  CHECK(c.model.mode == RoutingMode::mor);
  CHECK(c.train.epochs == 30);
  CHECK(c.train.optimizer.kind == OptimizerConfig::Kind::adam);
  CHECK(c.train.optimizer.lr == 0.02);
  CHECK(c.train.lambda_expert == 0.01);
  CHECK(c.n_samples == 512);
  CHECK(c.seed == 1234);
  CHECK(c.task.clusters == 8);
  CHECK(c.task.d_in == 16);
  CHECK(c.output.dir == "out");
  REQUIRE(c.output.formats.size() == 2);
  CHECK(c.output.formats[0] == "csv");
  CHECK(c.output.formats[1] == "json");
}

TEST_CASE("encode/parse round trip is byte-stable") {
  ExperimentConfig c = mor::default_config();
  c.model.n_routers = 3;
  c.model.d_in = 12;
  c.model.d_out = 10;
  c.model.mode = RoutingMode::single;
  c.model.n_routers = 1;  // single mode wants k_routers <= n_routers
  c.model.k_routers = 1;
  c.train.optimizer.kind = OptimizerConfig::Kind::sgd;
  c.train.optimizer.lr = 0.017;
  c.train.optimizer.weight_decay = 1e-4;
  c.seed = 18446744073709551615ull;
  c.task.d_in = 12;
  c.task.d_out = 10;
  c.task.noise_sigma = 0.0;
  c.output.formats = {"json"};

  std::string once = mor::encode_config(c);
  ExperimentConfig back = mor::parse_config(once);
  CHECK(mor::encode_config(back) == once);
  CHECK(back.seed == 18446744073709551615ull);
  CHECK(back.train.optimizer.lr == 0.017);
  CHECK(back.model.mode == RoutingMode::single);
}

TEST_CASE("partial configs override only what they mention") {
  ExperimentConfig c = mor::parse_config(
      R"({"train": {"epochs": 5}, "model": {"n_routers": 3, "d_in": 12, "d_out": 10}})");
  CHECK(c.train.epochs == 5);
  CHECK(c.model.n_routers == 3);
  CHECK(c.model.d_in == 12);
  CHECK(c.task.d_in == 12);   // task dims follow the model section
  CHECK(c.task.d_out == 10);
  CHECK(c.train.batch_size == 16);
  CHECK(c.model.n_experts == 8);
}

TEST_CASE("unknown keys are rejected naming the first offender") {
  std::string msg = thrown_message<ConfigError>([] { mor::parse_config(R"({"modle": {}})"); });
  CHECK(msg.find("modle") != std::string::npos);

  msg = thrown_message<ConfigError>(
      [] { mor::parse_config(R"({"model": {"dd_in": 4}})"); });
  CHECK(msg.find("dd_in") != std::string::npos);

  msg = thrown_message<ConfigError>(
      [] { mor::parse_config(R"({"train": {"momentum": 0.9}})"); });
  CHECK(msg.find("momentum") != std::string::npos);

  msg = thrown_message<ConfigError>(
      [] { mor::parse_config(R"({"task": {"centre_scale": 2.0}})"); });
  CHECK(msg.find("centre_scale") != std::string::npos);

  msg = thrown_message<ConfigError>(
      [] { mor::parse_config(R"({"output": {"path": "x"}})"); });
  CHECK(msg.find("path") != std::string::npos);
}

TEST_CASE("wrong JSON types are rejected") {
  CHECK(thrown_message<ConfigError>([] {
          mor::parse_config(R"({"train": {"epochs": -1}})");
        }).find("nonnegative integer") != std::string::npos);
  CHECK(thrown_message<ConfigError>([] {
          mor::parse_config(R"({"train": {"lr": "fast"}})");
        }).find("finite number") != std::string::npos);
  CHECK(thrown_message<ConfigError>([] {
          mor::parse_config(R"({"model": {"mode": 7}})");
        }).find("string") != std::string::npos);
  CHECK(thrown_message<ConfigError>([] {
          mor::parse_config(R"({"output": {"formats": "csv"}})");
        }).find("array of strings") != std::string::npos);
  CHECK(thrown_message<ConfigError>([] {
          mor::parse_config(R"({"model": []})");
        }).find("must be an object") != std::string::npos);
  CHECK_THROWS_AS(mor::parse_config("[]"), ConfigError);
}

TEST_CASE("range validation names the field") {
  auto reject = [](const std::string& text, const char* needle) {
    std::string msg = thrown_message<ConfigError>([&] { mor::parse_config(text); });
    CHECK(msg.find(needle) != std::string::npos);
  };
  reject(R"({"model": {"k_experts": 9}})", "k_experts");
  reject(R"({"model": {"k_routers": 3}})", "k_routers");
  reject(R"({"model": {"rank": 20}})", "rank");
  reject(R"({"model": {"layers": 0}})", "model.layers");
  reject(R"({"model": {"alpha": 0.0}})", "model.alpha");
  reject(R"({"model": {"temperature": 0.0}})", "model.temperature");
  reject(R"({"model": {"mode": "fancy"}})", "mode");
  reject(R"({"train": {"lr": 0.0}})", "train.lr");
  reject(R"({"train": {"lr": -0.1}})", "train.lr");
  reject(R"({"train": {"epochs": 0}})", "train.epochs");
  reject(R"({"train": {"batch_size": 0}})", "train.batch_size");
  reject(R"({"train": {"beta1": 1.0}})", "train.beta1");
  reject(R"({"train": {"eps": 0.0}})", "train.eps");
  reject(R"({"train": {"weight_decay": -1.0}})", "train.weight_decay");
  reject(R"({"train": {"lambda_expert": -0.01}})", "train.lambda_expert");
  reject(R"({"train": {"lambda_router": -0.01}})", "train.lambda_router");
  reject(R"({"train": {"n_samples": 0}})", "train.n_samples");
  reject(R"({"train": {"optimizer": "adamw"}})", "optimizer");
  reject(R"({"task": {"clusters": 0}})", "task.clusters");
  reject(R"({"task": {"noise_sigma": -0.5}})", "task.noise_sigma");
  reject(R"({"task": {"center_scale": 0.0}})", "task.center_scale");
  reject(R"({"output": {"dir": ""}})", "output.dir");
  reject(R"({"output": {"formats": []}})", "output.formats");
  reject(R"({"output": {"formats": ["xml"]}})", "output.formats");
  reject(R"({"output": {"formats": ["csv", "csv"]}})", "output.formats");
}

TEST_CASE("environment overrides seed and output dir only") {
  ExperimentConfig c = mor::parse_config(R"({"train": {"seed": 5}})");
  {
    EnvVar seed("MOR_KIT_SEED", "777");
    EnvVar dir("MOR_KIT_OUT_DIR", "elsewhere");
    mor::apply_env_overrides(c);
    CHECK(c.seed == 777);            // env beats the file value
    CHECK(c.output.dir == "elsewhere");
  }

  {
    EnvVar seed("MOR_KIT_SEED", "");
    EnvVar dir("MOR_KIT_OUT_DIR", "");
    ExperimentConfig d = mor::default_config();
    mor::apply_env_overrides(d);  // empty counts as unset
    CHECK(d.seed == 1234);
    CHECK(d.output.dir == "out");
  }

  {
    EnvVar seed("MOR_KIT_SEED", "12x");
    ExperimentConfig d = mor::default_config();
    std::string msg =
        thrown_message<ConfigError>([&] { mor::apply_env_overrides(d); });
    CHECK(msg.find("MOR_KIT_SEED") != std::string::npos);
  }
  {
    EnvVar seed("MOR_KIT_SEED", "-1");
    ExperimentConfig d = mor::default_config();
    CHECK_THROWS_AS(mor::apply_env_overrides(d), ConfigError);
  }
}

TEST_CASE("config files load and fail cleanly") {
  const char* path = "config_io_test.json";
  {
    std::ofstream out(path);
    out << R"({"train": {"epochs": 3, "seed": 42}})";
  }
  ExperimentConfig c = mor::load_config(path);
  CHECK(c.train.epochs == 3);
  CHECK(c.seed == 42);
  std::remove(path);

  CHECK_THROWS_AS(mor::load_config("no_such_config.json"), mor::IoError);

  {
    std::ofstream out(path);
    out << R"({"train": )";
  }
  std::string msg = thrown_message<ConfigError>([&] { mor::load_config(path); });
  CHECK(msg.find("byte") != std::string::npos);
  std::remove(path);
}
