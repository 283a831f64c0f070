// Copyright (c) 2026 The mor-kit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mor/checkpoint.hpp"

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <iterator>
#include <sstream>
#include <string>

#include "json.hpp"

#include "mor/kernels.hpp"

namespace mor {

namespace {

using json = nlohmann::ordered_json;

double checked(double v) {
  if (!std::isfinite(v)) throw CheckpointError("checkpoint: non-finite parameter value");
  return v;
}

json encode_matrix(const Matrix& m) {
  for (double v : m.data) checked(v);
  return json{{"rows", m.rows}, {"cols", m.cols}, {"data", m.data}};
}

json encode_layer(const MoeLoraLayer& layer) {
  json experts = json::array();
  for (const LoraExpert& e : layer.bank.experts) {
    experts.push_back(json{{"a", encode_matrix(e.a)},
                           {"b", encode_matrix(e.b)},
                           {"scaling", checked(e.scaling)}});
  }
  json subs = json::array();
  for (const Matrix& s : layer.routers.subs) subs.push_back(encode_matrix(s));
  return json{
      {"mode", to_string(layer.mode)},
      {"k_experts", layer.k_experts},
      {"k_routers", layer.k_routers},
      {"temperature", checked(layer.temperature)},
      {"w0", encode_matrix(layer.w0)},
      {"bank",
       json{{"d_in", layer.bank.d_in},
            {"d_out", layer.bank.d_out},
            {"rank", layer.bank.rank},
            {"experts", experts}}},
      {"routers", json{{"main", encode_matrix(layer.routers.main)}, {"subs", subs}}},
  };
}

const json& field(const json& j, const char* key, const std::string& ctx) {
  if (!j.is_object()) throw CheckpointError(ctx + ": expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw CheckpointError(ctx + ": missing \"" + std::string(key) + "\"");
  return *it;
}

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
    if (!known) throw CheckpointError(ctx + ": unknown key \"" + it.key() + "\"");
  }
}

std::size_t get_size(const json& j, const char* key, const std::string& ctx) {
  const json& v = field(j, key, ctx);
  if (!v.is_number_unsigned()) {
    throw CheckpointError(ctx + ": \"" + key + "\" must be a nonnegative integer");
  }
  return v.get<std::size_t>();
}

double get_double(const json& j, const char* key, const std::string& ctx) {
  const json& v = field(j, key, ctx);
  if (!v.is_number() || !std::isfinite(v.get<double>())) {
    throw CheckpointError(ctx + ": \"" + key + "\" must be a finite number");
  }
  return v.get<double>();
}

Matrix decode_matrix(const json& j, const std::string& ctx) {
  std::size_t rows = get_size(j, "rows", ctx);
  std::size_t cols = get_size(j, "cols", ctx);
  const json& data = field(j, "data", ctx);
  if (!data.is_array()) throw CheckpointError(ctx + ": \"data\" must be an array");
  reject_extras(j, {"rows", "cols", "data"}, ctx);
  if (data.size() != rows * cols) {
    throw CheckpointError(ctx + ": \"data\" holds " + std::to_string(data.size()) +
                          " values, want " + std::to_string(rows * cols));
  }
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.data.size(); ++i) {
    const json& v = data[i];
    if (!v.is_number() || !std::isfinite(v.get<double>())) {
      throw CheckpointError(ctx + ": data[" + std::to_string(i) +
                            "] is not a finite number");
    }
    m.data[i] = v.get<double>();
  }
  return m;
}

MoeLoraLayer decode_layer(const json& j, const std::string& ctx) {
  MoeLoraLayer layer;
  const json& mode = field(j, "mode", ctx);
  if (!mode.is_string()) throw CheckpointError(ctx + ": \"mode\" must be a string");
  try {
    layer.mode = parse_routing_mode(mode.get<std::string>());
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(ctx + ": " + e.what());
  }
  layer.k_experts = get_size(j, "k_experts", ctx);
  layer.k_routers = get_size(j, "k_routers", ctx);
  layer.temperature = get_double(j, "temperature", ctx);
  if (!(layer.temperature > 0.0)) {
    throw CheckpointError(ctx + ": \"temperature\" must be > 0");
  }
  layer.w0 = decode_matrix(field(j, "w0", ctx), ctx + ".w0");

  const json& bank = field(j, "bank", ctx);
  std::string bank_ctx = ctx + ".bank";
  layer.bank.d_in = get_size(bank, "d_in", bank_ctx);
  layer.bank.d_out = get_size(bank, "d_out", bank_ctx);
  layer.bank.rank = get_size(bank, "rank", bank_ctx);
  const json& experts = field(bank, "experts", bank_ctx);
  if (!experts.is_array()) throw CheckpointError(bank_ctx + ": \"experts\" must be an array");
  reject_extras(bank, {"d_in", "d_out", "rank", "experts"}, bank_ctx);
  layer.bank.experts.reserve(experts.size());
  for (std::size_t i = 0; i < experts.size(); ++i) {
    std::string expert_ctx = bank_ctx + ".experts[" + std::to_string(i) + "]";
    const json& e = experts[i];
    LoraExpert expert;
    expert.a = decode_matrix(field(e, "a", expert_ctx), expert_ctx + ".a");
    expert.b = decode_matrix(field(e, "b", expert_ctx), expert_ctx + ".b");
    expert.scaling = get_double(e, "scaling", expert_ctx);
    reject_extras(e, {"a", "b", "scaling"}, expert_ctx);
    layer.bank.experts.push_back(std::move(expert));
  }

  const json& routers = field(j, "routers", ctx);
  std::string routers_ctx = ctx + ".routers";
  layer.routers.main = decode_matrix(field(routers, "main", routers_ctx), routers_ctx + ".main");
  const json& subs = field(routers, "subs", routers_ctx);
  if (!subs.is_array()) throw CheckpointError(routers_ctx + ": \"subs\" must be an array");
  reject_extras(routers, {"main", "subs"}, routers_ctx);
  layer.routers.subs.reserve(subs.size());
  for (std::size_t s = 0; s < subs.size(); ++s) {
    layer.routers.subs.push_back(
        decode_matrix(subs[s], routers_ctx + ".subs[" + std::to_string(s) + "]"));
  }

  reject_extras(j, {"mode", "k_experts", "k_routers", "temperature", "w0", "bank", "routers"},
                ctx);
  layer.revision = 0;
  try {
    validate(layer);
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(ctx + ": " + e.what());
  }
  return layer;
}

double frob(double sum_sq) { return std::sqrt(sum_sq); }

double sum_sq(const Matrix& m) {
  return kernels::dot(m.data.data(), m.data.data(), m.data.size());
}

}  // namespace

std::string encode_model(const Model& model) {
  if (model.layers.empty()) throw CheckpointError("checkpoint: model has no layers");
  json layers = json::array();
  for (const MoeLoraLayer& layer : model.layers) layers.push_back(encode_layer(layer));
  json root{{"schema", kCheckpointSchema}, {"version", kCheckpointVersion}, {"layers", layers}};
  return root.dump(2) + "\n";
}

Model decode_model(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw CheckpointError("checkpoint: parse error at byte " + std::to_string(e.byte) + ": " +
                          e.what());
  }
  if (!root.is_object()) throw CheckpointError("checkpoint: top level must be an object");
  const json& schema = field(root, "schema", "checkpoint");
  if (!schema.is_string() || schema.get<std::string>() != kCheckpointSchema) {
    throw CheckpointError(std::string("checkpoint: schema tag is not \"") + kCheckpointSchema +
                          "\"");
  }
  std::size_t version = get_size(root, "version", "checkpoint");
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
  }
  const json& layers = field(root, "layers", "checkpoint");
  if (!layers.is_array() || layers.empty()) {
    throw CheckpointError("checkpoint: \"layers\" must be a nonempty array");
  }
  reject_extras(root, {"schema", "version", "layers"}, "checkpoint");

  Model model;
  model.layers.reserve(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    model.layers.push_back(decode_layer(layers[i], "layers[" + std::to_string(i) + "]"));
  }
  for (std::size_t i = 0; i + 1 < model.layers.size(); ++i) {
    if (model.layers[i].d_out() != model.layers[i + 1].d_in()) {
      throw CheckpointError("checkpoint: layer " + std::to_string(i) + " output dim " +
                            std::to_string(model.layers[i].d_out()) + " does not feed layer " +
                            std::to_string(i + 1) + " input dim " +
                            std::to_string(model.layers[i + 1].d_in()));
    }
  }
  return model;
}

void save_model(const Model& model, const std::string& path) {
  std::string text = encode_model(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("checkpoint: cannot open for writing: " + path);
  out.write(text.data(), std::streamsize(text.size()));
  out.flush();
  if (!out) throw IoError("checkpoint: write failed: " + path);
}

Model load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint: cannot open: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("checkpoint: read failed: " + path);
  return decode_model(text);
}

std::string inspect_model(const Model& model) {
  if (model.layers.empty()) throw CheckpointError("checkpoint: model has no layers");
  std::ostringstream out;
  out << kCheckpointSchema << " v" << kCheckpointVersion << "\n";
  out << "mode " << to_string(model.layers.front().mode) << ", layers " << model.layers.size()
      << ", " << model.d_in() << " -> " << model.d_out() << "\n";
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const MoeLoraLayer& layer = model.layers[i];
    out << "layer " << i << ": " << layer.d_in() << " -> " << layer.d_out() << ", experts "
        << layer.bank.n() << " (rank " << layer.bank.rank << ", top-" << layer.k_experts
        << "), routers " << layer.routers.n_routers() << " (top-" << layer.k_routers
        << "), temperature " << layer.temperature << "\n";
    double a_sq = 0.0;
    double b_sq = 0.0;
    for (const LoraExpert& e : layer.bank.experts) {
      a_sq += sum_sq(e.a);
      b_sq += sum_sq(e.b);
    }
    double subs_sq = 0.0;
    for (const Matrix& s : layer.routers.subs) subs_sq += sum_sq(s);
    out << "  |w0| " << frob(sum_sq(layer.w0)) << "  |A| " << frob(a_sq) << "  |B| "
        << frob(b_sq) << "  |subs| " << frob(subs_sq) << "  |main| "
        << frob(sum_sq(layer.routers.main)) << "\n";
  }
  return out.str();
}

std::string inspect_checkpoint(const std::string& path) {
  return inspect_model(load_model(path));
}

}  // namespace mor
