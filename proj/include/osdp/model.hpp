#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "osdp/errors.hpp"

namespace osdp {

// One model operator as seen by the planner. Costs are parameterized per
// input sample so everything downstream scales linearly with batch size.
struct OperatorSpec {
  std::string id;
  std::int64_t param_count = 0;          // P, scalar parameters
  int bytes_per_element = 4;             // element width of the weights
  double activation_bytes_per_sample = 0.0;  // A
  double flops_per_sample = 0.0;
  bool splittable = false;
  std::int64_t hidden_size = 0;          // descriptive, drives the granularity heuristic

  // Exact product, no rounding (param counts stay far below 2^53).
  double weight_bytes() const {
    return static_cast<double>(param_count) * static_cast<double>(bytes_per_element);
  }

  bool operator==(const OperatorSpec&) const = default;
};

struct ModelSpec {
  std::string name;
  std::int64_t sequence_length = 512;
  std::vector<OperatorSpec> operators;

  bool operator==(const ModelSpec&) const = default;

  const OperatorSpec* find(const std::string& id) const {
    for (const auto& op : operators) {
      if (op.id == id) return &op;
    }
    return nullptr;
  }
};

// Cluster description: N ring-connected workers with a shared memory limit
// per worker and alpha/beta/gamma cost coefficients.
struct DeviceSpec {
  std::int64_t n_workers = 1;
  double mem_limit_bytes = 0.0;
  double alpha_s = 0.0;            // per-collective-step latency
  double beta_s_per_byte = 0.0;    // inverse bandwidth
  double gamma_s_per_flop = 0.0;   // device default compute coefficient
  double bytes_per_param_state = 16.0;  // weights + grads + optimizer states
  double fixed_overhead_bytes = 0.0;    // temporary buffers and other residents

  bool operator==(const DeviceSpec&) const = default;
};

inline void validate(const OperatorSpec& op) {
  if (op.id.empty()) {
    throw ValidationError("operator id must be non-empty");
  }
  if (op.param_count < 0) {
    throw ValidationError("operator '" + op.id + "': param_count must be >= 0");
  }
  if (op.bytes_per_element != 2 && op.bytes_per_element != 4 && op.bytes_per_element != 8) {
    throw ValidationError("operator '" + op.id + "': bytes_per_element must be one of {2, 4, 8}");
  }
  if (op.activation_bytes_per_sample < 0.0) {
    throw ValidationError("operator '" + op.id + "': activation_bytes_per_sample must be >= 0");
  }
  if (op.flops_per_sample < 0.0) {
    throw ValidationError("operator '" + op.id + "': flops_per_sample must be >= 0");
  }
  if (op.hidden_size < 0) {
    throw ValidationError("operator '" + op.id + "': hidden_size must be >= 0");
  }
}

inline void validate(const ModelSpec& model) {
  if (model.operators.empty()) {
    throw ValidationError("model '" + model.name + "': operator list must be non-empty");
  }
  if (model.sequence_length < 1) {
    throw ValidationError("model '" + model.name + "': sequence_length must be >= 1");
  }
  std::set<std::string> seen;
  for (const auto& op : model.operators) {
    validate(op);
    if (!seen.insert(op.id).second) {
      throw ValidationError("model '" + model.name + "': duplicate operator id '" + op.id + "'");
    }
  }
}

inline void validate(const DeviceSpec& device) {
  if (device.n_workers < 1) {
    throw ValidationError("device: n_workers must be >= 1");
  }
  if (device.mem_limit_bytes <= 0.0) {
    throw ValidationError("device: mem_limit_bytes must be > 0");
  }
  if (device.alpha_s < 0.0 || device.beta_s_per_byte < 0.0 || device.gamma_s_per_flop < 0.0 ||
      device.bytes_per_param_state < 0.0 || device.fixed_overhead_bytes < 0.0) {
    throw ValidationError("device: coefficients must be >= 0");
  }
}

namespace detail {

inline const nlohmann::json& require_field(const nlohmann::json& j, const char* field,
                                           const std::string& context) {
  auto it = j.find(field);
  if (it == j.end()) {
    throw ParseError(context + ": missing field '" + field + "'");
  }
  return *it;
}

template <typename T>
T field_as(const nlohmann::json& j, const char* field, const std::string& context) {
  try {
    return require_field(j, field, context).get<T>();
  } catch (const nlohmann::json::type_error& e) {
    throw ParseError(context + ": field '" + field + "' has wrong type (" + e.what() + ")");
  }
}

template <typename T>
T field_or(const nlohmann::json& j, const char* field, T fallback, const std::string& context) {
  auto it = j.find(field);
  if (it == j.end()) return fallback;
  try {
    return it->get<T>();
  } catch (const nlohmann::json::type_error& e) {
    throw ParseError(context + ": field '" + field + "' has wrong type (" + e.what() + ")");
  }
}

inline nlohmann::json parse_json(const std::string& text, const std::string& context) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(context + ": " + e.what());
  }
}

// Derived defaults for fields the spec file may omit. Both are linear in
// the per-sample workload, which is all the cost model relies on.
inline double default_activation_bytes(std::int64_t hidden, std::int64_t seq_len, int bpe) {
  return 2.0 * static_cast<double>(hidden) * static_cast<double>(seq_len) *
         static_cast<double>(bpe);
}

inline double default_flops(std::int64_t param_count, std::int64_t seq_len) {
  return 2.0 * static_cast<double>(param_count) * static_cast<double>(seq_len);
}

}  // namespace detail

inline ModelSpec model_from_json(const nlohmann::json& j) {
  ModelSpec model;
  model.name = detail::field_as<std::string>(j, "name", "model spec");
  model.sequence_length =
      detail::field_or<std::int64_t>(j, "sequence_length", 512, "model spec");
  const auto& ops = detail::require_field(j, "operators", "model spec");
  if (!ops.is_array()) {
    throw ParseError("model spec: field 'operators' must be an array");
  }
  for (const auto& jop : ops) {
    const std::string ctx =
        "model spec operator[" + std::to_string(model.operators.size()) + "]";
    OperatorSpec op;
    op.id = detail::field_as<std::string>(jop, "id", ctx);
    op.param_count = detail::field_as<std::int64_t>(jop, "param_count", ctx);
    op.bytes_per_element = detail::field_as<int>(jop, "bytes_per_element", ctx);
    op.splittable = detail::field_as<bool>(jop, "splittable", ctx);
    op.hidden_size = detail::field_as<std::int64_t>(jop, "hidden_size", ctx);
    op.activation_bytes_per_sample = detail::field_or<double>(
        jop, "activation_bytes_per_sample",
        detail::default_activation_bytes(op.hidden_size, model.sequence_length,
                                         op.bytes_per_element),
        ctx);
    op.flops_per_sample = detail::field_or<double>(
        jop, "flops_per_sample",
        detail::default_flops(op.param_count, model.sequence_length), ctx);
    model.operators.push_back(std::move(op));
  }
  validate(model);
  return model;
}

inline ModelSpec parse_model_spec(const std::string& text) {
  return model_from_json(detail::parse_json(text, "model spec"));
}

inline nlohmann::json to_json(const ModelSpec& model) {
  nlohmann::json j;
  j["name"] = model.name;
  j["sequence_length"] = model.sequence_length;
  j["operators"] = nlohmann::json::array();
  for (const auto& op : model.operators) {
    j["operators"].push_back({{"id", op.id},
                              {"param_count", op.param_count},
                              {"bytes_per_element", op.bytes_per_element},
                              {"activation_bytes_per_sample", op.activation_bytes_per_sample},
                              {"flops_per_sample", op.flops_per_sample},
                              {"splittable", op.splittable},
                              {"hidden_size", op.hidden_size}});
  }
  return j;
}

inline std::string serialize(const ModelSpec& model) { return to_json(model).dump(2); }

inline DeviceSpec device_from_json(const nlohmann::json& j) {
  DeviceSpec device;
  device.n_workers = detail::field_as<std::int64_t>(j, "n_workers", "device spec");
  device.mem_limit_bytes = detail::field_as<double>(j, "mem_limit_bytes", "device spec");
  device.alpha_s = detail::field_as<double>(j, "alpha_s", "device spec");
  device.beta_s_per_byte = detail::field_as<double>(j, "beta_s_per_byte", "device spec");
  device.gamma_s_per_flop = detail::field_as<double>(j, "gamma_s_per_flop", "device spec");
  device.bytes_per_param_state =
      detail::field_or<double>(j, "bytes_per_param_state", 16.0, "device spec");
  device.fixed_overhead_bytes =
      detail::field_or<double>(j, "fixed_overhead_bytes", 0.0, "device spec");
  validate(device);
  return device;
}

inline DeviceSpec parse_device_spec(const std::string& text) {
  return device_from_json(detail::parse_json(text, "device spec"));
}

inline nlohmann::json to_json(const DeviceSpec& device) {
  return {{"n_workers", device.n_workers},
          {"mem_limit_bytes", device.mem_limit_bytes},
          {"alpha_s", device.alpha_s},
          {"beta_s_per_byte", device.beta_s_per_byte},
          {"gamma_s_per_flop", device.gamma_s_per_flop},
          {"bytes_per_param_state", device.bytes_per_param_state},
          {"fixed_overhead_bytes", device.fixed_overhead_bytes}};
}

inline std::string serialize(const DeviceSpec& device) { return to_json(device).dump(2); }

// The three synthetic transformer families. Each layer contributes an
// attention operator (Q, K, V and output projections, 4*h^2 parameters)
// and an MLP operator (two projections with 4x expansion, 8*h^2).
enum class FamilyKind { ND, WS, IC };

inline const char* family_name(FamilyKind kind) {
  switch (kind) {
    case FamilyKind::ND: return "nd";
    case FamilyKind::WS: return "ws";
    case FamilyKind::IC: return "ic";
  }
  return "?";
}

inline ModelSpec generate_family(FamilyKind kind, const std::vector<std::int64_t>& hidden_per_layer,
                                 std::int64_t sequence_length = 512) {
  if (hidden_per_layer.empty()) {
    throw ValidationError("generate_family: layer count must be >= 1");
  }
  ModelSpec model;
  model.sequence_length = sequence_length;
  model.name = family_name(kind);
  model.name += "-" + std::to_string(hidden_per_layer.size()) + "x";
  bool uniform = true;
  for (auto h : hidden_per_layer) uniform = uniform && h == hidden_per_layer.front();
  model.name += uniform ? std::to_string(hidden_per_layer.front()) : std::string("var");

  for (std::size_t layer = 0; layer < hidden_per_layer.size(); ++layer) {
    const std::int64_t h = hidden_per_layer[layer];
    if (h < 1) {
      throw ValidationError("generate_family: hidden size must be >= 1 (layer " +
                            std::to_string(layer) + ")");
    }
    auto make = [&](const char* tag, std::int64_t param_count) {
      OperatorSpec op;
      op.id = "block" + std::to_string(layer) + "." + tag;
      op.param_count = param_count;
      op.bytes_per_element = 4;
      op.splittable = true;
      op.hidden_size = h;
      op.activation_bytes_per_sample =
          detail::default_activation_bytes(h, sequence_length, op.bytes_per_element);
      op.flops_per_sample = detail::default_flops(param_count, sequence_length);
      return op;
    };
    model.operators.push_back(make("attn", 4 * h * h));
    model.operators.push_back(make("mlp", 8 * h * h));
  }
  validate(model);
  return model;
}

inline ModelSpec generate_family(FamilyKind kind, std::int64_t layers, std::int64_t hidden,
                                 std::int64_t sequence_length = 512) {
  if (layers < 1) {
    throw ValidationError("generate_family: layer count must be >= 1");
  }
  if (kind == FamilyKind::IC) {
    throw ValidationError("generate_family: IC takes a per-layer hidden size list");
  }
  return generate_family(kind, std::vector<std::int64_t>(static_cast<std::size_t>(layers), hidden),
                         sequence_length);
}

}  // namespace osdp
