#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "osdp/errors.hpp"
#include "osdp/model.hpp"
#include "osdp/split.hpp"

namespace osdp {

// Calibrated alpha-beta-gamma cost coefficients. gamma is kept per operator:
// a global gamma is just the special case where every entry is equal.
struct Coefficients {
  double alpha_s = 0.0;
  double beta_s_per_byte = 0.0;
  std::map<std::string, double> gamma_per_op;  // seconds per sample

  double gamma_for(const std::string& op_id) const {
    auto it = gamma_per_op.find(op_id);
    if (it == gamma_per_op.end()) {
      throw CalibrationError("no compute coefficient calibrated for operator '" + op_id + "'");
    }
    return it->second;
  }

  bool operator==(const Coefficients&) const = default;
};

struct CostOptions {
  bool checkpoint = false;
  // Fraction of activation bytes that stays resident when recomputation is
  // enabled (boundary activations only).
  double activation_checkpoint_fraction = 0.1;
  // Optional per-slice compute penalty for non-comm-bound regimes; the
  // serial summation is normally covered by overlap, so this defaults to 0.
  double split_penalty_s_per_slice = 0.0;
};

struct DecisionCost {
  double time_s = 0.0;
  double persistent_bytes = 0.0;       // model states + activations at batch b
  double transient_surge_bytes = 0.0;  // gather-time peak above persistent
};

struct MemoryFootprint {
  double persistent_bytes = 0.0;
  double transient_surge_bytes = 0.0;
};

// Ring all-gather over N workers: N-1 steps, S/N bytes per step.
inline double allgather_time(double size_bytes, std::int64_t n_workers,
                             const Coefficients& coeffs) {
  if (n_workers < 1) {
    throw ValidationError("allgather_time: n_workers must be >= 1");
  }
  if (size_bytes < 0.0) {
    throw ValidationError("allgather_time: size must be >= 0");
  }
  const double steps = static_cast<double>(n_workers - 1);
  return steps * coeffs.alpha_s +
         steps * (size_bytes / static_cast<double>(n_workers)) * coeffs.beta_s_per_byte;
}

// Ring reduce-scatter has the same step count and per-step volume.
inline double reduce_scatter_time(double size_bytes, std::int64_t n_workers,
                                  const Coefficients& coeffs) {
  return allgather_time(size_bytes, n_workers, coeffs);
}

// Number of full-weight collectives an operator pays per iteration:
// 2 in pure DP (gather + reduce-scatter), 3 in pure ZDP (backward
// re-gather on top), and the k ZDP slices of a mixed decision prorate
// the extra gather as k/s of the full cost, latency included. That keeps
// the time affine in k between the two closed-form endpoints.
inline double comm_multiplier(const Decision& d, bool checkpoint = false) {
  const double zdp_fraction =
      static_cast<double>(d.zdp_slices) / static_cast<double>(d.slice_granularity);
  // Recomputation re-gathers the ZDP slices once more before backward.
  return 2.0 + zdp_fraction + (checkpoint ? zdp_fraction : 0.0);
}

inline double comm_time(const OperatorSpec& op, const Decision& d, std::int64_t n_workers,
                        const Coefficients& coeffs, bool checkpoint = false) {
  require_admissible(d, op);
  return comm_multiplier(d, checkpoint) * allgather_time(op.weight_bytes(), n_workers, coeffs);
}

inline double compute_time(const OperatorSpec& op, const Decision& d, std::int64_t batch_size,
                           const Coefficients& coeffs, const CostOptions& opts = {}) {
  const double gamma = coeffs.gamma_for(op.id);
  double t = static_cast<double>(batch_size) * gamma;
  if (opts.checkpoint) {
    // One full forward recompute per iteration.
    t += static_cast<double>(batch_size) * gamma;
  }
  if (d.slice_granularity > 1) {
    t += opts.split_penalty_s_per_slice * static_cast<double>(d.slice_granularity - 1);
  }
  return t;
}

inline double operator_time(const OperatorSpec& op, const Decision& d, std::int64_t batch_size,
                            std::int64_t n_workers, const Coefficients& coeffs,
                            const CostOptions& opts = {}) {
  return comm_time(op, d, n_workers, coeffs, opts.checkpoint) +
         compute_time(op, d, batch_size, coeffs, opts);
}

// Persistent footprint: model states of the DP slices stay whole, states of
// the ZDP slices shrink to 1/N, activations grow linearly with batch size.
// The gather surge is reported separately; the search charges it as a peak
// term rather than summing it per operator.
inline MemoryFootprint operator_memory(const OperatorSpec& op, const Decision& d,
                                       std::int64_t batch_size, std::int64_t n_workers,
                                       const DeviceSpec& device, const CostOptions& opts = {}) {
  require_admissible(d, op);
  const double s = static_cast<double>(d.slice_granularity);
  const double k = static_cast<double>(d.zdp_slices);
  const double n = static_cast<double>(n_workers);
  const double state_fraction = ((s - k) + k / n) / s;
  const double states =
      device.bytes_per_param_state * static_cast<double>(op.param_count) * state_fraction;
  const double act_fraction = opts.checkpoint ? opts.activation_checkpoint_fraction : 1.0;
  const double activations =
      act_fraction * op.activation_bytes_per_sample * static_cast<double>(batch_size);
  MemoryFootprint mem;
  mem.persistent_bytes = states + activations;
  mem.transient_surge_bytes = peak_surge(op, d);
  return mem;
}

struct CostEntry {
  Decision decision;
  DecisionCost cost;
};

struct OperatorCosts {
  std::string op_id;
  std::vector<CostEntry> entries;  // sorted by ascending k
};

// Per-operator, per-decision costs at one batch size; the search engine's
// whole input.
struct CostTable {
  std::int64_t batch_size = 1;
  std::vector<OperatorCosts> operators;  // model order

  const OperatorCosts* find(const std::string& op_id) const {
    for (const auto& oc : operators) {
      if (oc.op_id == op_id) return &oc;
    }
    return nullptr;
  }
};

inline void validate(const CostTable& table) {
  if (table.operators.empty()) {
    throw ValidationError("cost table: empty");
  }
  for (const auto& oc : table.operators) {
    if (oc.entries.size() < 2) {
      throw ValidationError("cost table: operator '" + oc.op_id +
                            "' needs at least pure-DP and pure-ZDP entries");
    }
    const std::int64_t s = oc.entries.front().decision.slice_granularity;
    if (oc.entries.front().decision.zdp_slices != 0 ||
        oc.entries.back().decision.zdp_slices != s) {
      throw ValidationError("cost table: operator '" + oc.op_id +
                            "' must span pure DP (k=0) through pure ZDP (k=s)");
    }
    for (std::size_t i = 1; i < oc.entries.size(); ++i) {
      const auto& prev = oc.entries[i - 1];
      const auto& cur = oc.entries[i];
      if (cur.decision.slice_granularity != s) {
        throw ValidationError("cost table: operator '" + oc.op_id +
                              "' mixes slice granularities");
      }
      if (cur.decision.zdp_slices <= prev.decision.zdp_slices) {
        throw ValidationError("cost table: operator '" + oc.op_id +
                              "' entries must be sorted by ascending k");
      }
      if (cur.cost.time_s < prev.cost.time_s ||
          cur.cost.persistent_bytes > prev.cost.persistent_bytes) {
        throw ValidationError("cost table: operator '" + oc.op_id +
                              "' violates the monotone time/memory tradeoff");
      }
    }
  }
}

inline CostTable build_cost_table(const ModelSpec& model, const DeviceSpec& device,
                                  const Coefficients& coeffs, std::int64_t batch_size,
                                  const CostOptions& opts,
                                  const std::map<std::string, std::int64_t>& granularities) {
  if (batch_size < 1) {
    throw ValidationError("build_cost_table: batch_size must be >= 1");
  }
  CostTable table;
  table.batch_size = batch_size;
  for (const auto& op : model.operators) {
    std::int64_t s = 1;
    if (auto it = granularities.find(op.id); it != granularities.end()) s = it->second;
    if (!op.splittable && s != 1) {
      throw ValidationError("build_cost_table: operator '" + op.id +
                            "' is not splittable but granularity " + std::to_string(s) +
                            " was requested");
    }
    OperatorCosts oc;
    oc.op_id = op.id;
    for (std::int64_t k = 0; k <= s; ++k) {
      const Decision d{s, k};
      CostEntry entry;
      entry.decision = d;
      entry.cost.time_s = operator_time(op, d, batch_size, device.n_workers, coeffs, opts);
      const MemoryFootprint mem =
          operator_memory(op, d, batch_size, device.n_workers, device, opts);
      entry.cost.persistent_bytes = mem.persistent_bytes;
      entry.cost.transient_surge_bytes = mem.transient_surge_bytes;
      oc.entries.push_back(entry);
    }
    table.operators.push_back(std::move(oc));
  }
  validate(table);
  return table;
}

// Device-level default when no profiled measurements are available: gamma
// scales the operator's per-sample FLOP count by the device coefficient.
inline Coefficients default_coefficients(const ModelSpec& model, const DeviceSpec& device) {
  Coefficients coeffs;
  coeffs.alpha_s = device.alpha_s;
  coeffs.beta_s_per_byte = device.beta_s_per_byte;
  for (const auto& op : model.operators) {
    coeffs.gamma_per_op[op.id] = device.gamma_s_per_flop * op.flops_per_sample;
  }
  return coeffs;
}

inline void validate(const Coefficients& coeffs) {
  if (coeffs.alpha_s < 0.0 || coeffs.beta_s_per_byte < 0.0) {
    throw ValidationError("coefficients: alpha and beta must be >= 0");
  }
  for (const auto& [id, gamma] : coeffs.gamma_per_op) {
    if (gamma < 0.0) {
      throw ValidationError("coefficients: gamma for operator '" + id + "' must be >= 0");
    }
  }
}

inline Coefficients coefficients_from_json(const nlohmann::json& j) {
  Coefficients coeffs;
  coeffs.alpha_s = detail::field_as<double>(j, "alpha_s", "coefficients");
  coeffs.beta_s_per_byte = detail::field_as<double>(j, "beta_s_per_byte", "coefficients");
  const auto& gammas = detail::require_field(j, "gamma_per_op", "coefficients");
  if (!gammas.is_object()) {
    throw ParseError("coefficients: field 'gamma_per_op' must be an object");
  }
  for (auto it = gammas.begin(); it != gammas.end(); ++it) {
    if (!it.value().is_number()) {
      throw ParseError("coefficients: gamma for operator '" + it.key() + "' must be a number");
    }
    coeffs.gamma_per_op[it.key()] = it.value().get<double>();
  }
  validate(coeffs);
  return coeffs;
}

inline Coefficients parse_coefficients(const std::string& text) {
  return coefficients_from_json(detail::parse_json(text, "coefficients"));
}

inline nlohmann::json to_json(const Coefficients& coeffs) {
  nlohmann::json gammas = nlohmann::json::object();
  for (const auto& [id, gamma] : coeffs.gamma_per_op) gammas[id] = gamma;
  return {{"alpha_s", coeffs.alpha_s},
          {"beta_s_per_byte", coeffs.beta_s_per_byte},
          {"gamma_per_op", gammas}};
}

inline std::string serialize(const Coefficients& coeffs) { return to_json(coeffs).dump(2); }

}  // namespace osdp
