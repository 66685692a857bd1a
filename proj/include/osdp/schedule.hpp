#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "osdp/cost.hpp"
#include "osdp/errors.hpp"
#include "osdp/model.hpp"
#include "osdp/search.hpp"
#include "osdp/split.hpp"

namespace osdp {

// How the per-operator slice granularity is chosen before the search runs.
struct GranularityPolicy {
  enum class Mode { Fixed, Auto };
  Mode mode = Mode::Fixed;
  std::int64_t fixed_s = 1;
  double auto_budget_bytes = 0.0;  // per-operator surge budget in Auto mode
  std::int64_t s_max = 16;
  std::map<std::string, std::int64_t> per_op;  // explicit overrides win
};

struct ScheduleOptions {
  CostOptions cost;
  GranularityPolicy granularity;
  std::int64_t batch_cap = 4096;  // guards activation-free models
  bool parallel = true;
};

struct ExecutionPlan {
  std::vector<std::string> operator_ids;
  std::vector<Decision> decisions;
  std::int64_t batch_size = 1;  // per worker
  double iter_time_s = 0.0;
  double peak_mem_bytes = 0.0;
  double throughput_samples_per_s = 0.0;  // batch_size / iter_time_s, per worker
  bool checkpoint = false;
};

struct CandidateSummary {
  std::int64_t batch_size = 0;
  double iter_time_s = 0.0;
  double throughput_samples_per_s = 0.0;
};

struct ScheduleResult {
  bool feasible = false;
  ExecutionPlan plan;
  bool hit_batch_cap = false;  // sweep ended by the cap, not by memory
  std::vector<CandidateSummary> candidates;  // one per swept batch size
};

inline std::map<std::string, std::int64_t> resolve_granularities(const ModelSpec& model,
                                                                 const GranularityPolicy& policy) {
  std::map<std::string, std::int64_t> result;
  for (const auto& op : model.operators) {
    std::int64_t s = 1;
    if (auto it = policy.per_op.find(op.id); it != policy.per_op.end()) {
      s = it->second;
      if (s < 1) {
        throw ValidationError("granularity for operator '" + op.id + "' must be >= 1");
      }
    } else if (!op.splittable) {
      s = 1;
    } else if (policy.mode == GranularityPolicy::Mode::Fixed) {
      s = policy.fixed_s;
    } else {
      s = select_slice_granularity(op, policy.auto_budget_bytes, policy.s_max);
    }
    if (!op.splittable && s != 1) {
      throw ValidationError("operator '" + op.id + "' is not splittable; granularity must be 1");
    }
    result[op.id] = s;
  }
  return result;
}

// Memory of the all-max-k assignment: the least any plan of this batch size
// can occupy. The batch sweep stops once this exceeds the device limit.
inline double min_possible_memory(const ModelSpec& model, const DeviceSpec& device,
                                  std::int64_t batch_size, const CostOptions& opts,
                                  const std::map<std::string, std::int64_t>& granularities) {
  double persistent = 0.0;
  double surge = 0.0;
  for (const auto& op : model.operators) {
    const std::int64_t s = granularities.at(op.id);
    const Decision d{s, s};
    const MemoryFootprint mem = operator_memory(op, d, batch_size, device.n_workers, device, opts);
    persistent += mem.persistent_bytes;
    surge = std::max(surge, mem.transient_surge_bytes);
  }
  return persistent + surge + device.fixed_overhead_bytes;
}

enum class ForcedMode { None, AllDp, AllZdp };

namespace detail {

inline PlanCandidate plan_at_batch(const ModelSpec& model, const DeviceSpec& device,
                                   const Coefficients& coeffs, std::int64_t batch_size,
                                   const ScheduleOptions& opts,
                                   const std::map<std::string, std::int64_t>& granularities,
                                   ForcedMode mode) {
  const CostTable table =
      build_cost_table(model, device, coeffs, batch_size, opts.cost, granularities);
  switch (mode) {
    case ForcedMode::AllDp: return baseline_plans(table, device).all_dp;
    case ForcedMode::AllZdp: return baseline_plans(table, device).all_zdp;
    case ForcedMode::None: break;
  }
  return search_optimal(table, device);
}

}  // namespace detail

// Algorithm: sweep per-worker batch sizes 1, 2, 3, ..., search the optimal
// plan at each, and keep the throughput argmax (ties to the smaller batch).
// The sweep range is known up front from the all-max-k memory line, so the
// per-batch searches are independent and may run concurrently.
inline ScheduleResult schedule(const ModelSpec& model, const DeviceSpec& device,
                               const Coefficients& coeffs, const ScheduleOptions& opts = {},
                               ForcedMode mode = ForcedMode::None) {
  validate(model);
  validate(device);
  if (opts.batch_cap < 1) {
    throw ValidationError("schedule: batch cap must be >= 1");
  }
  const auto granularities = resolve_granularities(model, opts.granularity);

  auto min_mem = [&](std::int64_t b) {
    return min_possible_memory(model, device, b, opts.cost, granularities);
  };
  auto fits = [&](std::int64_t b) {
    if (min_mem(b) > device.mem_limit_bytes) return false;
    if (mode == ForcedMode::None) return true;
    // Forced baselines search a single assignment; sweep only while it fits.
    return detail::plan_at_batch(model, device, coeffs, b, opts, granularities, mode).feasible;
  };

  if (!fits(1)) {
    const double gap = min_mem(1) - device.mem_limit_bytes;
    if (mode != ForcedMode::None) {
      return ScheduleResult{};
    }
    std::ostringstream msg;
    msg << "model does not fit at batch size 1: minimum possible memory exceeds the limit by "
        << gap << " bytes";
    throw InfeasibleError(msg.str(), gap);
  }

  std::int64_t b_end = 1;  // feasibility is monotone in b, so scan forward
  while (b_end < opts.batch_cap && fits(b_end + 1)) ++b_end;
  const bool hit_cap = b_end == opts.batch_cap && fits(opts.batch_cap + 1);

  std::vector<PlanCandidate> plans(static_cast<std::size_t>(b_end));
  {
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const unsigned workers =
        opts.parallel ? std::min<unsigned>(hw, static_cast<unsigned>(b_end)) : 1u;
    std::atomic<std::int64_t> next{1};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto run = [&] {
      for (std::int64_t b = next.fetch_add(1); b <= b_end; b = next.fetch_add(1)) {
        try {
          plans[static_cast<std::size_t>(b - 1)] =
              detail::plan_at_batch(model, device, coeffs, b, opts, granularities, mode);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    };
    if (workers == 1) {
      run();
    } else {
      std::vector<std::thread> pool;
      for (unsigned w = 0; w < workers; ++w) pool.emplace_back(run);
      for (auto& t : pool) t.join();
    }
    if (error) std::rethrow_exception(error);
  }

  ScheduleResult result;
  result.hit_batch_cap = hit_cap;
  std::int64_t best_b = 0;
  double best_throughput = -1.0;
  for (std::int64_t b = 1; b <= b_end; ++b) {
    const PlanCandidate& plan = plans[static_cast<std::size_t>(b - 1)];
    if (!plan.feasible) continue;
    const double throughput = static_cast<double>(b) / plan.total_time_s;
    result.candidates.push_back({b, plan.total_time_s, throughput});
    if (throughput > best_throughput) {
      best_throughput = throughput;
      best_b = b;
    }
  }
  if (best_b == 0) {
    return ScheduleResult{};
  }

  const PlanCandidate& best = plans[static_cast<std::size_t>(best_b - 1)];
  result.feasible = true;
  result.plan.decisions = best.decisions;
  for (const auto& op : model.operators) result.plan.operator_ids.push_back(op.id);
  result.plan.batch_size = best_b;
  result.plan.iter_time_s = best.total_time_s;
  result.plan.peak_mem_bytes = best.peak_mem_bytes;
  result.plan.throughput_samples_per_s = static_cast<double>(best_b) / best.total_time_s;
  result.plan.checkpoint = opts.cost.checkpoint;
  return result;
}

struct MemoryBreakdown {
  double states_bytes = 0.0;
  double activation_bytes = 0.0;
  double surge_bytes = 0.0;
  double overhead_bytes = 0.0;
};

inline MemoryBreakdown memory_breakdown(const ExecutionPlan& plan, const ModelSpec& model,
                                        const DeviceSpec& device, const CostOptions& opts) {
  MemoryBreakdown breakdown;
  breakdown.overhead_bytes = device.fixed_overhead_bytes;
  for (std::size_t i = 0; i < plan.operator_ids.size(); ++i) {
    const OperatorSpec* op = model.find(plan.operator_ids[i]);
    if (op == nullptr) {
      throw ValidationError("plan references unknown operator '" + plan.operator_ids[i] + "'");
    }
    const Decision& d = plan.decisions[i];
    MemoryFootprint with_act =
        operator_memory(*op, d, plan.batch_size, device.n_workers, device, opts);
    MemoryFootprint states_only = operator_memory(*op, d, 0, device.n_workers, device, opts);
    breakdown.states_bytes += states_only.persistent_bytes;
    breakdown.activation_bytes += with_act.persistent_bytes - states_only.persistent_bytes;
    breakdown.surge_bytes = std::max(breakdown.surge_bytes, with_act.transient_surge_bytes);
  }
  return breakdown;
}

struct PlanReport {
  ExecutionPlan plan;
  std::int64_t n_workers = 1;
  double system_throughput_samples_per_s = 0.0;
  MemoryBreakdown memory;
  ScheduleResult all_dp;
  ScheduleResult all_zdp;
  // plan throughput over baseline throughput; +inf when the baseline is OOM
  double ratio_vs_all_dp = 0.0;
  double ratio_vs_all_zdp = 0.0;
};

inline PlanReport plan_report(const ScheduleResult& result, const ModelSpec& model,
                              const DeviceSpec& device, const Coefficients& coeffs,
                              const ScheduleOptions& opts = {}) {
  if (!result.feasible) {
    throw ValidationError("plan_report: no feasible plan to report");
  }
  PlanReport report;
  report.plan = result.plan;
  report.n_workers = device.n_workers;
  report.system_throughput_samples_per_s =
      result.plan.throughput_samples_per_s * static_cast<double>(device.n_workers);
  report.memory = memory_breakdown(result.plan, model, device, opts.cost);
  report.all_dp = schedule(model, device, coeffs, opts, ForcedMode::AllDp);
  report.all_zdp = schedule(model, device, coeffs, opts, ForcedMode::AllZdp);
  auto ratio = [&](const ScheduleResult& baseline) {
    if (!baseline.feasible) return std::numeric_limits<double>::infinity();
    return result.plan.throughput_samples_per_s / baseline.plan.throughput_samples_per_s;
  };
  report.ratio_vs_all_dp = ratio(report.all_dp);
  report.ratio_vs_all_zdp = ratio(report.all_zdp);
  return report;
}

namespace detail {

inline std::string format_bytes(double bytes) {
  std::ostringstream out;
  out.precision(2);
  out << std::fixed;
  if (bytes >= 1024.0 * 1024.0 * 1024.0) {
    out << bytes / (1024.0 * 1024.0 * 1024.0) << " GiB";
  } else if (bytes >= 1024.0 * 1024.0) {
    out << bytes / (1024.0 * 1024.0) << " MiB";
  } else {
    out << bytes << " B";
  }
  return out.str();
}

inline std::string format_ratio(double ratio) {
  if (std::isinf(ratio)) return "OOM baseline";
  std::ostringstream out;
  out.precision(3);
  out << std::fixed << ratio << "x";
  return out.str();
}

}  // namespace detail

inline std::string render(const PlanReport& report) {
  std::ostringstream out;
  const ExecutionPlan& plan = report.plan;
  out << "batch size (per worker): " << plan.batch_size << "\n";
  out << "iteration time: " << plan.iter_time_s << " s\n";
  out << "throughput: " << plan.throughput_samples_per_s << " samples/s per worker ("
      << report.system_throughput_samples_per_s << " system, x" << report.n_workers
      << " workers)\n";
  out << "peak memory: " << detail::format_bytes(plan.peak_mem_bytes) << " (states "
      << detail::format_bytes(report.memory.states_bytes) << ", activations "
      << detail::format_bytes(report.memory.activation_bytes) << ", surge "
      << detail::format_bytes(report.memory.surge_bytes) << ", overhead "
      << detail::format_bytes(report.memory.overhead_bytes) << ")\n";
  out << "checkpoint: " << (plan.checkpoint ? "on" : "off") << "\n";
  auto baseline_line = [&](const char* label, const ScheduleResult& baseline, double ratio) {
    out << label;
    if (!baseline.feasible) {
      out << "infeasible at every batch size\n";
      return;
    }
    out << baseline.plan.throughput_samples_per_s * static_cast<double>(report.n_workers)
        << " system samples/s at b=" << baseline.plan.batch_size << " (plan is "
        << detail::format_ratio(ratio) << ")\n";
  };
  baseline_line("baseline all-ZDP: ", report.all_zdp, report.ratio_vs_all_zdp);
  baseline_line("baseline all-DP:  ", report.all_dp, report.ratio_vs_all_dp);
  out << "decisions (operator s k):\n";
  for (std::size_t i = 0; i < plan.operator_ids.size(); ++i) {
    out << "  " << plan.operator_ids[i] << " " << plan.decisions[i].slice_granularity << " "
        << plan.decisions[i].zdp_slices << "\n";
  }
  return out.str();
}

inline constexpr const char* kPlanSchema = "osdp-plan/v1";

inline nlohmann::json to_json(const PlanReport& report) {
  const ExecutionPlan& plan = report.plan;
  nlohmann::json decisions = nlohmann::json::array();
  for (std::size_t i = 0; i < plan.operator_ids.size(); ++i) {
    decisions.push_back({{"operator_id", plan.operator_ids[i]},
                         {"s", plan.decisions[i].slice_granularity},
                         {"k", plan.decisions[i].zdp_slices}});
  }
  auto baseline_json = [](const ScheduleResult& baseline) -> nlohmann::json {
    if (!baseline.feasible) return {{"feasible", false}};
    return {{"feasible", true},
            {"batch_size", baseline.plan.batch_size},
            {"iter_time_s", baseline.plan.iter_time_s},
            {"throughput", baseline.plan.throughput_samples_per_s}};
  };
  return {{"schema", kPlanSchema},
          {"batch_size", plan.batch_size},
          {"iter_time_s", plan.iter_time_s},
          {"throughput", plan.throughput_samples_per_s},
          {"system_throughput", report.system_throughput_samples_per_s},
          {"peak_mem_bytes", plan.peak_mem_bytes},
          {"checkpoint", plan.checkpoint},
          {"decisions", decisions},
          {"baselines",
           {{"all_dp", baseline_json(report.all_dp)}, {"all_zdp", baseline_json(report.all_zdp)}}}};
}

inline std::string serialize(const PlanReport& report) { return to_json(report).dump(2); }

inline ExecutionPlan plan_from_json(const nlohmann::json& j) {
  const std::string schema = detail::field_as<std::string>(j, "schema", "plan file");
  if (schema != kPlanSchema) {
    throw ParseError("plan file: unsupported schema '" + schema + "' (expected " +
                     std::string(kPlanSchema) + ")");
  }
  ExecutionPlan plan;
  plan.batch_size = detail::field_as<std::int64_t>(j, "batch_size", "plan file");
  plan.iter_time_s = detail::field_as<double>(j, "iter_time_s", "plan file");
  plan.throughput_samples_per_s = detail::field_as<double>(j, "throughput", "plan file");
  plan.peak_mem_bytes = detail::field_as<double>(j, "peak_mem_bytes", "plan file");
  plan.checkpoint = detail::field_as<bool>(j, "checkpoint", "plan file");
  const auto& decisions = detail::require_field(j, "decisions", "plan file");
  if (!decisions.is_array()) {
    throw ParseError("plan file: field 'decisions' must be an array");
  }
  for (const auto& jd : decisions) {
    const std::string ctx = "plan decisions[" + std::to_string(plan.decisions.size()) + "]";
    plan.operator_ids.push_back(detail::field_as<std::string>(jd, "operator_id", ctx));
    plan.decisions.push_back({detail::field_as<std::int64_t>(jd, "s", ctx),
                              detail::field_as<std::int64_t>(jd, "k", ctx)});
  }
  if (plan.batch_size < 1) {
    throw ValidationError("plan file: batch_size must be >= 1");
  }
  if (plan.decisions.empty()) {
    throw ValidationError("plan file: decision list must be non-empty");
  }
  return plan;
}

inline ExecutionPlan parse_plan(const std::string& text) {
  return plan_from_json(detail::parse_json(text, "plan file"));
}

}  // namespace osdp
