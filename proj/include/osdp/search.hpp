#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "osdp/cost.hpp"
#include "osdp/errors.hpp"
#include "osdp/model.hpp"
#include "osdp/split.hpp"

namespace osdp {

struct PlanCandidate {
  std::vector<Decision> decisions;  // one per operator, model order; empty if infeasible
  double total_time_s = std::numeric_limits<double>::infinity();
  double peak_mem_bytes = 0.0;
  bool feasible = false;
};

struct SearchOptions {
  bool prune = true;  // disabling must not change the result, only the runtime
};

// Peak memory of a full assignment: all persistent footprints coexist, but
// gather surges are serialized, so only the largest one stacks on top.
inline PlanCandidate evaluate_plan(const CostTable& table, const DeviceSpec& device,
                                   const std::vector<std::size_t>& choices) {
  PlanCandidate plan;
  double time = 0.0;
  double persistent = 0.0;
  double surge = 0.0;
  for (std::size_t i = 0; i < table.operators.size(); ++i) {
    const CostEntry& entry = table.operators[i].entries.at(choices[i]);
    plan.decisions.push_back(entry.decision);
    time += entry.cost.time_s;
    persistent += entry.cost.persistent_bytes;
    surge = std::max(surge, entry.cost.transient_surge_bytes);
  }
  plan.total_time_s = time;
  plan.peak_mem_bytes = persistent + surge + device.fixed_overhead_bytes;
  plan.feasible = plan.peak_mem_bytes <= device.mem_limit_bytes;
  return plan;
}

namespace detail {

struct SearchState {
  const CostTable* table = nullptr;
  const DeviceSpec* device = nullptr;
  bool prune = true;
  // Suffix bounds over operators [i, n): admissible relaxations of time and
  // peak memory for any completion of a partial assignment.
  std::vector<double> suffix_min_time;
  std::vector<double> suffix_min_persistent;
  std::vector<double> suffix_surge_floor;
  std::vector<std::size_t> current;
  std::vector<std::size_t> best;
  double best_time = std::numeric_limits<double>::infinity();
  bool found = false;
};

// Depth-first search in operator order with ascending k. Leaves are visited
// in lexicographic decision order, so the first optimum found is the
// lexicographically smallest one and later ties can be pruned outright
// (bound >= incumbent is enough once any solution is recorded).
inline void search_rec(SearchState& st, std::size_t i, double time_acc, double persistent_acc,
                       double surge_acc) {
  const auto& ops = st.table->operators;
  if (st.prune) {
    if (st.found && time_acc + st.suffix_min_time[i] >= st.best_time) return;
    const double mem_floor = persistent_acc + st.suffix_min_persistent[i] +
                             std::max(surge_acc, st.suffix_surge_floor[i]) +
                             st.device->fixed_overhead_bytes;
    if (mem_floor > st.device->mem_limit_bytes) return;
  }
  if (i == ops.size()) {
    const double peak = persistent_acc + surge_acc + st.device->fixed_overhead_bytes;
    if (peak > st.device->mem_limit_bytes) return;
    if (!st.found || time_acc < st.best_time) {
      st.found = true;
      st.best_time = time_acc;
      st.best = st.current;
    }
    return;
  }
  for (std::size_t c = 0; c < ops[i].entries.size(); ++c) {
    const DecisionCost& cost = ops[i].entries[c].cost;
    st.current[i] = c;
    search_rec(st, i + 1, time_acc + cost.time_s, persistent_acc + cost.persistent_bytes,
               std::max(surge_acc, cost.transient_surge_bytes));
  }
}

}  // namespace detail

// Minimum-total-time feasible assignment, exact. Ties on time go to the
// lexicographically smallest decision vector by (operator index, k).
inline PlanCandidate search_optimal(const CostTable& table, const DeviceSpec& device,
                                    const SearchOptions& opts = {}) {
  validate(table);
  const std::size_t n = table.operators.size();

  detail::SearchState st;
  st.table = &table;
  st.device = &device;
  st.prune = opts.prune;
  st.suffix_min_time.assign(n + 1, 0.0);
  st.suffix_min_persistent.assign(n + 1, 0.0);
  st.suffix_surge_floor.assign(n + 1, 0.0);
  for (std::size_t i = n; i-- > 0;) {
    double min_time = std::numeric_limits<double>::infinity();
    double min_persistent = std::numeric_limits<double>::infinity();
    double min_surge = std::numeric_limits<double>::infinity();
    for (const auto& entry : table.operators[i].entries) {
      min_time = std::min(min_time, entry.cost.time_s);
      min_persistent = std::min(min_persistent, entry.cost.persistent_bytes);
      min_surge = std::min(min_surge, entry.cost.transient_surge_bytes);
    }
    st.suffix_min_time[i] = min_time + st.suffix_min_time[i + 1];
    st.suffix_min_persistent[i] = min_persistent + st.suffix_min_persistent[i + 1];
    st.suffix_surge_floor[i] = std::max(min_surge, st.suffix_surge_floor[i + 1]);
  }
  st.current.assign(n, 0);

  detail::search_rec(st, 0, 0.0, 0.0, 0.0);

  if (!st.found) {
    return PlanCandidate{};
  }
  return evaluate_plan(table, device, st.best);
}

// Exhaustive enumeration in the same lexicographic order; verification
// oracle for search_optimal on small instances.
inline PlanCandidate brute_force_search(const CostTable& table, const DeviceSpec& device) {
  validate(table);
  const std::size_t n = table.operators.size();
  double combinations = 1.0;
  for (const auto& oc : table.operators) {
    combinations *= static_cast<double>(oc.entries.size());
  }
  if (combinations > 1e7) {
    throw ValidationError("brute_force_search: instance too large (" +
                          std::to_string(combinations) + " assignments)");
  }

  std::vector<std::size_t> choices(n, 0);
  PlanCandidate best;
  bool done = false;
  while (!done) {
    PlanCandidate plan = evaluate_plan(table, device, choices);
    if (plan.feasible && (!best.feasible || plan.total_time_s < best.total_time_s)) {
      best = plan;
    }
    // Odometer increment, last operator fastest, so visiting order is
    // lexicographic in the decision vector.
    done = true;
    for (std::size_t i = n; i-- > 0;) {
      if (++choices[i] < table.operators[i].entries.size()) {
        done = false;
        break;
      }
      choices[i] = 0;
    }
  }
  return best;
}

struct BaselinePair {
  PlanCandidate all_dp;   // k = 0 everywhere: vanilla data parallel
  PlanCandidate all_zdp;  // k = s everywhere: the FSDP baseline
};

inline BaselinePair baseline_plans(const CostTable& table, const DeviceSpec& device) {
  validate(table);
  std::vector<std::size_t> dp_choices, zdp_choices;
  for (const auto& oc : table.operators) {
    dp_choices.push_back(0);
    zdp_choices.push_back(oc.entries.size() - 1);
  }
  return BaselinePair{evaluate_plan(table, device, dp_choices),
                      evaluate_plan(table, device, zdp_choices)};
}

}  // namespace osdp
