#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "osdp/cost.hpp"
#include "osdp/errors.hpp"
#include "osdp/model.hpp"
#include "osdp/schedule.hpp"
#include "osdp/split.hpp"

namespace osdp {

enum class SimEventKind {
  allgather,
  compute_fwd,
  compute_bwd,
  discard,
  reduce_scatter,
  recompute_gather,
};

inline const char* to_string(SimEventKind kind) {
  switch (kind) {
    case SimEventKind::allgather: return "allgather";
    case SimEventKind::compute_fwd: return "compute_fwd";
    case SimEventKind::compute_bwd: return "compute_bwd";
    case SimEventKind::discard: return "discard";
    case SimEventKind::reduce_scatter: return "reduce_scatter";
    case SimEventKind::recompute_gather: return "recompute_gather";
  }
  return "?";
}

// One timeline entry. Memory deltas apply at t_start for gather kinds (the
// buffer is allocated up front) and at t_end for everything else.
struct SimEvent {
  double t_start = 0.0;
  double t_end = 0.0;
  SimEventKind kind = SimEventKind::allgather;
  std::string operator_id;
  std::int64_t slice_index = -1;  // -1 for operator-level events
  double mem_delta_bytes = 0.0;
};

struct SimOptions {
  // Off: every event runs on one serialized timeline, so the iteration time
  // is exactly the sum of the analytic per-operator times. On: one compute
  // stream plus one communication stream with a single-slot gather prefetch.
  bool overlap = false;
  CostOptions cost;  // checkpoint flag is taken from the plan, not from here
};

struct SimReport {
  double iter_time_s = 0.0;
  double peak_mem_bytes = 0.0;
  double baseline_resident_bytes = 0.0;  // states + fixed overhead before the trace starts
  double analytic_peak_mem_bytes = 0.0;
  bool peak_exceeds_plan = false;  // prefetch raised the peak above the analytic formula
  double total_comm_s = 0.0;
  double total_compute_s = 0.0;
  std::vector<SimEvent> timeline;
};

namespace detail {

// Max prefix-sum of the trace deltas on top of the resident baseline.
// Gather allocations count from t_start, releases and activations from t_end.
inline double replay_peak(const std::vector<SimEvent>& timeline, double baseline) {
  struct DeltaPoint {
    double t;
    std::size_t order;
    double delta;
  };
  std::vector<DeltaPoint> points;
  for (std::size_t idx = 0; idx < timeline.size(); ++idx) {
    const SimEvent& ev = timeline[idx];
    if (ev.mem_delta_bytes == 0.0) continue;
    const bool at_start =
        ev.kind == SimEventKind::allgather || ev.kind == SimEventKind::recompute_gather;
    points.push_back({at_start ? ev.t_start : ev.t_end, idx, ev.mem_delta_bytes});
  }
  std::sort(points.begin(), points.end(), [](const DeltaPoint& a, const DeltaPoint& b) {
    if (a.t != b.t) return a.t < b.t;
    return a.order < b.order;
  });
  double level = baseline;
  double peak = level;
  for (const auto& p : points) {
    level += p.delta;
    peak = std::max(peak, level);
  }
  return peak;
}

struct SimStep {
  bool has_comm = false;
  SimEventKind comm_kind = SimEventKind::allgather;
  double comm_dur = 0.0;
  double comm_delta = 0.0;
  bool prefetchable = false;  // gathers may overlap the previous compute

  bool has_compute = false;
  SimEventKind compute_kind = SimEventKind::compute_fwd;
  double compute_dur = 0.0;
  double compute_end_delta = 0.0;  // activations materialized by this compute
  double discard_delta = 0.0;      // weights released right after this compute

  const OperatorSpec* op = nullptr;
  std::int64_t slice = -1;
};

}  // namespace detail

// Replays one training iteration of the plan per the DP/ZDP protocol:
// forward gathers every operator's weights (ZDP slices serially, discarded
// after use), backward re-gathers ZDP slices in reverse operator order
// (twice under checkpoint: once for recompute, once for the gradient pass),
// and reduce-scatters each operator's gradients after its backward compute.
// Event durations come from the same alpha-beta-gamma components as the
// analytic cost model.
inline SimReport simulate(const ExecutionPlan& plan, const ModelSpec& model,
                          const DeviceSpec& device, const Coefficients& coeffs,
                          const SimOptions& opts = {}) {
  validate(model);
  validate(device);
  if (plan.operator_ids.size() != plan.decisions.size()) {
    throw ValidationError("simulate: plan operator/decision lists disagree");
  }
  if (plan.operator_ids.size() != model.operators.size()) {
    throw ValidationError("simulate: plan covers " + std::to_string(plan.operator_ids.size()) +
                          " operators but the model has " +
                          std::to_string(model.operators.size()));
  }
  std::vector<const OperatorSpec*> ops;
  for (const auto& id : plan.operator_ids) {
    const OperatorSpec* op = model.find(id);
    if (op == nullptr) {
      throw ValidationError("simulate: plan references unknown operator '" + id + "'");
    }
    ops.push_back(op);
  }
  CostOptions cost_opts = opts.cost;
  cost_opts.checkpoint = plan.checkpoint;

  const double fwd_fraction = 1.0 / 3.0;  // backward costs about twice the forward
  const std::int64_t n = device.n_workers;
  const std::int64_t b = plan.batch_size;

  std::vector<detail::SimStep> steps;
  std::vector<double> activation_bytes(ops.size(), 0.0);

  auto slice_plan = [&](std::size_t i) {
    const OperatorSpec& op = *ops[i];
    const Decision& d = plan.decisions[i];
    require_admissible(d, op);
    struct SliceInfo {
      std::int64_t s, k;
      double gather_dur, slice_bytes, gamma;
    };
    return SliceInfo{d.slice_granularity, d.zdp_slices,
                     allgather_time(op.weight_bytes(), n, coeffs) /
                         static_cast<double>(d.slice_granularity),
                     op.weight_bytes() / static_cast<double>(d.slice_granularity),
                     coeffs.gamma_for(op.id)};
  };

  // Forward: DP slices first, the trailing k slices run in ZDP mode.
  for (std::size_t i = 0; i < ops.size(); ++i) {
    const auto info = slice_plan(i);
    const double bgamma = static_cast<double>(b) * info.gamma;
    activation_bytes[i] =
        (cost_opts.checkpoint ? cost_opts.activation_checkpoint_fraction : 1.0) *
        ops[i]->activation_bytes_per_sample * static_cast<double>(b);
    for (std::int64_t j = 0; j < info.s; ++j) {
      const bool zdp = j >= info.s - info.k;
      detail::SimStep step;
      step.op = ops[i];
      step.slice = j;
      step.has_comm = true;
      step.comm_kind = SimEventKind::allgather;
      step.comm_dur = info.gather_dur;
      step.comm_delta = zdp ? info.slice_bytes : 0.0;
      step.prefetchable = true;
      step.has_compute = true;
      step.compute_kind = SimEventKind::compute_fwd;
      step.compute_dur = fwd_fraction * bgamma / static_cast<double>(info.s);
      if (j > 0) step.compute_dur += cost_opts.split_penalty_s_per_slice;
      if (j == info.s - 1) step.compute_end_delta = activation_bytes[i];
      if (zdp) step.discard_delta = -info.slice_bytes;
      steps.push_back(step);
    }
  }

  // Backward in reverse operator order.
  for (std::size_t ri = ops.size(); ri-- > 0;) {
    const auto info = slice_plan(ri);
    const double bgamma = static_cast<double>(b) * info.gamma;
    if (cost_opts.checkpoint) {
      for (std::int64_t j = 0; j < info.s; ++j) {
        const bool zdp = j >= info.s - info.k;
        detail::SimStep step;
        step.op = ops[ri];
        step.slice = j;
        if (zdp) {
          step.has_comm = true;
          step.comm_kind = SimEventKind::recompute_gather;
          step.comm_dur = info.gather_dur;
          step.comm_delta = info.slice_bytes;
          step.prefetchable = true;
          step.discard_delta = -info.slice_bytes;
        }
        step.has_compute = true;
        step.compute_kind = SimEventKind::compute_fwd;  // the recomputed forward
        step.compute_dur = bgamma / static_cast<double>(info.s);
        steps.push_back(step);
      }
    }
    for (std::int64_t j = 0; j < info.s; ++j) {
      const bool zdp = j >= info.s - info.k;
      detail::SimStep step;
      step.op = ops[ri];
      step.slice = j;
      if (zdp) {
        step.has_comm = true;
        step.comm_kind = SimEventKind::allgather;
        step.comm_dur = info.gather_dur;
        step.comm_delta = info.slice_bytes;
        step.prefetchable = true;
        step.discard_delta = -info.slice_bytes;
      }
      step.has_compute = true;
      step.compute_kind = SimEventKind::compute_bwd;
      step.compute_dur = (1.0 - fwd_fraction) * bgamma / static_cast<double>(info.s);
      steps.push_back(step);
    }
    detail::SimStep rs;
    rs.op = ops[ri];
    rs.has_comm = true;
    rs.comm_kind = SimEventKind::reduce_scatter;
    rs.comm_dur = reduce_scatter_time(ops[ri]->weight_bytes(), n, coeffs);
    rs.prefetchable = false;  // gradients are only ready once the compute is done
    steps.push_back(rs);
  }

  // Schedule. Serial mode chains every event on one cursor; overlap mode
  // keeps one compute and one comm cursor, with gathers allowed to start
  // once the previous compute has started (single-slot prefetch).
  SimReport report;
  double comm_free = 0.0;
  double comp_free = 0.0;
  double prev_compute_start = 0.0;
  double serial_cursor = 0.0;
  double t_max = 0.0;

  auto emit = [&](double t0, double t1, SimEventKind kind, const OperatorSpec* op,
                  std::int64_t slice, double delta) {
    SimEvent ev;
    ev.t_start = t0;
    ev.t_end = t1;
    ev.kind = kind;
    ev.operator_id = op != nullptr ? op->id : "";
    ev.slice_index = slice;
    ev.mem_delta_bytes = delta;
    report.timeline.push_back(std::move(ev));
    t_max = std::max(t_max, t1);
  };

  for (const auto& step : steps) {
    double comm_end = 0.0;
    if (step.has_comm) {
      double start;
      if (!opts.overlap) {
        start = serial_cursor;
        serial_cursor += step.comm_dur;
      } else {
        start = std::max(comm_free, step.prefetchable ? prev_compute_start : comp_free);
      }
      comm_end = start + step.comm_dur;
      comm_free = std::max(comm_free, comm_end);
      report.total_comm_s += step.comm_dur;
      if (step.comm_dur > 0.0 || step.comm_delta != 0.0) {
        emit(start, comm_end, step.comm_kind, step.op, step.slice, step.comm_delta);
      }
    }
    if (step.has_compute) {
      double start;
      if (!opts.overlap) {
        start = serial_cursor;
        serial_cursor += step.compute_dur;
      } else {
        start = std::max(comp_free, step.has_comm ? comm_end : 0.0);
      }
      const double end = start + step.compute_dur;
      comp_free = std::max(comp_free, end);
      prev_compute_start = start;
      report.total_compute_s += step.compute_dur;
      emit(start, end, step.compute_kind, step.op, step.slice, step.compute_end_delta);
      if (step.discard_delta != 0.0) {
        emit(end, end, SimEventKind::discard, step.op, step.slice, step.discard_delta);
      }
    } else if (step.discard_delta != 0.0) {
      emit(comm_end, comm_end, SimEventKind::discard, step.op, step.slice, step.discard_delta);
    }
  }

  report.iter_time_s = opts.overlap ? t_max : serial_cursor;

  // Activations live until the gradient sync barrier at the end of the
  // iteration; release them there so the trace sums back to zero.
  for (std::size_t i = 0; i < ops.size(); ++i) {
    if (activation_bytes[i] != 0.0) {
      emit(report.iter_time_s, report.iter_time_s, SimEventKind::discard, ops[i], -1,
           -activation_bytes[i]);
    }
  }

  // Peak: resident states plus the running sum of the trace deltas.
  double analytic_persistent = 0.0;
  double analytic_surge = 0.0;
  for (std::size_t i = 0; i < ops.size(); ++i) {
    const MemoryFootprint mem =
        operator_memory(*ops[i], plan.decisions[i], b, n, device, cost_opts);
    const MemoryFootprint states_only =
        operator_memory(*ops[i], plan.decisions[i], 0, n, device, cost_opts);
    analytic_persistent += mem.persistent_bytes;
    analytic_surge = std::max(analytic_surge, mem.transient_surge_bytes);
    report.baseline_resident_bytes += states_only.persistent_bytes;
  }
  report.baseline_resident_bytes += device.fixed_overhead_bytes;
  report.analytic_peak_mem_bytes =
      analytic_persistent + analytic_surge + device.fixed_overhead_bytes;

  struct DeltaPoint {
    double t;
    std::size_t order;
    double delta;
  };
  std::vector<DeltaPoint> points;
  for (std::size_t idx = 0; idx < report.timeline.size(); ++idx) {
    const SimEvent& ev = report.timeline[idx];
    if (ev.mem_delta_bytes == 0.0) continue;
    const bool at_start =
        ev.kind == SimEventKind::allgather || ev.kind == SimEventKind::recompute_gather;
    points.push_back({at_start ? ev.t_start : ev.t_end, idx, ev.mem_delta_bytes});
  }
  std::sort(points.begin(), points.end(), [](const DeltaPoint& a, const DeltaPoint& b2) {
    if (a.t != b2.t) return a.t < b2.t;
    return a.order < b2.order;
  });
  double level = report.baseline_resident_bytes;
  report.peak_mem_bytes = level;
  for (const auto& p : points) {
    level += p.delta;
    report.peak_mem_bytes = std::max(report.peak_mem_bytes, level);
  }
  report.peak_exceeds_plan =
      report.peak_mem_bytes >
      report.analytic_peak_mem_bytes * (1.0 + 1e-12) + 1e-6;
  return report;
}

// Max prefix-sum of the trace deltas on top of the resident baseline;
// recomputed from the timeline alone as a consistency check.
inline double peak_memory_trace(const SimReport& report) {
  struct DeltaPoint {
    double t;
    std::size_t order;
    double delta;
  };
  std::vector<DeltaPoint> points;
  for (std::size_t idx = 0; idx < report.timeline.size(); ++idx) {
    const SimEvent& ev = report.timeline[idx];
    if (ev.mem_delta_bytes == 0.0) continue;
    const bool at_start =
        ev.kind == SimEventKind::allgather || ev.kind == SimEventKind::recompute_gather;
    points.push_back({at_start ? ev.t_start : ev.t_end, idx, ev.mem_delta_bytes});
  }
  std::sort(points.begin(), points.end(), [](const DeltaPoint& a, const DeltaPoint& b) {
    if (a.t != b.t) return a.t < b.t;
    return a.order < b.order;
  });
  double level = report.baseline_resident_bytes;
  double peak = level;
  for (const auto& p : points) {
    level += p.delta;
    peak = std::max(peak, level);
  }
  return peak;
}

// One event per line, suitable for external plotting.
inline void write_trace(const SimReport& report, std::ostream& out) {
  out << "# osdp-trace/v1\n";
  out << "# iter_time_s=" << report.iter_time_s << "\n";
  out << "# peak_mem_bytes=" << report.peak_mem_bytes << "\n";
  out << "# baseline_resident_bytes=" << report.baseline_resident_bytes << "\n";
  out << "# t_start,t_end,kind,operator_id,slice_index,mem_delta_bytes\n";
  for (const auto& ev : report.timeline) {
    out << ev.t_start << "," << ev.t_end << "," << to_string(ev.kind) << "," << ev.operator_id
        << "," << ev.slice_index << "," << ev.mem_delta_bytes << "\n";
  }
}

inline std::string write_trace(const SimReport& report) {
  std::ostringstream out;
  write_trace(report, out);
  return out.str();
}

}  // namespace osdp
