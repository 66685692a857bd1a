#pragma once

#include <cstdint>
#include <string>

#include "osdp/errors.hpp"
#include "osdp/model.hpp"

namespace osdp {

// Per-operator choice: the operator (and the input's last dimension) is cut
// into `slice_granularity` parts, of which `zdp_slices` are processed in
// ZDP mode and the rest stay in DP mode.
struct Decision {
  std::int64_t slice_granularity = 1;  // s
  std::int64_t zdp_slices = 0;         // k, 0 <= k <= s

  bool operator==(const Decision&) const = default;
};

inline Decision pure_dp(std::int64_t s = 1) { return {s, 0}; }
inline Decision pure_zdp(std::int64_t s = 1) { return {s, s}; }

inline bool admissible(const Decision& d, const OperatorSpec& op) {
  if (d.slice_granularity < 1) return false;
  if (d.zdp_slices < 0 || d.zdp_slices > d.slice_granularity) return false;
  if (!op.splittable && d.slice_granularity != 1) return false;
  return true;
}

inline void require_admissible(const Decision& d, const OperatorSpec& op) {
  if (!admissible(d, op)) {
    throw ValidationError("operator '" + op.id + "': decision s=" +
                          std::to_string(d.slice_granularity) +
                          " k=" + std::to_string(d.zdp_slices) + " is not admissible");
  }
}

// Largest momentarily re-gathered slice: splitting shrinks the gather-time
// memory surge from the full weight bytes to weight_bytes / s. DP-only
// operators (k = 0) never re-gather, so their surge is charged elsewhere.
inline double peak_surge(const OperatorSpec& op, const Decision& d) {
  require_admissible(d, op);
  if (d.zdp_slices == 0) return 0.0;
  return op.weight_bytes() / static_cast<double>(d.slice_granularity);
}

// Smallest power-of-two granularity whose surge fits the budget, capped at
// s_max. Large granularities on small operators cost time, so the ladder
// stops as soon as the budget is met.
inline std::int64_t select_slice_granularity(const OperatorSpec& op, double surge_budget_bytes,
                                             std::int64_t s_max) {
  if (surge_budget_bytes <= 0.0) {
    throw ValidationError("select_slice_granularity: surge budget must be > 0");
  }
  if (s_max < 1) {
    throw ValidationError("select_slice_granularity: s_max must be >= 1");
  }
  if (!op.splittable) return 1;
  const double weight = op.weight_bytes();
  for (std::int64_t s = 1; s <= s_max; s *= 2) {
    if (weight / static_cast<double>(s) <= surge_budget_bytes) return s;
  }
  return s_max;
}

}  // namespace osdp
