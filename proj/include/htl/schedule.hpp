#pragma once

#include <cstdint>

namespace htl {

/// Mask coverage schedule: λ(ρ) = clamp(min(1, β − |α|(ρ − ½)²), 0, 1) with
/// ρ = step / total_steps. The parabola always opens downward, so with
/// α = −11, β = 1.76 coverage is zero for the first and last ~10% of steps
/// and saturates at 1 in the middle.
struct ScheduleParams {
  double alpha = -11.0;
  double beta = 1.76;
  std::int64_t total_steps = 1;

  // Rejects total_steps < 1 and parabolas that never rise above zero.
  void validate() const;
};

/// Continuous form over ρ ∈ [0, 1].
double coverage_at_ratio(double rho, double alpha, double beta);

/// Coverage at an integer step in [0, total_steps]. Exactly symmetric:
/// coverage(s) == coverage(total_steps - s).
double coverage(std::int64_t step, const ScheduleParams& params);

}  // namespace htl
