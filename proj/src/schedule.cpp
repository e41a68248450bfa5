#include "htl/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "htl/error.hpp"

namespace htl {

void ScheduleParams::validate() const {
  if (total_steps < 1) throw ConfigError("schedule.total_steps must be >= 1, got " + std::to_string(total_steps));
  if (!std::isfinite(alpha) || !std::isfinite(beta)) throw ConfigError("schedule.alpha/beta must be finite");
  // The peak of β − |α|(ρ−½)² is β at ρ = ½.
  if (!(beta > 0.0))
    throw ConfigError("schedule.beta must be positive, otherwise coverage is zero everywhere (beta=" +
                      std::to_string(beta) + ")");
}

namespace {

double shape(double offset_sq, double alpha, double beta) {
  const double raw = beta - std::abs(alpha) * offset_sq;
  return std::clamp(std::min(1.0, raw), 0.0, 1.0);
}

}  // namespace

double coverage_at_ratio(double rho, double alpha, double beta) {
  if (!(rho >= 0.0 && rho <= 1.0)) throw RangeError("schedule ratio " + std::to_string(rho) + " outside [0,1]");
  const double off = rho - 0.5;
  return shape(off * off, alpha, beta);
}

double coverage(std::int64_t step, const ScheduleParams& params) {
  params.validate();
  if (step < 0 || step > params.total_steps)
    throw RangeError("schedule step " + std::to_string(step) + " outside [0, " + std::to_string(params.total_steps) + "]");
  // (ρ − ½)² = (2s − T)² / (4T²), computed from integers so s and T − s agree bitwise.
  const double twice_off = static_cast<double>(2 * step - params.total_steps);
  const double denom = 2.0 * static_cast<double>(params.total_steps);
  const double off = twice_off / denom;
  return shape(off * off, params.alpha, params.beta);
}

}  // namespace htl
