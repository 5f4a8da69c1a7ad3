#include "wsplin/train/schedule.hpp"

#include <cmath>
#include <numbers>

namespace wsplin {

double lr_at(int64_t step, int64_t total_steps, const ScheduleSpec& spec) {
  spec.validate();
  if (step < 0 || step >= total_steps) {
    throw InvalidConfigError("step outside [0,total_steps)");
  }
  const double hold = spec.hold_fraction * static_cast<double>(total_steps);
  if (static_cast<double>(step) < hold) return spec.base_lr;
  const double phase = (static_cast<double>(step) - hold) / (static_cast<double>(total_steps) - hold);
  return spec.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * phase));
}

}  // namespace wsplin
