#pragma once

#include <cstdint>
#include <string>

#include "wsplin/errors.hpp"

namespace wsplin {

struct ScheduleSpec {
  double base_lr = 8e-4;
  double hold_fraction = 0.25;
  int total_epochs = 30;
  int batch_size = 8;
  uint64_t seed = 0;
  std::string optimizer = "adam";  // "adam" or "adam-lookahead"
  bool augment = true;

  void validate() const {
    if (base_lr <= 0.0) throw InvalidConfigError("base_lr must be positive");
    if (!(hold_fraction >= 0.0 && hold_fraction < 1.0)) {
      throw InvalidConfigError("hold_fraction must lie in [0,1)");
    }
    if (total_epochs < 1) throw InvalidConfigError("need at least one epoch");
    if (batch_size < 1) throw InvalidConfigError("batch size must be positive");
    if (optimizer != "adam" && optimizer != "adam-lookahead") {
      throw InvalidConfigError("unknown optimizer '" + optimizer + "'");
    }
  }
};

// Constant at base_lr through the hold window, cosine-annealed to zero after.
double lr_at(int64_t step, int64_t total_steps, const ScheduleSpec& spec);

}  // namespace wsplin
