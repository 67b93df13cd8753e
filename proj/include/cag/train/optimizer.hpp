#pragma once

#include <cstddef>
#include <vector>

#include "cag/network/params.hpp"

namespace cag::train {

struct OptimConfig {
  double lr = 1e-3;       // main parameters
  double vatl_lr = 1e-4;  // view classifier and topology set
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t warmup_epochs = 5;
  std::vector<std::size_t> decay_epochs;
  double decay = 0.1;

  void validate(std::size_t total_epochs) const;
};

// Multiplier on the base rates at iteration `iteration` (0-based) of epoch
// `epoch`: a linear ramp from 0 over the warmup epochs, then a step decay
// at every listed epoch.
double schedule_factor(const OptimConfig& config, std::size_t epoch, std::size_t iteration,
                       std::size_t iterations_per_epoch);

class Adam {
 public:
  Adam(net::ParameterSet& params, const OptimConfig& config);

  // Applies one update using the accumulated gradients, with the base rates
  // scaled by `factor`.
  void step(double factor);
  std::size_t steps() const { return steps_; }

 private:
  net::ParameterSet& params_;
  OptimConfig config_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::size_t steps_ = 0;
};

}  // namespace cag::train
