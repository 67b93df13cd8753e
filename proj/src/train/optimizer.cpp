#include "cag/train/optimizer.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace cag::train {

void OptimConfig::validate(std::size_t total_epochs) const {
  if (!(lr > 0.0) || !(vatl_lr > 0.0)) throw std::invalid_argument("optimizer: learning rates must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("optimizer: betas must be in [0, 1)");
  }
  if (!(eps > 0.0)) throw std::invalid_argument("optimizer: eps must be positive");
  if (!(decay > 0.0 && decay <= 1.0)) throw std::invalid_argument("optimizer: decay must be in (0, 1]");
  if (total_epochs > 0 && warmup_epochs >= total_epochs) {
    throw std::invalid_argument("optimizer: warmup (" + std::to_string(warmup_epochs) +
                                " epochs) must be shorter than training (" + std::to_string(total_epochs) + ")");
  }
  for (std::size_t i = 1; i < decay_epochs.size(); ++i) {
    if (decay_epochs[i] <= decay_epochs[i - 1]) {
      throw std::invalid_argument("optimizer: decay epochs must be strictly increasing");
    }
  }
}

double schedule_factor(const OptimConfig& config, std::size_t epoch, std::size_t iteration,
                       std::size_t iterations_per_epoch) {
  if (epoch < config.warmup_epochs) {
    const double done = static_cast<double>(epoch * iterations_per_epoch + iteration + 1);
    return done / static_cast<double>(config.warmup_epochs * iterations_per_epoch);
  }
  double factor = 1.0;
  for (std::size_t e : config.decay_epochs)
    if (epoch >= e) factor *= config.decay;
  return factor;
}

Adam::Adam(net::ParameterSet& params, const OptimConfig& config) : params_(params), config_(config) {
  for (const auto& p : params_.params()) {
    m_.emplace_back(p.tensor.numel(), 0.0);
    v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

void Adam::step(double factor) {
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  const auto& params = params_.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    ad::Tensor tensor = params[i].tensor;
    if (!tensor.has_grad()) continue;
    const double lr = factor * (params[i].group == net::ParamGroup::vatl ? config_.vatl_lr : config_.lr);
    const auto& grad = tensor.impl()->grad;
    auto values = tensor.mutable_values();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < values.size(); ++k) {
      m[k] = config_.beta1 * m[k] + (1.0 - config_.beta1) * grad[k];
      v[k] = config_.beta2 * v[k] + (1.0 - config_.beta2) * grad[k] * grad[k];
      values[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + config_.eps);
    }
  }
}

}  // namespace cag::train
