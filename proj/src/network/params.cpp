#include "cag/network/params.hpp"

#include <cmath>
#include <stdexcept>

namespace cag::net {

void ParameterSet::check_unique(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) throw std::logic_error("duplicate parameter name " + name);
  for (const auto& b : buffers_)
    if (b.name == name) throw std::logic_error("duplicate buffer name " + name);
}

ad::Tensor ParameterSet::add(const std::string& name, ad::Tensor tensor, ParamGroup group) {
  check_unique(name);
  tensor.set_requires_grad(true);
  params_.push_back({name, tensor, group});
  return tensor;
}

void ParameterSet::add_batch_norm(const std::string& name, const ad::BatchNorm& bn, ParamGroup group) {
  add(name + ".gamma", bn.gamma, group);
  add(name + ".beta", bn.beta, group);
  check_unique(name + ".running_mean");
  buffers_.push_back({name + ".running_mean", bn.running_mean, group});
  buffers_.push_back({name + ".running_var", bn.running_var, group});
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

std::size_t ParameterSet::scalar_count(ParamGroup group) const {
  std::size_t n = 0;
  for (const auto& p : params_)
    if (p.group == group) n += p.tensor.numel();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

ad::Tensor uniform_range(ad::Shape shape, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> values(ad::shape_numel(shape));
  for (double& v : values) v = dist(rng);
  return ad::Tensor::from(std::move(shape), std::move(values));
}

ad::Tensor uniform_init(ad::Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return uniform_range(std::move(shape), -bound, bound, rng);
}

}  // namespace cag::net
