#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "cag/autodiff/ops.hpp"

namespace cag::net {

using Rng = std::mt19937_64;

// Parameters in the `vatl` group train with their own learning rate.
enum class ParamGroup { main, vatl };

struct NamedTensor {
  std::string name;
  ad::Tensor tensor;
  ParamGroup group = ParamGroup::main;
};

// Flat registry of a model's learnable tensors and BN running statistics.
// Entries alias the module members, so in-place updates are visible to both.
class ParameterSet {
 public:
  ad::Tensor add(const std::string& name, ad::Tensor tensor, ParamGroup group);
  void add_batch_norm(const std::string& name, const ad::BatchNorm& bn, ParamGroup group);

  const std::vector<NamedTensor>& params() const { return params_; }
  const std::vector<NamedTensor>& buffers() const { return buffers_; }
  std::size_t scalar_count() const;
  std::size_t scalar_count(ParamGroup group) const;
  void zero_grad();

 private:
  void check_unique(const std::string& name) const;

  std::vector<NamedTensor> params_;
  std::vector<NamedTensor> buffers_;
};

// U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
ad::Tensor uniform_init(ad::Shape shape, std::size_t fan_in, Rng& rng);
ad::Tensor uniform_range(ad::Shape shape, double lo, double hi, Rng& rng);

}  // namespace cag::net
