#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "cag/autodiff/ops.hpp"
#include "cag/graph/skeleton.hpp"
#include "cag/jsfl/jsfl.hpp"
#include "cag/network/blocks.hpp"
#include "cag/network/config.hpp"
#include "cag/network/params.hpp"
#include "cag/vatl/vatl.hpp"

namespace cag::net {

// Separate per-branch inputs, each [B, T, N, C_in]. `bones` is ignored by
// single-stream variants and `view` by variants without topology learning.
struct ModelInputs {
  ad::Tensor joints;
  ad::Tensor bones;
  ad::Tensor view;
};

struct ModelOutput {
  ad::Tensor embedding;               // [B, 6 * streams, head_width]
  vatl::ViewPrediction view;          // undefined tensors without VATL
  ad::Tensor topology;                // [K_S, N, N] or [B, K_S, N, N]
};

// Filters generated by every adaptive block of every stream, in order.
using FilterTrace = std::vector<jsfl::GeneratedFilters>;

class Stream {
 public:
  Stream(const NetworkConfig& config, const graph::SkeletonSpec& spec, const ad::Tensor& pyramid,
         ParameterSet& params, const std::string& name, Rng& rng);
  ad::Tensor forward(const ad::Tensor& x, const ad::Tensor& fixed, const ad::Tensor& topology, ad::Mode mode,
                     FilterTrace* trace);

 private:
  std::size_t joints_;
  std::size_t in_channels_;
  ad::Tensor pyramid_;
  ad::BatchNorm input_bn_;
  EmbeddingBlock embedding_;
  std::vector<DenseBlock> dense_;
  std::vector<CagBlock> adaptive_;
  std::vector<ad::Tensor> head_weights_;
  std::vector<ad::Tensor> head_biases_;
};

class Model {
 public:
  Model(NetworkConfig config, std::uint64_t seed);
  Model(NetworkConfig config, graph::SkeletonSpec spec, std::uint64_t seed);

  ModelOutput forward(const ad::Tensor& x, ad::Mode mode, FilterTrace* trace = nullptr);
  ModelOutput forward(const ModelInputs& inputs, ad::Mode mode, FilterTrace* trace = nullptr);

  // x - x[parent] for every joint; the root row is zero.
  ad::Tensor bone_input(const ad::Tensor& x) const;

  const NetworkConfig& config() const { return config_; }
  const graph::SkeletonSpec& skeleton() const { return spec_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  vatl::ViewTopologyLearner* view_learner() { return vatl_.get(); }
  const ad::Tensor& fixed_topology() const { return fixed_; }

 private:
  void check_input(const ad::Tensor& x, const char* what) const;

  NetworkConfig config_;
  graph::SkeletonSpec spec_;
  std::vector<std::size_t> parents_;
  ad::Tensor fixed_;
  ad::Tensor pyramid_;
  ParameterSet params_;
  std::unique_ptr<vatl::ViewTopologyLearner> vatl_;
  std::vector<Stream> streams_;
};

// Learnable scalars of `config` built as `variant`.
std::size_t count_params(const NetworkConfig& config, Variant variant);

// Analytic multiply-accumulate count of one forward pass of one sequence of
// `frames` frames.
std::uint64_t estimate_macs(const NetworkConfig& config, Variant variant, std::size_t frames);
// Reported in G, one multiply-accumulate counted as one operation.
double estimate_flops(const NetworkConfig& config, Variant variant, std::size_t frames);

}  // namespace cag::net
