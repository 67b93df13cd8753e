#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "cag/autodiff/ops.hpp"
#include "cag/graph/skeleton.hpp"
#include "cag/jsfl/jsfl.hpp"
#include "cag/network/config.hpp"
#include "cag/network/params.hpp"

namespace cag::net {

// Topologies are [K_S, N, N] (shared) or [B, K_S, N, N] (per sequence).
// Returns slice k as [N, N] or [B, 1, N, N], ready to broadcast over time.
ad::Tensor topology_slice(const ad::Tensor& topology, std::size_t k);

// Shortcut branch: identity, temporal subsampling, or 1x1 projection + BN.
class Residual {
 public:
  Residual(std::size_t in_channels, std::size_t out_channels, std::size_t stride, ParameterSet& params,
           const std::string& name, ParamGroup group, Rng& rng);
  ad::Tensor forward(const ad::Tensor& x, ad::Mode mode);
  bool projects() const { return weight_.defined(); }

 private:
  std::size_t stride_;
  ad::Tensor weight_;
  ad::BatchNorm bn_;
};

// Ordinary graph convolution sum_k A_k X W_k followed by a dense temporal
// convolution, each with BN + ReLU. No shortcut.
class EmbeddingBlock {
 public:
  EmbeddingBlock(std::size_t joints, std::size_t partitions, std::size_t in_channels, std::size_t out_channels,
                 std::size_t kernel, ParameterSet& params, const std::string& name, ParamGroup group, Rng& rng);
  ad::Tensor forward(const ad::Tensor& x, const ad::Tensor& topology, ad::Mode mode);

 private:
  std::size_t partitions_;
  ad::Tensor spatial_weight_;   // [K_S, C, C']
  ad::BatchNorm bn_spatial_;
  ad::Tensor temporal_weight_;  // [K, C', C']
  ad::BatchNorm bn_temporal_;
};

// Baseline block: dense graph convolution and dense temporal convolution.
class DenseBlock {
 public:
  DenseBlock(std::size_t joints, std::size_t partitions, std::size_t in_channels, std::size_t out_channels,
             std::size_t kernel, std::size_t stride, ParameterSet& params, const std::string& name, Rng& rng);
  ad::Tensor forward(const ad::Tensor& x, const ad::Tensor& topology, ad::Mode mode);

 private:
  std::size_t partitions_;
  std::size_t stride_;
  ad::Tensor spatial_weight_;   // [K_S, C, C']
  ad::BatchNorm bn_spatial_;
  ad::Tensor temporal_weight_;  // [K_T, C', C']
  ad::BatchNorm bn_temporal_;
  Residual residual_;
};

// sum_k G_k (X (x) F_S^k): x [B, T, N, C], spatial filters [B, K_S, N, C].
ad::Tensor spatial_mix(const ad::Tensor& x, const ad::Tensor& spatial_filters, const ad::Tensor& topology);
// X_S (x) F_T with per-sequence filters [B, K_T, N, C'].
ad::Tensor temporal_mix(const ad::Tensor& xs, const ad::Tensor& temporal_filters, std::size_t stride);

// Condition-adaptive block built on generated joint-specific filters.
class CagBlock {
 public:
  CagBlock(const JsflConfig& jsfl, std::size_t joints, std::size_t in_channels, std::size_t out_channels,
           std::size_t stride, std::size_t in_frames, ParameterSet& params, const std::string& name, Rng& rng);
  ad::Tensor forward(const ad::Tensor& x, const ad::Tensor& topology, ad::Mode mode,
                     jsfl::GeneratedFilters* filters_out = nullptr);

  const ad::Tensor& w1() const { return w1_; }
  const ad::Tensor& w2() const { return w2_; }
  std::size_t pooled_frames() const { return generator_.pooled_frames(); }

 private:
  std::size_t stride_;
  jsfl::FilterGenerator generator_;
  ad::Tensor w1_;  // [C, C']
  ad::BatchNorm bn1_;
  ad::Tensor w2_;  // [C', C']
  ad::BatchNorm bn2_;
  Residual residual_;
};

// [kPyramidScales, N] averaging weights: each row averages the group means
// of one scale.
ad::Tensor pyramid_weights(const graph::SkeletonSpec& spec);
// Temporal mean + max, then the 6-scale joint pyramid: [B, T, N, C] -> [B, 6, C].
ad::Tensor jrpp_map(const ad::Tensor& x, const ad::Tensor& weights);

}  // namespace cag::net
