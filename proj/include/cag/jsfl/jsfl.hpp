#pragma once

#include <cstddef>
#include <string>

#include "cag/autodiff/ops.hpp"
#include "cag/network/config.hpp"
#include "cag/network/params.hpp"

namespace cag::jsfl {

struct GeneratedFilters {
  ad::Tensor spatial;   // [B, K_S, N, C]
  ad::Tensor temporal;  // [B, K_T, N, C']
};

// Per-sequence, per-joint depthwise filters generated from a temporally
// pooled block input x_p: [B, T_P, N, C].
class FilterGenerator {
 public:
  FilterGenerator(const net::JsflConfig& config, std::size_t joints, std::size_t in_channels,
                  std::size_t out_channels, std::size_t pooled_frames, net::ParameterSet& params,
                  const std::string& name, net::Rng& rng);

  // depthwise TC -> temporal mean -> FC(W_3) + BN + ReLU -> FC(W_4) ->
  // reshape to [B, K_S, N, C] -> BN.
  ad::Tensor spatial(const ad::Tensor& xp, ad::Mode mode);
  // lifting TC (C -> C') -> FC over time (W_5) + ReLU -> FC (W_6) -> BN.
  ad::Tensor temporal(const ad::Tensor& xp, ad::Mode mode);
  GeneratedFilters generate(const ad::Tensor& xp, ad::Mode mode);

  std::size_t pooled_frames() const { return pooled_frames_; }
  const net::JsflConfig& config() const { return config_; }

 private:
  ad::Tensor joint_mean(const ad::Tensor& x) const;
  ad::Tensor batched(const ad::Tensor& filters, std::size_t batch) const;

  net::JsflConfig config_;
  std::size_t joints_;
  std::size_t in_channels_;
  std::size_t out_channels_;
  std::size_t pooled_frames_;

  // spatial branch
  ad::Tensor tc_weight_;  // [k, C] shared across joints
  ad::Tensor tc_bias_;    // [C]
  ad::Tensor w3_, b3_;    // [C, C/r]
  ad::BatchNorm bn3_;
  ad::Tensor w4_, b4_;    // [C/r, K_S * C]
  ad::BatchNorm bn_spatial_;

  // temporal branch
  ad::Tensor lift_weight_;  // [k, C, C']
  ad::Tensor lift_bias_;    // [C']
  ad::Tensor w5_, b5_;      // [T_P, alpha * T_P]
  ad::Tensor w6_, b6_;      // [alpha * T_P, K_T]
  ad::BatchNorm bn_temporal_;

  // non-adaptive ablation
  ad::Tensor static_spatial_;   // [K_S, N, C]
  ad::Tensor static_temporal_;  // [K_T, N, C']
};

}  // namespace cag::jsfl
