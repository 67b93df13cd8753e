#include "cag/jsfl/jsfl.hpp"

#include <algorithm>

namespace cag::jsfl {

using ad::Tensor;
using net::ParamGroup;

FilterGenerator::FilterGenerator(const net::JsflConfig& config, std::size_t joints, std::size_t in_channels,
                                 std::size_t out_channels, std::size_t pooled_frames, net::ParameterSet& params,
                                 const std::string& name, net::Rng& rng)
    : config_(config),
      joints_(joints),
      in_channels_(in_channels),
      out_channels_(out_channels),
      pooled_frames_(pooled_frames) {
  config_.validate();
  if (in_channels % config.reduction != 0) {
    throw std::invalid_argument("jsfl: channel count " + std::to_string(in_channels) +
                                " is not divisible by reduction " + std::to_string(config.reduction));
  }
  const std::size_t c = in_channels;
  const std::size_t cr = in_channels / config.reduction;
  const std::size_t ks = config.spatial_kernels;
  const std::size_t kt = config.temporal_kernel;
  const std::size_t kg = config.generator_kernel;
  const std::size_t tp = pooled_frames;
  const std::size_t tpa = config.inflation * pooled_frames;
  const auto g = ParamGroup::main;

  if (config.mode == net::JsflMode::non_adaptive) {
    static_spatial_ = params.add(name + ".static_spatial", net::uniform_range({ks, joints, c}, -1.0, 1.0, rng), g);
    static_temporal_ =
        params.add(name + ".static_temporal", net::uniform_range({kt, joints, out_channels}, -1.0, 1.0, rng), g);
    return;
  }

  tc_weight_ = params.add(name + ".spatial.tc_weight", net::uniform_init({kg, c}, kg, rng), g);
  tc_bias_ = params.add(name + ".spatial.tc_bias", net::uniform_init({c}, kg, rng), g);
  w3_ = params.add(name + ".spatial.w3", net::uniform_init({c, cr}, c, rng), g);
  b3_ = params.add(name + ".spatial.b3", net::uniform_init({cr}, c, rng), g);
  bn3_ = ad::BatchNorm::make(cr);
  params.add_batch_norm(name + ".spatial.bn3", bn3_, g);
  w4_ = params.add(name + ".spatial.w4", net::uniform_init({cr, ks * c}, cr, rng), g);
  b4_ = params.add(name + ".spatial.b4", net::uniform_init({ks * c}, cr, rng), g);
  bn_spatial_ = ad::BatchNorm::make(c);
  params.add_batch_norm(name + ".spatial.bn", bn_spatial_, g);

  lift_weight_ = params.add(name + ".temporal.lift_weight", net::uniform_init({kg, c, out_channels}, kg * c, rng), g);
  lift_bias_ = params.add(name + ".temporal.lift_bias", net::uniform_init({out_channels}, kg * c, rng), g);
  w5_ = params.add(name + ".temporal.w5", net::uniform_init({tp, tpa}, tp, rng), g);
  b5_ = params.add(name + ".temporal.b5", net::uniform_init({tpa}, tp, rng), g);
  w6_ = params.add(name + ".temporal.w6", net::uniform_init({tpa, kt}, tpa, rng), g);
  b6_ = params.add(name + ".temporal.b6", net::uniform_init({kt}, tpa, rng), g);
  bn_temporal_ = ad::BatchNorm::make(out_channels);
  params.add_batch_norm(name + ".temporal.bn", bn_temporal_, g);
}

Tensor FilterGenerator::joint_mean(const Tensor& x) const {
  const Tensor avg = Tensor::full({1, x.dim(2)}, 1.0 / static_cast<double>(x.dim(2)));
  return ad::matmul(avg, x);
}

Tensor FilterGenerator::batched(const Tensor& filters, std::size_t batch) const {
  ad::Shape shape = filters.shape();
  if (shape.size() == 3) shape.insert(shape.begin(), batch);
  shape[2] = joints_;
  return ad::broadcast_to(filters, shape);
}

Tensor FilterGenerator::spatial(const Tensor& xp, ad::Mode mode) {
  if (xp.rank() != 4 || xp.dim(1) != pooled_frames_ || xp.dim(2) != joints_ || xp.dim(3) != in_channels_) {
    throw ad::ShapeError("jsfl spatial branch: expected [B, " + std::to_string(pooled_frames_) + ", " +
                         std::to_string(joints_) + ", " + std::to_string(in_channels_) + "], got " +
                         ad::shape_str(xp.shape()));
  }
  const std::size_t b = xp.dim(0);
  const std::size_t ks = config_.spatial_kernels;
  const std::size_t c = in_channels_;
  if (config_.mode == net::JsflMode::non_adaptive) return batched(static_spatial_, b);

  Tensor h = ad::add(ad::depthwise_temporal_conv(xp, tc_weight_), tc_bias_);
  h = ad::temporal_mean(h);  // [B, 1, N, C]
  if (config_.mode == net::JsflMode::global) h = joint_mean(h);
  const std::size_t n = h.dim(2);
  h = ad::relu(ad::batch_norm(ad::fully_connected(h, w3_, b3_), 3, bn3_, mode));
  h = ad::fully_connected(h, w4_, b4_);  // [B, 1, n, K_S * C]
  h = ad::permute(ad::reshape(h, {b, n, ks, c}), {0, 2, 1, 3});
  h = ad::batch_norm(h, 3, bn_spatial_, mode);
  return n == joints_ ? h : batched(h, b);
}

Tensor FilterGenerator::temporal(const Tensor& xp, ad::Mode mode) {
  if (xp.rank() != 4 || xp.dim(1) != pooled_frames_ || xp.dim(2) != joints_ || xp.dim(3) != in_channels_) {
    throw ad::ShapeError("jsfl temporal branch: expected [B, " + std::to_string(pooled_frames_) + ", " +
                         std::to_string(joints_) + ", " + std::to_string(in_channels_) + "], got " +
                         ad::shape_str(xp.shape()));
  }
  const std::size_t b = xp.dim(0);
  if (config_.mode == net::JsflMode::non_adaptive) return batched(static_temporal_, b);

  Tensor h = ad::temporal_conv(xp, lift_weight_, lift_bias_);  // [B, T_P, N, C']
  if (config_.mode == net::JsflMode::global) h = joint_mean(h);
  const std::size_t n = h.dim(2);
  h = ad::permute(h, {0, 2, 3, 1});  // [B, n, C', T_P]
  h = ad::relu(ad::fully_connected(h, w5_, b5_));
  h = ad::fully_connected(h, w6_, b6_);  // [B, n, C', K_T]
  h = ad::permute(h, {0, 3, 1, 2});      // [B, K_T, n, C']
  h = ad::batch_norm(h, 3, bn_temporal_, mode);
  return n == joints_ ? h : batched(h, b);
}

GeneratedFilters FilterGenerator::generate(const Tensor& xp, ad::Mode mode) {
  return {spatial(xp, mode), temporal(xp, mode)};
}

}  // namespace cag::jsfl
