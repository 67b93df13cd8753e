#include "cag/network/blocks.hpp"

#include <algorithm>

namespace cag::net {

using ad::Tensor;

Tensor topology_slice(const Tensor& topology, std::size_t k) {
  if (topology.rank() == 3) return ad::select(topology, 0, k);
  if (topology.rank() == 4) {
    const std::size_t b = topology.dim(0);
    const std::size_t n = topology.dim(2);
    return ad::reshape(ad::select(topology, 1, k), {b, 1, n, n});
  }
  throw ad::ShapeError("topology must be [K_S, N, N] or [B, K_S, N, N], got " + ad::shape_str(topology.shape()));
}

namespace {

std::size_t partitions_of(const Tensor& topology) { return topology.dim(topology.rank() == 4 ? 1 : 0); }

Tensor graph_conv(const Tensor& x, const Tensor& topology, const Tensor& weight, std::size_t partitions) {
  if (partitions_of(topology) != partitions) {
    throw ad::ShapeError("topology has " + std::to_string(partitions_of(topology)) + " partitions, block expects " +
                         std::to_string(partitions));
  }
  Tensor out;
  for (std::size_t k = 0; k < partitions; ++k) {
    const Tensor term = ad::conv1x1(ad::matmul(topology_slice(topology, k), x), ad::select(weight, 0, k));
    out = out.defined() ? ad::add(out, term) : term;
  }
  return out;
}

}  // namespace

Residual::Residual(std::size_t in_channels, std::size_t out_channels, std::size_t stride, ParameterSet& params,
                   const std::string& name, ParamGroup group, Rng& rng)
    : stride_(stride) {
  if (in_channels != out_channels) {
    weight_ = params.add(name + ".weight", uniform_init({in_channels, out_channels}, in_channels, rng), group);
    bn_ = ad::BatchNorm::make(out_channels);
    params.add_batch_norm(name + ".bn", bn_, group);
  }
}

Tensor Residual::forward(const Tensor& x, ad::Mode mode) {
  const Tensor sub = stride_ == 1 ? x : ad::temporal_subsample(x, stride_);
  if (!weight_.defined()) return sub;
  return ad::batch_norm(ad::conv1x1(sub, weight_), 3, bn_, mode);
}

EmbeddingBlock::EmbeddingBlock(std::size_t /*joints*/, std::size_t partitions, std::size_t in_channels,
                               std::size_t out_channels, std::size_t kernel, ParameterSet& params,
                               const std::string& name, ParamGroup group, Rng& rng)
    : partitions_(partitions) {
  spatial_weight_ =
      params.add(name + ".gcn.weight", uniform_init({partitions, in_channels, out_channels}, in_channels, rng), group);
  bn_spatial_ = ad::BatchNorm::make(out_channels);
  params.add_batch_norm(name + ".gcn.bn", bn_spatial_, group);
  temporal_weight_ = params.add(name + ".tcn.weight",
                                uniform_init({kernel, out_channels, out_channels}, kernel * out_channels, rng), group);
  bn_temporal_ = ad::BatchNorm::make(out_channels);
  params.add_batch_norm(name + ".tcn.bn", bn_temporal_, group);
}

Tensor EmbeddingBlock::forward(const Tensor& x, const Tensor& topology, ad::Mode mode) {
  Tensor h = graph_conv(x, topology, spatial_weight_, partitions_);
  h = ad::relu(ad::batch_norm(h, 3, bn_spatial_, mode));
  h = ad::temporal_conv(h, temporal_weight_, Tensor());
  return ad::relu(ad::batch_norm(h, 3, bn_temporal_, mode));
}

DenseBlock::DenseBlock(std::size_t /*joints*/, std::size_t partitions, std::size_t in_channels,
                       std::size_t out_channels, std::size_t kernel, std::size_t stride, ParameterSet& params,
                       const std::string& name, Rng& rng)
    : partitions_(partitions),
      stride_(stride),
      residual_(in_channels, out_channels, stride, params, name + ".residual", ParamGroup::main, rng) {
  spatial_weight_ = params.add(name + ".gcn.weight",
                               uniform_init({partitions, in_channels, out_channels}, in_channels, rng), ParamGroup::main);
  bn_spatial_ = ad::BatchNorm::make(out_channels);
  params.add_batch_norm(name + ".gcn.bn", bn_spatial_, ParamGroup::main);
  temporal_weight_ = params.add(name + ".tcn.weight",
                                uniform_init({kernel, out_channels, out_channels}, kernel * out_channels, rng),
                                ParamGroup::main);
  bn_temporal_ = ad::BatchNorm::make(out_channels);
  params.add_batch_norm(name + ".tcn.bn", bn_temporal_, ParamGroup::main);
}

Tensor DenseBlock::forward(const Tensor& x, const Tensor& topology, ad::Mode mode) {
  Tensor h = graph_conv(x, topology, spatial_weight_, partitions_);
  h = ad::relu(ad::batch_norm(h, 3, bn_spatial_, mode));
  h = ad::temporal_conv(h, temporal_weight_, Tensor(), stride_);
  h = ad::batch_norm(h, 3, bn_temporal_, mode);
  return ad::relu(ad::add(h, residual_.forward(x, mode)));
}

Tensor spatial_mix(const Tensor& x, const Tensor& spatial_filters, const Tensor& topology) {
  const std::size_t partitions = spatial_filters.dim(1);
  if (partitions_of(topology) != partitions) {
    throw ad::ShapeError("spatial filters have " + std::to_string(partitions) + " kernels, topology has " +
                         std::to_string(partitions_of(topology)));
  }
  Tensor out;
  for (std::size_t k = 0; k < partitions; ++k) {
    const Tensor scaled = ad::depthwise_joint_scale(x, ad::select(spatial_filters, 1, k));
    const Tensor term = ad::matmul(topology_slice(topology, k), scaled);
    out = out.defined() ? ad::add(out, term) : term;
  }
  return out;
}

Tensor temporal_mix(const Tensor& xs, const Tensor& temporal_filters, std::size_t stride) {
  return ad::depthwise_temporal_conv(xs, temporal_filters, stride);
}

CagBlock::CagBlock(const JsflConfig& jsfl, std::size_t joints, std::size_t in_channels, std::size_t out_channels,
                   std::size_t stride, std::size_t in_frames, ParameterSet& params, const std::string& name, Rng& rng)
    : stride_(stride),
      generator_(jsfl, joints, in_channels, out_channels, std::min(jsfl.pooled_frames, in_frames), params,
                 name + ".jsfl", rng),
      residual_(in_channels, out_channels, stride, params, name + ".residual", ParamGroup::main, rng) {
  w1_ = params.add(name + ".w1", uniform_init({in_channels, out_channels}, in_channels, rng), ParamGroup::main);
  bn1_ = ad::BatchNorm::make(out_channels);
  params.add_batch_norm(name + ".bn1", bn1_, ParamGroup::main);
  w2_ = params.add(name + ".w2", uniform_init({out_channels, out_channels}, out_channels, rng), ParamGroup::main);
  bn2_ = ad::BatchNorm::make(out_channels);
  params.add_batch_norm(name + ".bn2", bn2_, ParamGroup::main);
}

Tensor CagBlock::forward(const Tensor& x, const Tensor& topology, ad::Mode mode, jsfl::GeneratedFilters* filters_out) {
  const Tensor xp = ad::adaptive_temporal_pool(x, generator_.pooled_frames());
  jsfl::GeneratedFilters filters = generator_.generate(xp, mode);
  Tensor h = ad::conv1x1(spatial_mix(x, filters.spatial, topology), w1_);
  h = ad::relu(ad::batch_norm(h, 3, bn1_, mode));
  h = ad::conv1x1(temporal_mix(h, filters.temporal, stride_), w2_);
  h = ad::batch_norm(h, 3, bn2_, mode);
  if (filters_out) *filters_out = std::move(filters);
  return ad::relu(ad::add(h, residual_.forward(x, mode)));
}

Tensor pyramid_weights(const graph::SkeletonSpec& spec) {
  const std::size_t n = spec.joint_count;
  std::vector<double> w(graph::kPyramidScales * n, 0.0);
  for (std::size_t s = 0; s < graph::kPyramidScales; ++s) {
    const auto& groups = spec.pyramid.at(s);
    const double per_group = 1.0 / static_cast<double>(groups.size());
    for (const auto& group : groups)
      for (std::size_t j : group) w[s * n + j] += per_group / static_cast<double>(group.size());
  }
  return Tensor::from({graph::kPyramidScales, n}, std::move(w));
}

Tensor jrpp_map(const Tensor& x, const Tensor& weights) {
  if (x.rank() != 4 || x.dim(2) != weights.dim(1)) {
    throw ad::ShapeError("jrpp: features " + ad::shape_str(x.shape()) + " do not match " +
                         std::to_string(weights.dim(1)) + " joints");
  }
  const Tensor agg = ad::add(ad::temporal_mean(x), ad::temporal_max(x));  // [B, 1, N, C]
  const Tensor flat = ad::reshape(agg, {x.dim(0), x.dim(2), x.dim(3)});
  return ad::matmul(weights, flat);
}

}  // namespace cag::net
