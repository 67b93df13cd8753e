#include "cag/network/model.hpp"

#include <algorithm>

namespace cag::net {

using ad::Tensor;

Stream::Stream(const NetworkConfig& config, const graph::SkeletonSpec& spec, const Tensor& pyramid,
               ParameterSet& params, const std::string& name, Rng& rng)
    : joints_(spec.joint_count),
      in_channels_(config.in_channels),
      pyramid_(pyramid),
      input_bn_(ad::BatchNorm::make(spec.joint_count * config.in_channels)),
      embedding_(spec.joint_count, config.jsfl.spatial_kernels, config.in_channels, config.embed_width,
                 config.embed_kernel, params, name + ".embed", ParamGroup::main, rng) {
  params.add_batch_norm(name + ".input_bn", input_bn_, ParamGroup::main);
  std::size_t width = config.embed_width;
  std::size_t frames = config.frames;
  for (std::size_t i = 0; i < config.block_widths.size(); ++i) {
    const std::string block = name + ".block" + std::to_string(i + 1);
    const std::size_t out = config.block_widths[i];
    const std::size_t stride = config.block_strides[i];
    if (config.uses_jsfl()) {
      adaptive_.emplace_back(config.jsfl, joints_, width, out, stride, frames, params, block, rng);
    } else {
      dense_.emplace_back(joints_, config.jsfl.spatial_kernels, width, out, config.jsfl.temporal_kernel, stride, params,
                          block, rng);
    }
    width = out;
    frames = (frames - 1) / stride + 1;
  }
  for (std::size_t s = 0; s < graph::kPyramidScales; ++s) {
    const std::string head = name + ".head" + std::to_string(s);
    head_weights_.push_back(
        params.add(head + ".weight", uniform_init({width, config.head_width}, width, rng), ParamGroup::main));
    head_biases_.push_back(params.add(head + ".bias", uniform_init({config.head_width}, width, rng), ParamGroup::main));
  }
}

Tensor Stream::forward(const Tensor& x, const Tensor& fixed, const Tensor& topology, ad::Mode mode,
                       FilterTrace* trace) {
  const std::size_t b = x.dim(0);
  const std::size_t t = x.dim(1);
  Tensor h = ad::reshape(x, {b, t, joints_ * in_channels_});
  h = ad::reshape(ad::batch_norm(h, 2, input_bn_, mode), x.shape());
  h = embedding_.forward(h, fixed, mode);
  for (auto& block : dense_) h = block.forward(h, topology, mode);
  for (auto& block : adaptive_) {
    if (trace) {
      jsfl::GeneratedFilters filters;
      h = block.forward(h, topology, mode, &filters);
      trace->push_back(std::move(filters));
    } else {
      h = block.forward(h, topology, mode);
    }
  }
  const Tensor pyramid = jrpp_map(h, pyramid_);  // [B, 6, C]
  std::vector<Tensor> rows;
  for (std::size_t s = 0; s < graph::kPyramidScales; ++s) {
    rows.push_back(ad::fully_connected(ad::select(pyramid, 1, s), head_weights_[s], head_biases_[s]));
  }
  return ad::stack(rows, 1);
}

Model::Model(NetworkConfig config, std::uint64_t seed)
    : Model(config, graph::resolve_skeleton(config.skeleton), seed) {}

Model::Model(NetworkConfig config, graph::SkeletonSpec spec, std::uint64_t seed)
    : config_(std::move(config)), spec_(std::move(spec)) {
  config_.validate();
  if (config_.two_stream()) parents_ = graph::bone_parents(spec_);
  fixed_ = graph::partition_adjacency(spec_, config_.jsfl.spatial_kernels).slices;
  pyramid_ = pyramid_weights(spec_);
  Rng rng(seed);
  if (config_.uses_vatl()) {
    vatl_ = std::make_unique<vatl::ViewTopologyLearner>(config_, spec_, fixed_, params_, rng);
  }
  streams_.reserve(config_.streams());
  streams_.emplace_back(config_, spec_, pyramid_, params_, "joint", rng);
  if (config_.two_stream()) streams_.emplace_back(config_, spec_, pyramid_, params_, "bone", rng);
}

void Model::check_input(const Tensor& x, const char* what) const {
  if (!x.defined()) throw std::invalid_argument(std::string("model: missing ") + what + " input");
  if (x.rank() != 4 || x.dim(1) != config_.frames || x.dim(2) != spec_.joint_count || x.dim(3) != config_.in_channels) {
    throw ad::ShapeError(std::string("model: ") + what + " input must be [B, " + std::to_string(config_.frames) + ", " +
                         std::to_string(spec_.joint_count) + ", " + std::to_string(config_.in_channels) + "], got " +
                         ad::shape_str(x.shape()));
  }
}

Tensor Model::bone_input(const Tensor& x) const {
  const auto parents = parents_.empty() ? graph::bone_parents(spec_) : parents_;
  return ad::sub(x, ad::index_select(x, 2, parents));
}

ModelOutput Model::forward(const Tensor& x, ad::Mode mode, FilterTrace* trace) {
  check_input(x, "sequence");
  ModelInputs inputs{x, config_.two_stream() ? bone_input(x) : Tensor(), x};
  return forward(inputs, mode, trace);
}

ModelOutput Model::forward(const ModelInputs& inputs, ad::Mode mode, FilterTrace* trace) {
  check_input(inputs.joints, "joint");
  ModelOutput out;
  out.topology = fixed_;
  if (vatl_) {
    check_input(inputs.view, "view");
    out.view = vatl_->predict_view(inputs.view, mode);
    out.topology = vatl_->compose(out.view).composed;
  }
  const Tensor joint = streams_[0].forward(inputs.joints, fixed_, out.topology, mode, trace);
  if (config_.two_stream()) {
    check_input(inputs.bones, "bone");
    const Tensor bone = streams_[1].forward(inputs.bones, fixed_, out.topology, mode, trace);
    out.embedding = ad::concat({joint, bone}, 1);
  } else {
    out.embedding = joint;
  }
  return out;
}

std::size_t count_params(const NetworkConfig& config, Variant variant) {
  NetworkConfig c = config;
  c.variant = variant;
  return Model(c, 0).params().scalar_count();
}

namespace {

std::uint64_t embedding_macs(std::uint64_t t, std::uint64_t n, std::uint64_t ks, std::uint64_t cin,
                             std::uint64_t c, std::uint64_t k) {
  return ks * (t * n * n * cin + t * n * cin * c) + t * k * n * c * c;
}

std::uint64_t generator_macs(const JsflConfig& j, std::uint64_t tp, std::uint64_t n, std::uint64_t c,
                             std::uint64_t cout) {
  const std::uint64_t kg = j.generator_kernel;
  const std::uint64_t cr = c / j.reduction;
  const std::uint64_t ks = j.spatial_kernels;
  const std::uint64_t kt = j.temporal_kernel;
  const std::uint64_t tpa = j.inflation * tp;
  switch (j.mode) {
    case JsflMode::non_adaptive:
      return 0;
    case JsflMode::adaptive:
      return tp * kg * n * c + n * c * cr + n * cr * ks * c + tp * kg * n * c * cout + n * cout * tp * tpa +
             n * cout * tpa * kt;
    case JsflMode::global:
      return tp * kg * n * c + n * c + c * cr + cr * ks * c + tp * kg * n * c * cout + tp * n * cout +
             cout * tp * tpa + cout * tpa * kt;
  }
  return 0;
}

}  // namespace

std::uint64_t estimate_macs(const NetworkConfig& config, Variant variant, std::size_t frames) {
  NetworkConfig c = config;
  c.variant = variant;
  const std::uint64_t n = graph::resolve_skeleton(c.skeleton).joint_count;
  const std::uint64_t ks = c.jsfl.spatial_kernels;
  const std::uint64_t kt = c.jsfl.temporal_kernel;
  std::uint64_t total = 0;
  if (c.uses_vatl()) {
    total += embedding_macs(frames, n, ks, c.in_channels, c.vatl_width, c.embed_kernel);
    total += static_cast<std::uint64_t>(c.vatl_width) * c.views;
    total += static_cast<std::uint64_t>(c.views) * ks * n * n;
  }
  std::uint64_t stream = embedding_macs(frames, n, ks, c.in_channels, c.embed_width, c.embed_kernel);
  std::uint64_t width = c.embed_width;
  std::uint64_t t_in = frames;
  for (std::size_t i = 0; i < c.block_widths.size(); ++i) {
    const std::uint64_t out = c.block_widths[i];
    const std::uint64_t stride = c.block_strides[i];
    const std::uint64_t t_out = (t_in - 1) / stride + 1;
    const std::uint64_t residual = width != out ? t_out * n * width * out : 0;
    if (c.uses_jsfl()) {
      const std::uint64_t tp = std::min<std::uint64_t>(c.jsfl.pooled_frames, t_in);
      stream += generator_macs(c.jsfl, tp, n, width, out);
      stream += ks * (t_in * n * width + t_in * n * n * width) + t_in * n * width * out + t_out * kt * n * out +
                t_out * n * out * out + residual;
    } else {
      stream += ks * (t_in * n * n * width + t_in * n * width * out) + t_out * kt * n * out * out + residual;
    }
    width = out;
    t_in = t_out;
  }
  stream += graph::kPyramidScales * n * width + graph::kPyramidScales * width * c.head_width;
  return total + stream * c.streams();
}

double estimate_flops(const NetworkConfig& config, Variant variant, std::size_t frames) {
  return static_cast<double>(estimate_macs(config, variant, frames)) / 1e9;
}

}  // namespace cag::net
