#include "cag/network/config.hpp"

#include <stdexcept>

#include "cag/graph/skeleton.hpp"

namespace cag::net {

void JsflConfig::validate() const {
  if (pooled_frames == 0) throw std::invalid_argument("jsfl: pooled_frames must be at least 1");
  if (reduction == 0) throw std::invalid_argument("jsfl: reduction must be positive");
  if (inflation == 0) throw std::invalid_argument("jsfl: inflation must be at least 1");
  if (spatial_kernels == 0) throw std::invalid_argument("jsfl: spatial_kernels must be positive");
  if (temporal_kernel % 2 == 0) throw std::invalid_argument("jsfl: temporal_kernel must be odd");
  if (generator_kernel % 2 == 0) throw std::invalid_argument("jsfl: generator_kernel must be odd");
}

std::size_t NetworkConfig::embedding_rows() const { return graph::kPyramidScales * streams(); }

void NetworkConfig::validate() const {
  if (frames == 0 || in_channels == 0 || embed_width == 0 || head_width == 0 || views == 0 || vatl_width == 0) {
    throw std::invalid_argument("network: sizes must be positive");
  }
  if (block_widths.empty()) throw std::invalid_argument("network: at least one block is required");
  if (block_strides.size() != block_widths.size()) {
    throw std::invalid_argument("network: block_strides must have one entry per block");
  }
  for (std::size_t w : block_widths)
    if (w == 0) throw std::invalid_argument("network: block widths must be positive");
  for (std::size_t s : block_strides)
    if (s == 0) throw std::invalid_argument("network: block strides must be positive");
  if (embed_kernel % 2 == 0) throw std::invalid_argument("network: embed_kernel must be odd");
  jsfl.validate();
  if (uses_jsfl()) {
    std::size_t width = embed_width;
    for (std::size_t w : block_widths) {
      if (width % jsfl.reduction != 0) {
        throw std::invalid_argument("network: block input width " + std::to_string(width) +
                                    " is not divisible by reduction " + std::to_string(jsfl.reduction));
      }
      width = w;
    }
  }
}

NetworkConfig NetworkConfig::casia() { return NetworkConfig{}; }

NetworkConfig NetworkConfig::desk() {
  NetworkConfig c;
  c.frames = 30;
  c.embed_width = 16;
  c.block_widths = {32, 32, 64, 64};
  c.head_width = 64;
  return c;
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::baseline: return "baseline";
    case Variant::jsfl_only: return "jsfl-only";
    case Variant::vatl_only: return "vatl-only";
    case Variant::cag_joint: return "cag-joint";
    case Variant::cag_two_stream: return "cag-two-stream";
  }
  return "unknown";
}

Variant parse_variant(const std::string& s) {
  for (Variant v : {Variant::baseline, Variant::jsfl_only, Variant::vatl_only, Variant::cag_joint,
                    Variant::cag_two_stream}) {
    if (to_string(v) == s) return v;
  }
  throw std::invalid_argument("unknown variant '" + s + "'");
}

std::string to_string(JsflMode m) {
  switch (m) {
    case JsflMode::adaptive: return "adaptive";
    case JsflMode::non_adaptive: return "non-adaptive";
    case JsflMode::global: return "global";
  }
  return "unknown";
}

JsflMode parse_jsfl_mode(const std::string& s) {
  for (JsflMode m : {JsflMode::adaptive, JsflMode::non_adaptive, JsflMode::global}) {
    if (to_string(m) == s) return m;
  }
  throw std::invalid_argument("unknown jsfl mode '" + s + "'");
}

void to_json(nlohmann::json& j, const JsflConfig& c) {
  j = {{"pooled_frames", c.pooled_frames},     {"reduction", c.reduction},
       {"inflation", c.inflation},             {"spatial_kernels", c.spatial_kernels},
       {"temporal_kernel", c.temporal_kernel}, {"generator_kernel", c.generator_kernel},
       {"mode", to_string(c.mode)}};
}

void from_json(const nlohmann::json& j, JsflConfig& c) {
  c.pooled_frames = j.value("pooled_frames", c.pooled_frames);
  c.reduction = j.value("reduction", c.reduction);
  c.inflation = j.value("inflation", c.inflation);
  c.spatial_kernels = j.value("spatial_kernels", c.spatial_kernels);
  c.temporal_kernel = j.value("temporal_kernel", c.temporal_kernel);
  c.generator_kernel = j.value("generator_kernel", c.generator_kernel);
  if (j.contains("mode")) c.mode = parse_jsfl_mode(j.at("mode").get<std::string>());
}

void to_json(nlohmann::json& j, const NetworkConfig& c) {
  j = {{"skeleton", c.skeleton},
       {"frames", c.frames},
       {"in_channels", c.in_channels},
       {"embed_width", c.embed_width},
       {"block_widths", c.block_widths},
       {"block_strides", c.block_strides},
       {"head_width", c.head_width},
       {"views", c.views},
       {"vatl_width", c.vatl_width},
       {"embed_kernel", c.embed_kernel},
       {"topology_weights", c.topology_weights},
       {"jsfl", c.jsfl},
       {"variant", to_string(c.variant)}};
}

void from_json(const nlohmann::json& j, NetworkConfig& c) {
  c.skeleton = j.value("skeleton", c.skeleton);
  c.frames = j.value("frames", c.frames);
  c.in_channels = j.value("in_channels", c.in_channels);
  c.embed_width = j.value("embed_width", c.embed_width);
  c.block_widths = j.value("block_widths", c.block_widths);
  if (j.contains("block_strides")) {
    c.block_strides = j.at("block_strides").get<std::vector<std::size_t>>();
  } else if (c.block_strides.size() != c.block_widths.size()) {
    c.block_strides.assign(c.block_widths.size(), 1);
  }
  c.head_width = j.value("head_width", c.head_width);
  c.views = j.value("views", c.views);
  c.vatl_width = j.value("vatl_width", c.vatl_width);
  c.embed_kernel = j.value("embed_kernel", c.embed_kernel);
  c.topology_weights = j.value("topology_weights", c.topology_weights);
  if (j.contains("jsfl")) c.jsfl = j.at("jsfl").get<JsflConfig>();
  if (j.contains("variant")) c.variant = parse_variant(j.at("variant").get<std::string>());
}

}  // namespace cag::net
