#pragma once

#include "cag/graph/skeleton.hpp"
#include "cag/network/config.hpp"

namespace cag::testing {

// Five-joint tree small enough for exhaustive finite differences.
inline graph::SkeletonSpec tiny_skeleton() {
  return graph::build_custom_skeleton(5, {{0, 1}, {1, 2}, {1, 3}, {3, 4}}, 1);
}

inline net::NetworkConfig tiny_config(net::Variant variant = net::Variant::cag_two_stream) {
  net::NetworkConfig c;
  c.skeleton = "tiny";
  c.frames = 8;
  c.embed_width = 4;
  c.block_widths = {8, 8};
  c.block_strides = {1, 2};
  c.head_width = 8;
  c.views = 3;
  c.vatl_width = 4;
  c.embed_kernel = 3;
  c.jsfl.pooled_frames = 4;
  c.jsfl.reduction = 2;
  c.jsfl.temporal_kernel = 3;
  c.variant = variant;
  return c;
}

}  // namespace cag::testing
