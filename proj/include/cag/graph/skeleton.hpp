#pragma once

#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cag/autodiff/tensor.hpp"

namespace cag::graph {

using Edge = std::pair<std::size_t, std::size_t>;
// One entry per pyramid scale; each scale is a list of joint groups.
using JointGroups = std::vector<std::vector<std::vector<std::size_t>>>;

inline constexpr std::size_t kPyramidScales = 6;

class SkeletonError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct SkeletonSpec {
  std::string name;
  std::size_t joint_count = 0;
  std::vector<Edge> edges;
  std::size_t root = 0;
  std::vector<std::string> joint_names;
  JointGroups pyramid;  // kPyramidScales scales, coarse to fine
};

// "coco17" or "body18".
SkeletonSpec build_skeleton(const std::string& name);
// Validates indices, self-loops, duplicates and connectivity. Empty
// `pyramid` gets the contiguous-chunk fallback.
SkeletonSpec build_custom_skeleton(std::size_t joint_count, std::vector<Edge> edges, std::size_t root,
                                   JointGroups pyramid = {});
// {"n": N, "edges": [[i, j], ...], "root": r, "jrpp": optional}
SkeletonSpec load_skeleton_json(const std::filesystem::path& path);
SkeletonSpec skeleton_from_json_text(const std::string& text);
// Built-in name, or a path to a JSON skeleton file.
SkeletonSpec resolve_skeleton(const std::string& name_or_path);

std::vector<std::size_t> hop_distances(const SkeletonSpec& spec);

// D^{-1/2} (A + I) D^{-1/2}, shape [N, N].
ad::Tensor normalized_adjacency(const SkeletonSpec& spec);

// Unnormalized 0/1 masks, shape [K_S, N, N]; they tile A + I exactly once.
ad::Tensor partition_masks(const SkeletonSpec& spec, std::size_t k_s);

struct PartitionedAdjacency {
  std::size_t k_s = 0;
  std::size_t joint_count = 0;
  ad::Tensor slices;  // [K_S, N, N]
};

// K_S = 1: whole normalized graph. K_S = 3: self / centripetal /
// centrifugal by hop distance to the root.
PartitionedAdjacency partition_adjacency(const SkeletonSpec& spec, std::size_t k_s);

// (child, parent) for every joint in index order; the root is its own parent.
std::vector<Edge> bone_pairs(const SkeletonSpec& spec);
std::vector<std::size_t> bone_parents(const SkeletonSpec& spec);

}  // namespace cag::graph
