#include "cag/graph/skeleton.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>
#include <set>
#include <sstream>

#include <json.hpp>

namespace cag::graph {

namespace {

JointGroups chunk_pyramid(std::size_t n) {
  JointGroups pyramid;
  for (std::size_t s = 1; s <= kPyramidScales; ++s) {
    const std::size_t parts = std::min(s, n);
    std::vector<std::vector<std::size_t>> groups(parts);
    for (std::size_t j = 0; j < n; ++j) groups[j * parts / n].push_back(j);
    pyramid.push_back(std::move(groups));
  }
  return pyramid;
}

std::vector<std::size_t> range(std::size_t lo, std::size_t hi) {
  std::vector<std::size_t> out;
  for (std::size_t i = lo; i < hi; ++i) out.push_back(i);
  return out;
}

void validate_pyramid(const JointGroups& pyramid, std::size_t n) {
  if (pyramid.size() != kPyramidScales) {
    throw SkeletonError("pyramid needs " + std::to_string(kPyramidScales) + " scales, got " +
                        std::to_string(pyramid.size()));
  }
  for (const auto& scale : pyramid) {
    if (scale.empty()) throw SkeletonError("pyramid scale without groups");
    for (const auto& group : scale) {
      if (group.empty()) throw SkeletonError("empty pyramid group");
      for (std::size_t j : group)
        if (j >= n) throw SkeletonError("pyramid joint " + std::to_string(j) + " out of range");
    }
  }
}

SkeletonSpec coco17() {
  SkeletonSpec spec;
  spec.name = "coco17";
  spec.joint_count = 17;
  spec.joint_names = {"nose",       "left_eye",    "right_eye",  "left_ear",    "right_ear",   "left_shoulder",
                      "right_shoulder", "left_elbow", "right_elbow", "left_wrist", "right_wrist", "left_hip",
                      "right_hip",  "left_knee",   "right_knee", "left_ankle",  "right_ankle"};
  spec.edges = {{0, 1}, {0, 2},   {1, 3},   {2, 4},   {0, 5},   {0, 6},   {5, 7},   {7, 9},
                {6, 8}, {8, 10}, {5, 11}, {6, 12}, {11, 13}, {13, 15}, {12, 14}, {14, 16}};
  spec.root = 0;
  spec.pyramid = {
      {range(0, 17)},
      {range(0, 11), range(11, 17)},
      {{0, 1, 2, 3, 4, 5, 6, 11, 12}, range(5, 11), range(11, 17)},
      {{5, 7, 9}, {6, 8, 10}, {11, 13, 15}, {12, 14, 16}},
      {range(0, 5), {5, 7, 9}, {6, 8, 10}, {11, 13, 15}, {12, 14, 16}},
      {range(0, 5), {5, 6, 11, 12}, {5, 7}, {7, 9}, {6, 8}, {8, 10}, {11, 13}, {13, 15}, {12, 14}, {14, 16}},
  };
  return spec;
}

SkeletonSpec body18() {
  SkeletonSpec spec;
  spec.name = "body18";
  spec.joint_count = 18;
  spec.joint_names = {"nose",      "neck",       "right_shoulder", "right_elbow", "right_wrist", "left_shoulder",
                      "left_elbow", "left_wrist", "right_hip",      "right_knee",  "right_ankle", "left_hip",
                      "left_knee", "left_ankle", "right_eye",      "left_eye",    "right_ear",   "left_ear"};
  spec.edges = {{1, 0}, {1, 2},   {2, 3},  {3, 4},   {1, 5},   {5, 6},   {6, 7},   {1, 8},  {8, 9},
                {9, 10}, {1, 11}, {11, 12}, {12, 13}, {0, 14}, {14, 16}, {0, 15}, {15, 17}};
  spec.root = 1;
  const std::vector<std::size_t> head = {0, 14, 15, 16, 17};
  spec.pyramid = {
      {range(0, 18)},
      {{0, 1, 2, 3, 4, 5, 6, 7, 14, 15, 16, 17}, range(8, 14)},
      {{0, 1, 2, 5, 8, 11, 14, 15, 16, 17}, range(2, 8), range(8, 14)},
      {{5, 6, 7}, {2, 3, 4}, {11, 12, 13}, {8, 9, 10}},
      {{0, 1, 14, 15, 16, 17}, {5, 6, 7}, {2, 3, 4}, {11, 12, 13}, {8, 9, 10}},
      {head, {1, 2, 5, 8, 11}, {2, 3}, {3, 4}, {5, 6}, {6, 7}, {8, 9}, {9, 10}, {11, 12}, {12, 13}},
  };
  return spec;
}

std::vector<std::vector<std::size_t>> neighbours(const SkeletonSpec& spec) {
  std::vector<std::vector<std::size_t>> adj(spec.joint_count);
  for (const auto& [a, b] : spec.edges) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  return adj;
}

}  // namespace

SkeletonSpec build_skeleton(const std::string& name) {
  if (name == "coco17") return coco17();
  if (name == "body18") return body18();
  throw SkeletonError("unknown skeleton '" + name + "' (expected coco17, body18 or a JSON file)");
}

SkeletonSpec build_custom_skeleton(std::size_t joint_count, std::vector<Edge> edges, std::size_t root,
                                   JointGroups pyramid) {
  if (joint_count == 0) throw SkeletonError("skeleton needs at least one joint");
  if (root >= joint_count) throw SkeletonError("root " + std::to_string(root) + " out of range");
  std::set<Edge> seen;
  for (const auto& [a, b] : edges) {
    if (a >= joint_count || b >= joint_count) {
      throw SkeletonError("edge (" + std::to_string(a) + ", " + std::to_string(b) + ") out of range for " +
                          std::to_string(joint_count) + " joints");
    }
    if (a == b) throw SkeletonError("self-loop edge at joint " + std::to_string(a));
    if (!seen.insert({std::min(a, b), std::max(a, b)}).second) {
      throw SkeletonError("duplicate edge (" + std::to_string(a) + ", " + std::to_string(b) + ")");
    }
  }
  SkeletonSpec spec;
  spec.name = "custom";
  spec.joint_count = joint_count;
  spec.edges = std::move(edges);
  spec.root = root;
  for (std::size_t j = 0; j < joint_count; ++j) spec.joint_names.push_back("joint" + std::to_string(j));
  const auto hops = hop_distances(spec);
  for (std::size_t j = 0; j < joint_count; ++j) {
    if (hops[j] == static_cast<std::size_t>(-1)) throw SkeletonError("skeleton is disconnected at joint " + std::to_string(j));
  }
  spec.pyramid = pyramid.empty() ? chunk_pyramid(joint_count) : std::move(pyramid);
  validate_pyramid(spec.pyramid, joint_count);
  return spec;
}

SkeletonSpec skeleton_from_json_text(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw SkeletonError(std::string("skeleton JSON: ") + e.what());
  }
  if (!doc.contains("n") || !doc.contains("edges") || !doc.contains("root")) {
    throw SkeletonError("skeleton JSON needs \"n\", \"edges\" and \"root\"");
  }
  try {
    std::vector<Edge> edges;
    for (const auto& e : doc.at("edges")) {
      if (e.size() != 2) throw SkeletonError("skeleton edge must have two endpoints");
      edges.emplace_back(e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>());
    }
    JointGroups pyramid;
    if (doc.contains("jrpp")) pyramid = doc.at("jrpp").get<JointGroups>();
    return build_custom_skeleton(doc.at("n").get<std::size_t>(), std::move(edges), doc.at("root").get<std::size_t>(),
                                 std::move(pyramid));
  } catch (const nlohmann::json::exception& e) {
    throw SkeletonError(std::string("skeleton JSON: ") + e.what());
  }
}

SkeletonSpec load_skeleton_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SkeletonError("cannot open skeleton file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return skeleton_from_json_text(buffer.str());
}

SkeletonSpec resolve_skeleton(const std::string& name_or_path) {
  if (name_or_path == "coco17" || name_or_path == "body18") return build_skeleton(name_or_path);
  return load_skeleton_json(name_or_path);
}

std::vector<std::size_t> hop_distances(const SkeletonSpec& spec) {
  const auto adj = neighbours(spec);
  std::vector<std::size_t> hops(spec.joint_count, static_cast<std::size_t>(-1));
  std::queue<std::size_t> frontier;
  hops[spec.root] = 0;
  frontier.push(spec.root);
  while (!frontier.empty()) {
    const std::size_t j = frontier.front();
    frontier.pop();
    for (std::size_t k : adj[j]) {
      if (hops[k] != static_cast<std::size_t>(-1)) continue;
      hops[k] = hops[j] + 1;
      frontier.push(k);
    }
  }
  return hops;
}

ad::Tensor normalized_adjacency(const SkeletonSpec& spec) {
  const std::size_t n = spec.joint_count;
  std::vector<double> a(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) a[i * n + i] = 1.0;
  for (const auto& [i, j] : spec.edges) {
    a[i * n + j] = 1.0;
    a[j * n + i] = 1.0;
  }
  std::vector<double> inv_sqrt_deg(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double deg = 0.0;
    for (std::size_t j = 0; j < n; ++j) deg += a[i * n + j];
    inv_sqrt_deg[i] = 1.0 / std::sqrt(deg);
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a[i * n + j] *= inv_sqrt_deg[i] * inv_sqrt_deg[j];
  return ad::Tensor::from({n, n}, std::move(a));
}

ad::Tensor partition_masks(const SkeletonSpec& spec, std::size_t k_s) {
  if (k_s != 1 && k_s != 3) {
    throw SkeletonError("unsupported partition count K_S=" + std::to_string(k_s) + " (expected 1 or 3)");
  }
  const std::size_t n = spec.joint_count;
  const auto hops = hop_distances(spec);
  std::vector<double> masks(k_s * n * n, 0.0);
  auto place = [&](std::size_t i, std::size_t j) {
    std::size_t slice = 0;
    if (k_s == 3) {
      if (hops[j] < hops[i]) slice = 1;
      else if (hops[j] > hops[i]) slice = 2;
    }
    masks[(slice * n + i) * n + j] = 1.0;
  };
  for (std::size_t i = 0; i < n; ++i) place(i, i);
  for (const auto& [i, j] : spec.edges) {
    place(i, j);
    place(j, i);
  }
  return ad::Tensor::from({k_s, n, n}, std::move(masks));
}

PartitionedAdjacency partition_adjacency(const SkeletonSpec& spec, std::size_t k_s) {
  const ad::Tensor masks = partition_masks(spec, k_s);
  const ad::Tensor norm = normalized_adjacency(spec);
  const std::size_t n = spec.joint_count;
  std::vector<double> slices(k_s * n * n);
  const auto mv = masks.values();
  const auto nv = norm.values();
  for (std::size_t k = 0; k < k_s; ++k)
    for (std::size_t e = 0; e < n * n; ++e) slices[k * n * n + e] = mv[k * n * n + e] * nv[e];
  return {k_s, n, ad::Tensor::from({k_s, n, n}, std::move(slices))};
}

std::vector<std::size_t> bone_parents(const SkeletonSpec& spec) {
  if (spec.edges.size() + 1 != spec.joint_count) {
    throw SkeletonError("bone pairs need a tree skeleton (" + std::to_string(spec.joint_count) + " joints, " +
                        std::to_string(spec.edges.size()) + " edges)");
  }
  const auto hops = hop_distances(spec);
  std::vector<std::size_t> parent(spec.joint_count, spec.root);
  for (const auto& [a, b] : spec.edges) {
    if (hops[a] + 1 == hops[b]) parent[b] = a;
    else parent[a] = b;
  }
  return parent;
}

std::vector<Edge> bone_pairs(const SkeletonSpec& spec) {
  const auto parent = bone_parents(spec);
  std::vector<Edge> pairs;
  for (std::size_t j = 0; j < spec.joint_count; ++j) pairs.emplace_back(j, parent[j]);
  return pairs;
}

}  // namespace cag::graph
