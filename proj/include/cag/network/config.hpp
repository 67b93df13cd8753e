#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

namespace cag::net {

enum class Variant { baseline, jsfl_only, vatl_only, cag_joint, cag_two_stream };

// Ablation settings for the filter generator; only `adaptive` is used by
// the shipped variants.
enum class JsflMode { adaptive, non_adaptive, global };

struct JsflConfig {
  std::size_t pooled_frames = 15;  // T_P
  std::size_t reduction = 8;       // r
  std::size_t inflation = 2;       // alpha
  std::size_t spatial_kernels = 3; // K_S
  std::size_t temporal_kernel = 9; // K_T
  std::size_t generator_kernel = 3;
  JsflMode mode = JsflMode::adaptive;

  void validate() const;
};

struct NetworkConfig {
  std::string skeleton = "coco17";
  std::size_t frames = 60;
  std::size_t in_channels = 2;
  std::size_t embed_width = 64;
  std::vector<std::size_t> block_widths = {128, 128, 256, 256};
  std::vector<std::size_t> block_strides = {1, 2, 2, 1};
  std::size_t head_width = 256;
  std::size_t views = 11;
  std::size_t vatl_width = 32;
  std::size_t embed_kernel = 9;
  std::array<double, 3> topology_weights = {0.5, 0.5, 1.0};  // g_1, g_2, g_3
  JsflConfig jsfl;
  Variant variant = Variant::cag_two_stream;

  bool uses_jsfl() const { return variant == Variant::jsfl_only || variant == Variant::cag_joint || variant == Variant::cag_two_stream; }
  bool uses_vatl() const { return variant == Variant::vatl_only || variant == Variant::cag_joint || variant == Variant::cag_two_stream; }
  bool two_stream() const { return variant == Variant::cag_two_stream; }
  std::size_t streams() const { return two_stream() ? 2 : 1; }
  std::size_t embedding_rows() const;

  void validate() const;

  static NetworkConfig casia();
  static NetworkConfig desk();
};

std::string to_string(Variant v);
Variant parse_variant(const std::string& s);
std::string to_string(JsflMode m);
JsflMode parse_jsfl_mode(const std::string& s);

void to_json(nlohmann::json& j, const JsflConfig& c);
void from_json(const nlohmann::json& j, JsflConfig& c);
void to_json(nlohmann::json& j, const NetworkConfig& c);
void from_json(const nlohmann::json& j, NetworkConfig& c);

}  // namespace cag::net
