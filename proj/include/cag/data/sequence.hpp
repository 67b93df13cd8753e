#pragma once

#include <cstddef>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "cag/autodiff/tensor.hpp"
#include "cag/graph/skeleton.hpp"

namespace cag::data {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One skeleton sequence: frames x joints x channels, row-major.
struct SequenceRecord {
  std::string subject;
  std::size_t view = 0;
  std::string condition;  // "nm-01", "bg-02", "cl-01", "synthetic", ...
  std::size_t joints = 0;
  std::size_t channels = 2;
  std::vector<double> coords;

  std::size_t frames() const { return joints * channels == 0 ? 0 : coords.size() / (joints * channels); }
  // Condition tag without the sequence number: "nm-01" -> "nm".
  std::string condition_tag() const;
  ad::Tensor tensor() const;  // [T, N, C]
  void validate(std::size_t views = 0) const;
};

// Header line {"subject","view","condition","n","cin"} followed by one
// {"j": [[x, y(, conf)], ...]} object per frame.
SequenceRecord parse_sequence_text(const std::string& text, const graph::SkeletonSpec& spec,
                                   const std::string& source = "<text>");
SequenceRecord parse_sequence_file(const std::filesystem::path& path, const graph::SkeletonSpec& spec);
std::string format_sequence(const SequenceRecord& record);
void write_sequence_file(const std::filesystem::path& path, const SequenceRecord& record);

enum class SampleMode { train, eval };

// Frame indices of a length-`target` window: random (train) or centred
// (eval) crop when the sequence is long enough, otherwise loop padding.
std::vector<std::size_t> frame_indices(std::size_t available, std::size_t target, SampleMode mode,
                                       std::mt19937_64& rng);
ad::Tensor sample_fixed_length(const SequenceRecord& record, std::size_t target, SampleMode mode,
                               std::mt19937_64& rng);

// out[..., child, :] = x[..., child, :] - x[..., parent, :]; zero at the root.
// Accepts [T, N, C] or [B, T, N, C].
ad::Tensor to_bone_stream(const ad::Tensor& x, const std::vector<graph::Edge>& pairs);

}  // namespace cag::data
