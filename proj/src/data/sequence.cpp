#include "cag/data/sequence.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "cag/autodiff/ops.hpp"

namespace cag::data {

using nlohmann::json;

namespace {

const char* const kConditionTags[] = {"nm", "bg", "cl", "synthetic"};

std::string where(const std::string& source, std::size_t line) { return source + ":" + std::to_string(line) + ": "; }

template <typename T>
T header_field(const json& header, const char* key, const std::string& at) {
  if (!header.contains(key)) throw DataError(at + "header is missing \"" + key + "\"");
  try {
    return header.at(key).get<T>();
  } catch (const json::exception&) {
    throw DataError(at + "header field \"" + key + "\" has the wrong type");
  }
}

}  // namespace

std::string SequenceRecord::condition_tag() const { return condition.substr(0, condition.find('-')); }

ad::Tensor SequenceRecord::tensor() const { return ad::Tensor::from({frames(), joints, channels}, coords); }

void SequenceRecord::validate(std::size_t views) const {
  if (joints == 0) throw DataError("sequence " + subject + ": no joints");
  if (channels != 2 && channels != 3) throw DataError("sequence " + subject + ": channels must be 2 or 3");
  if (coords.empty() || coords.size() % (joints * channels) != 0) {
    throw DataError("sequence " + subject + ": needs at least one complete frame");
  }
  for (double v : coords)
    if (!std::isfinite(v)) throw DataError("sequence " + subject + ": non-finite coordinate");
  if (views != 0 && view >= views) {
    throw DataError("sequence " + subject + ": view " + std::to_string(view) + " outside [0, " +
                    std::to_string(views) + ")");
  }
  bool known = false;
  for (const char* tag : kConditionTags) known = known || condition_tag() == tag;
  if (!known) throw DataError("sequence " + subject + ": unknown condition '" + condition + "'");
}

SequenceRecord parse_sequence_text(const std::string& text, const graph::SkeletonSpec& spec,
                                   const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  SequenceRecord rec;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string at = where(source, number);
    json value;
    try {
      value = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError(at + "malformed JSON (" + e.what() + ")");
    }
    if (!have_header) {
      if (!value.is_object()) throw DataError(at + "header must be an object");
      rec.subject = header_field<std::string>(value, "subject", at);
      rec.view = header_field<std::size_t>(value, "view", at);
      rec.condition = header_field<std::string>(value, "condition", at);
      rec.joints = header_field<std::size_t>(value, "n", at);
      rec.channels = value.contains("cin") ? header_field<std::size_t>(value, "cin", at) : 2;
      if (rec.joints != spec.joint_count) {
        throw DataError(at + "joint count mismatch for skeleton " + spec.name + ": expected " +
                        std::to_string(spec.joint_count) + ", got " + std::to_string(rec.joints));
      }
      if (rec.channels != 2 && rec.channels != 3) {
        throw DataError(at + "cin must be 2 or 3, got " + std::to_string(rec.channels));
      }
      have_header = true;
      continue;
    }
    if (!value.is_object() || !value.contains("j") || !value["j"].is_array()) {
      throw DataError(at + "frame must be an object with a \"j\" array");
    }
    const json& joints = value["j"];
    if (joints.size() != rec.joints) {
      throw DataError(at + "wrong joint count: expected " + std::to_string(rec.joints) + ", got " +
                      std::to_string(joints.size()));
    }
    for (std::size_t j = 0; j < joints.size(); ++j) {
      const json& p = joints[j];
      if (!p.is_array() || p.size() != rec.channels) {
        throw DataError(at + "joint " + std::to_string(j) + " must have " + std::to_string(rec.channels) +
                        " coordinates");
      }
      for (const json& c : p) {
        if (!c.is_number()) throw DataError(at + "joint " + std::to_string(j) + " has a non-numeric coordinate");
        const double v = c.get<double>();
        if (!std::isfinite(v)) throw DataError(at + "joint " + std::to_string(j) + " has a non-finite coordinate");
        rec.coords.push_back(v);
      }
    }
  }
  if (!have_header) throw DataError(source + ": empty sequence file");
  if (rec.coords.empty()) throw DataError(source + ": sequence has no frames");
  try {
    rec.validate();
  } catch (const DataError& e) {
    throw DataError(source + ": " + e.what());
  }
  return rec;
}

SequenceRecord parse_sequence_file(const std::filesystem::path& path, const graph::SkeletonSpec& spec) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_sequence_text(buffer.str(), spec, path.string());
}

std::string format_sequence(const SequenceRecord& record) {
  record.validate();
  std::string out = json{{"subject", record.subject},
                         {"view", record.view},
                         {"condition", record.condition},
                         {"n", record.joints},
                         {"cin", record.channels}}
                        .dump();
  out += '\n';
  const std::size_t stride = record.joints * record.channels;
  for (std::size_t t = 0; t < record.frames(); ++t) {
    json frame = json::array();
    for (std::size_t j = 0; j < record.joints; ++j) {
      json point = json::array();
      for (std::size_t c = 0; c < record.channels; ++c) point.push_back(record.coords[t * stride + j * record.channels + c]);
      frame.push_back(std::move(point));
    }
    out += json{{"j", std::move(frame)}}.dump();
    out += '\n';
  }
  return out;
}

void write_sequence_file(const std::filesystem::path& path, const SequenceRecord& record) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << format_sequence(record);
  if (!out) throw DataError("failed writing " + path.string());
}

std::vector<std::size_t> frame_indices(std::size_t available, std::size_t target, SampleMode mode,
                                       std::mt19937_64& rng) {
  if (available == 0 || target == 0) throw DataError("frame sampling needs non-empty source and target");
  std::vector<std::size_t> idx(target);
  if (available < target) {
    for (std::size_t t = 0; t < target; ++t) idx[t] = t % available;
    return idx;
  }
  const std::size_t slack = available - target;
  const std::size_t start =
      mode == SampleMode::eval ? slack / 2 : std::uniform_int_distribution<std::size_t>(0, slack)(rng);
  for (std::size_t t = 0; t < target; ++t) idx[t] = start + t;
  return idx;
}

ad::Tensor sample_fixed_length(const SequenceRecord& record, std::size_t target, SampleMode mode,
                               std::mt19937_64& rng) {
  const auto idx = frame_indices(record.frames(), target, mode, rng);
  const std::size_t stride = record.joints * record.channels;
  std::vector<double> out;
  out.reserve(target * stride);
  for (std::size_t t : idx) out.insert(out.end(), record.coords.begin() + t * stride, record.coords.begin() + (t + 1) * stride);
  return ad::Tensor::from({target, record.joints, record.channels}, std::move(out));
}

ad::Tensor to_bone_stream(const ad::Tensor& x, const std::vector<graph::Edge>& pairs) {
  if (x.rank() != 3 && x.rank() != 4) {
    throw ad::ShapeError("to_bone_stream: expected [T, N, C] or [B, T, N, C], got " + ad::shape_str(x.shape()));
  }
  const int axis = static_cast<int>(x.rank()) - 2;
  if (pairs.size() != x.dim(axis)) {
    throw ad::ShapeError("to_bone_stream: " + std::to_string(pairs.size()) + " bone pairs for " +
                         std::to_string(x.dim(axis)) + " joints");
  }
  std::vector<std::size_t> parents(pairs.size());
  for (const auto& [child, parent] : pairs) parents.at(child) = parent;
  return ad::sub(x, ad::index_select(x, axis, parents));
}

}  // namespace cag::data
