#include "cag/train/checkpoint.hpp"

#include <fstream>

#include <json.hpp>

namespace cag::train {

namespace {

constexpr const char* kFormat = "cag-checkpoint";

nlohmann::json dump_tensors(const std::vector<net::NamedTensor>& tensors) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& t : tensors) {
    const auto values = t.tensor.values();
    out[t.name] = {{"shape", t.tensor.shape()}, {"values", std::vector<double>(values.begin(), values.end())}};
  }
  return out;
}

void restore_tensors(const nlohmann::json& stored, const std::vector<net::NamedTensor>& tensors, const char* what) {
  if (stored.size() != tensors.size()) {
    throw CheckpointError(std::string("checkpoint has ") + std::to_string(stored.size()) + " " + what +
                          ", model expects " + std::to_string(tensors.size()));
  }
  for (const auto& t : tensors) {
    if (!stored.contains(t.name)) throw CheckpointError(std::string("checkpoint is missing ") + what + " '" + t.name + "'");
    const auto& entry = stored.at(t.name);
    if (entry.at("shape").get<ad::Shape>() != t.tensor.shape()) {
      throw CheckpointError("checkpoint shape mismatch for '" + t.name + "'");
    }
    const auto values = entry.at("values").get<std::vector<double>>();
    ad::Tensor target = t.tensor;
    auto dst = target.mutable_values();
    if (values.size() != dst.size()) throw CheckpointError("checkpoint size mismatch for '" + t.name + "'");
    std::copy(values.begin(), values.end(), dst.begin());
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const net::Model& model, std::size_t epoch) {
  const nlohmann::json j = {{"format", kFormat},
                            {"version", kCheckpointVersion},
                            {"epoch", epoch},
                            {"config", model.config()},
                            {"params", dump_tensors(model.params().params())},
                            {"buffers", dump_tensors(model.params().buffers())}};
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw CheckpointError("cannot write checkpoint " + tmp.string());
    out << j.dump() << '\n';
    if (!out) throw CheckpointError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CheckpointError("cannot read checkpoint " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
  if (!j.is_object() || j.value("format", std::string()) != kFormat) {
    throw CheckpointError(path.string() + ": not a checkpoint file");
  }
  if (!j.contains("version") || !j.at("version").is_number_integer()) {
    throw CheckpointVersionError(path.string() + ": missing version field");
  }
  const int version = j.at("version").get<int>();
  if (version != kCheckpointVersion) {
    throw CheckpointVersionError(path.string() + ": checkpoint version " + std::to_string(version) +
                                 ", this build reads version " + std::to_string(kCheckpointVersion));
  }
  Checkpoint ck;
  try {
    ck.config = j.at("config").get<net::NetworkConfig>();
    ck.config.validate();
    ck.epoch = j.value("epoch", std::size_t{0});
    ck.model = std::make_unique<net::Model>(ck.config, 0);
    restore_tensors(j.at("params"), ck.model->params().params(), "parameters");
    restore_tensors(j.at("buffers"), ck.model->params().buffers(), "buffers");
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
  return ck;
}

}  // namespace cag::train
