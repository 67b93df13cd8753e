#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "cag/data/corpus.hpp"
#include "cag/network/config.hpp"
#include "cag/objectives/losses.hpp"
#include "cag/train/optimizer.hpp"

namespace cag::train {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EvalConfig {
  std::size_t every = 10;  // epochs between evaluations; the last epoch is always evaluated
  std::vector<std::string> gallery_conditions = {"nm-01", "nm-02"};
  bool exclude_identical_view = true;
  std::size_t batch_size = 64;
  // Re-estimate batch-norm statistics over the training corpus first, in
  // equal chunks of at most calibration_batch sequences.
  bool calibrate_bn = true;
  std::size_t calibration_batch = 256;
  // Training stops at the first evaluation meeting both targets; a negative
  // target disables early stopping.
  double stop_at_rank1 = -1.0;
  double stop_at_view_accuracy = -1.0;
};

struct RunConfig {
  net::NetworkConfig network = net::NetworkConfig::desk();
  obj::LossConfig loss;
  OptimConfig optimizer;
  data::BatchSpec batch{8, 4};
  std::string corpus;       // training sequences
  std::string eval_corpus;  // defaults to `corpus`
  std::uint64_t seed = 0;
  std::size_t epochs = 300;
  std::string checkpoint = "checkpoint.json";
  std::string metrics = "metrics.jsonl";
  EvalConfig eval;

  void validate() const;

  // Desk-scale profile tuned to reach the synthetic-corpus targets.
  static RunConfig desk();
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

// Throws ConfigError when the file is missing, malformed or invalid.
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace cag::train
