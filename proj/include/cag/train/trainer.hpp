#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <vector>

#include <json.hpp>

#include "cag/data/corpus.hpp"
#include "cag/eval/protocol.hpp"
#include "cag/network/model.hpp"
#include "cag/train/optimizer.hpp"
#include "cag/train/run_config.hpp"

namespace cag::train {

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  std::size_t iterations = 0;
  double lr = 0.0;        // main rate at the last iteration
  double loss = 0.0;      // epoch means
  double triplet = 0.0;
  double circle = 0.0;
  double view_ce = 0.0;
  double train_view_accuracy = 0.0;  // on training batches; NaN without VATL
  std::size_t degenerate_batches = 0;
  std::optional<eval::Evaluation> evaluation;

  nlohmann::json to_json() const;
};

struct TrainSummary {
  std::size_t epochs_run = 0;
  bool targets_reached = false;
  EpochMetrics last;
};

class Trainer {
 public:
  // `eval_records` feeds the periodic gallery/probe evaluation.
  Trainer(RunConfig config, data::Corpus train, std::vector<data::SequenceRecord> eval_records);

  EpochMetrics train_epoch();
  // Calibrates batch norm first when config.eval.calibrate_bn is set.
  eval::Evaluation evaluate();
  // Population batch-norm statistics over the training corpus, in
  // training-sized batches of a fixed shuffle. Returns the layers updated.
  std::size_t calibrate_batch_norm();

  // Runs up to config.epochs, writing one JSON line per epoch to `metrics`
  // (flushed per line) and a checkpoint after every evaluation when
  // `checkpoints` is set. `on_epoch` sees each line's metrics.
  TrainSummary run(std::ostream* metrics, bool checkpoints,
                   const std::function<void(const EpochMetrics&)>& on_epoch = {});

  net::Model& model() { return model_; }
  const RunConfig& config() const { return config_; }
  std::size_t iterations_per_epoch() const;
  std::size_t epoch() const { return epoch_; }

 private:
  bool targets_met(const eval::Evaluation& e) const;

  RunConfig config_;
  data::Corpus train_;
  std::vector<data::SequenceRecord> eval_records_;
  net::Model model_;
  Adam adam_;
  std::mt19937_64 rng_;
  std::size_t epoch_ = 0;
};

}  // namespace cag::train
