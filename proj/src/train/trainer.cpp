#include "cag/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include "cag/autodiff/tape.hpp"
#include "cag/objectives/losses.hpp"
#include "cag/train/checkpoint.hpp"

namespace cag::train {

namespace {

double scalar_value(const ad::Tensor& t) { return t.defined() ? t.values()[0] : 0.0; }

// NaN has no JSON representation; it is written as null.
nlohmann::json number(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

// Every iteration frees and reallocates the same multi-megabyte activations;
// keep them on the heap instead of round-tripping through mmap.
void keep_heap_warm() {
#ifdef __GLIBC__
  static const bool once = [] {
    mallopt(M_MMAP_THRESHOLD, 32 << 20);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    return true;
  }();
  (void)once;
#endif
}

}  // namespace

nlohmann::json EpochMetrics::to_json() const {
  nlohmann::json j = {{"epoch", epoch},
                      {"iterations", iterations},
                      {"lr", lr},
                      {"loss", number(loss)},
                      {"triplet", number(triplet)},
                      {"circle", number(circle)},
                      {"view_ce", number(view_ce)},
                      {"train_view_acc", number(train_view_accuracy)},
                      {"degenerate_batches", degenerate_batches}};
  if (evaluation) {
    j["rank1"] = number(evaluation->rank1.overall);
    j["rank1_pooled"] = number(evaluation->rank1.pooled);
    j["view_acc"] = number(evaluation->view_accuracy);
  }
  return j;
}

Trainer::Trainer(RunConfig config, data::Corpus train, std::vector<data::SequenceRecord> eval_records)
    : config_(std::move(config)),
      train_(std::move(train)),
      eval_records_(std::move(eval_records)),
      model_(config_.network, config_.seed),
      adam_(model_.params(), config_.optimizer),
      rng_(config_.seed ^ 0x5DEECE66Dull) {
  keep_heap_warm();
  config_.validate();
  if (train_.size() == 0) throw std::invalid_argument("trainer: training corpus is empty");
}

std::size_t Trainer::iterations_per_epoch() const {
  const std::size_t batch = config_.batch.p * config_.batch.k;
  return (train_.size() + batch - 1) / batch;
}

EpochMetrics Trainer::train_epoch() {
  const std::size_t iters = iterations_per_epoch();
  const bool vatl = config_.network.uses_vatl();
  EpochMetrics m;
  m.epoch = epoch_ + 1;
  m.iterations = iters;
  std::size_t view_hits = 0;
  std::size_t view_total = 0;
  for (std::size_t it = 0; it < iters; ++it) {
    const double factor = schedule_factor(config_.optimizer, epoch_, it, iters);
    ad::TapeScope tape;
    const auto batch = data::sample_batch(train_, config_.batch, config_.network.frames, rng_);
    const auto out = model_.forward(batch.x, ad::Mode::train);

    obj::LossParts parts;
    const auto tri = obj::triplet_loss(out.embedding, batch.subjects, config_.loss.triplet_margin);
    const auto cir =
        obj::circle_loss(out.embedding, batch.subjects, config_.loss.circle_margin, config_.loss.circle_scale);
    parts.triplet = tri.value;
    parts.circle = cir.value;
    m.degenerate_batches += tri.degenerate || cir.degenerate;
    if (vatl) {
      parts.view = obj::view_ce_loss(out.view.logits, batch.views);
      for (std::size_t i = 0; i < batch.views.size(); ++i) view_hits += out.view.ids[i] == batch.views[i];
      view_total += batch.views.size();
    }
    const auto loss = obj::total_loss(parts, config_.loss);

    model_.params().zero_grad();
    ad::backward(loss);
    adam_.step(factor);

    m.loss += scalar_value(loss);
    m.triplet += scalar_value(parts.triplet);
    m.circle += scalar_value(parts.circle);
    m.view_ce += scalar_value(parts.view);
    m.lr = factor * config_.optimizer.lr;
  }
  model_.params().zero_grad();
  const double n = static_cast<double>(iters);
  m.loss /= n;
  m.triplet /= n;
  m.circle /= n;
  m.view_ce /= n;
  m.train_view_accuracy = view_total ? static_cast<double>(view_hits) / static_cast<double>(view_total)
                                     : std::numeric_limits<double>::quiet_NaN();
  ++epoch_;
  return m;
}

std::size_t Trainer::calibrate_batch_norm() {
  std::vector<std::size_t> order(train_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 shuffle_rng(config_.seed ^ 0xB47C4A11ull);
  std::shuffle(order.begin(), order.end(), shuffle_rng);
  const std::size_t cap = config_.eval.calibration_batch;
  const std::size_t chunks = std::max<std::size_t>(1, (order.size() + cap - 1) / cap);
  ad::NoGradGuard no_grad;
  ad::BatchNormCalibration calibration;
  for (std::size_t c = 0; c < chunks; ++c) {
    const std::vector<std::size_t> idx(order.begin() + c * order.size() / chunks,
                                       order.begin() + (c + 1) * order.size() / chunks);
    if (idx.empty()) continue;
    model_.forward(data::stack_records(train_, idx, config_.network.frames), ad::Mode::train);
  }
  return calibration.commit();
}

eval::Evaluation Trainer::evaluate() {
  if (config_.eval.calibrate_bn) calibrate_batch_norm();
  return eval::evaluate_model(model_, eval_records_, config_.eval.gallery_conditions,
                              config_.eval.exclude_identical_view, config_.eval.batch_size);
}

bool Trainer::targets_met(const eval::Evaluation& e) const {
  const auto& ec = config_.eval;
  if (ec.stop_at_rank1 < 0.0 && ec.stop_at_view_accuracy < 0.0) return false;
  if (ec.stop_at_rank1 >= 0.0 && !(e.rank1.overall >= ec.stop_at_rank1 && e.rank1.pooled >= ec.stop_at_rank1)) {
    return false;
  }
  if (ec.stop_at_view_accuracy >= 0.0 && config_.network.uses_vatl() &&
      !(e.view_accuracy >= ec.stop_at_view_accuracy)) {
    return false;
  }
  return true;
}

TrainSummary Trainer::run(std::ostream* metrics, bool checkpoints,
                          const std::function<void(const EpochMetrics&)>& on_epoch) {
  TrainSummary summary;
  while (epoch_ < config_.epochs) {
    auto m = train_epoch();
    const bool last = epoch_ == config_.epochs;
    if (!eval_records_.empty() && (epoch_ % config_.eval.every == 0 || last)) {
      m.evaluation = evaluate();
      summary.targets_reached = targets_met(*m.evaluation);
      if (checkpoints) save_checkpoint(config_.checkpoint, model_, epoch_);
    }
    if (metrics) *metrics << m.to_json().dump() << std::endl;
    if (on_epoch) on_epoch(m);
    summary.epochs_run = epoch_;
    summary.last = std::move(m);
    if (summary.targets_reached) break;
  }
  return summary;
}

}  // namespace cag::train
