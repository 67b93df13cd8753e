#include "cag/train/run_config.hpp"

#include <fstream>

namespace cag::train {

void RunConfig::validate() const {
  network.validate();
  loss.validate();
  batch.validate();
  if (epochs == 0) throw std::invalid_argument("run: epochs must be positive");
  optimizer.validate(epochs);
  if (eval.every == 0) throw std::invalid_argument("run: eval.every must be positive");
  if (eval.batch_size == 0) throw std::invalid_argument("run: eval.batch_size must be positive");
  if (eval.calibration_batch == 0) throw std::invalid_argument("run: eval.calibration_batch must be positive");
}

RunConfig RunConfig::desk() {
  RunConfig c;
  c.optimizer.lr = 2e-3;
  c.optimizer.vatl_lr = 1e-2;
  c.optimizer.warmup_epochs = 2;
  c.optimizer.decay_epochs = {24, 32};
  c.loss.lambda_view = 1.0;
  c.eval.every = 4;
  c.eval.stop_at_rank1 = 1.0;
  c.eval.stop_at_view_accuracy = 0.95;
  return c;
}

namespace {

void to_json(nlohmann::json& j, const OptimConfig& c) {
  j = {{"lr", c.lr},
       {"vatl_lr", c.vatl_lr},
       {"beta1", c.beta1},
       {"beta2", c.beta2},
       {"eps", c.eps},
       {"warmup_epochs", c.warmup_epochs},
       {"decay_epochs", c.decay_epochs},
       {"decay", c.decay}};
}

void from_json(const nlohmann::json& j, OptimConfig& c) {
  c.lr = j.value("lr", c.lr);
  c.vatl_lr = j.value("vatl_lr", c.vatl_lr);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.eps = j.value("eps", c.eps);
  c.warmup_epochs = j.value("warmup_epochs", c.warmup_epochs);
  c.decay_epochs = j.value("decay_epochs", c.decay_epochs);
  c.decay = j.value("decay", c.decay);
}

void to_json(nlohmann::json& j, const obj::LossConfig& c) {
  j = {{"triplet_margin", c.triplet_margin}, {"circle_margin", c.circle_margin},
       {"circle_scale", c.circle_scale},     {"lambda_triplet", c.lambda_triplet},
       {"lambda_circle", c.lambda_circle},   {"lambda_view", c.lambda_view}};
}

void from_json(const nlohmann::json& j, obj::LossConfig& c) {
  c.triplet_margin = j.value("triplet_margin", c.triplet_margin);
  c.circle_margin = j.value("circle_margin", c.circle_margin);
  c.circle_scale = j.value("circle_scale", c.circle_scale);
  c.lambda_triplet = j.value("lambda_triplet", c.lambda_triplet);
  c.lambda_circle = j.value("lambda_circle", c.lambda_circle);
  c.lambda_view = j.value("lambda_view", c.lambda_view);
}

void to_json(nlohmann::json& j, const EvalConfig& c) {
  j = {{"every", c.every},
       {"gallery_conditions", c.gallery_conditions},
       {"exclude_identical_view", c.exclude_identical_view},
       {"batch_size", c.batch_size},
       {"calibrate_bn", c.calibrate_bn},
       {"calibration_batch", c.calibration_batch},
       {"stop_at_rank1", c.stop_at_rank1},
       {"stop_at_view_accuracy", c.stop_at_view_accuracy}};
}

void from_json(const nlohmann::json& j, EvalConfig& c) {
  c.every = j.value("every", c.every);
  c.gallery_conditions = j.value("gallery_conditions", c.gallery_conditions);
  c.exclude_identical_view = j.value("exclude_identical_view", c.exclude_identical_view);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.calibrate_bn = j.value("calibrate_bn", c.calibrate_bn);
  c.calibration_batch = j.value("calibration_batch", c.calibration_batch);
  c.stop_at_rank1 = j.value("stop_at_rank1", c.stop_at_rank1);
  c.stop_at_view_accuracy = j.value("stop_at_view_accuracy", c.stop_at_view_accuracy);
}

void check_keys(const nlohmann::json& j, std::initializer_list<const char*> known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    bool found = false;
    for (const char* k : known) found = found || key == k;
    if (!found) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

}  // namespace

void to_json(nlohmann::json& j, const RunConfig& c) {
  nlohmann::json loss, optimizer, eval;
  to_json(loss, c.loss);
  to_json(optimizer, c.optimizer);
  to_json(eval, c.eval);
  j = {{"network", c.network},
       {"loss", loss},
       {"optimizer", optimizer},
       {"batch", {{"p", c.batch.p}, {"k", c.batch.k}}},
       {"corpus", c.corpus},
       {"eval_corpus", c.eval_corpus},
       {"seed", c.seed},
       {"epochs", c.epochs},
       {"checkpoint", c.checkpoint},
       {"metrics", c.metrics},
       {"eval", eval}};
}

void from_json(const nlohmann::json& j, RunConfig& c) {
  check_keys(j,
             {"network", "loss", "optimizer", "batch", "corpus", "eval_corpus", "seed", "epochs", "checkpoint",
              "metrics", "eval"},
             "config");
  if (j.contains("network")) from_json(j.at("network"), c.network);
  if (j.contains("loss")) from_json(j.at("loss"), c.loss);
  if (j.contains("optimizer")) from_json(j.at("optimizer"), c.optimizer);
  if (j.contains("batch")) {
    check_keys(j.at("batch"), {"p", "k"}, "batch");
    c.batch.p = j.at("batch").value("p", c.batch.p);
    c.batch.k = j.at("batch").value("k", c.batch.k);
  }
  c.corpus = j.value("corpus", c.corpus);
  c.eval_corpus = j.value("eval_corpus", c.eval_corpus);
  c.seed = j.value("seed", c.seed);
  c.epochs = j.value("epochs", c.epochs);
  c.checkpoint = j.value("checkpoint", c.checkpoint);
  c.metrics = j.value("metrics", c.metrics);
  if (j.contains("eval")) from_json(j.at("eval"), c.eval);
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  RunConfig config = RunConfig::desk();
  try {
    from_json(nlohmann::json::parse(in), config);
    config.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  } catch (const std::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config;
}

}  // namespace cag::train
