#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "cag/autodiff/tape.hpp"
#include "cag/check/suite.hpp"
#include "cag/data/corpus.hpp"
#include "cag/data/synth.hpp"
#include "cag/eval/protocol.hpp"
#include "cag/network/model.hpp"
#include "cag/train/checkpoint.hpp"
#include "cag/train/run_config.hpp"
#include "cag/train/trainer.hpp"

using namespace cag;

namespace {

enum Exit : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kBadConfig = 3,
  kCheckpointMismatch = 4,
  kBadData = 5,
};

class ExitError : public std::runtime_error {
 public:
  ExitError(int code, const std::string& what) : std::runtime_error(what), code(code) {}
  int code;
};

train::RunConfig config_or_default(const std::string& path) {
  if (path.empty()) return train::RunConfig::desk();
  try {
    return train::load_run_config(path);
  } catch (const train::ConfigError& e) {
    throw ExitError(kBadConfig, e.what());
  }
}

net::NetworkConfig profile_config(const std::string& profile, const std::string& config_path) {
  if (!config_path.empty()) return config_or_default(config_path).network;
  if (profile == "casia") return net::NetworkConfig::casia();
  if (profile == "desk") return net::NetworkConfig::desk();
  throw ExitError(kUsage, "unknown profile '" + profile + "' (expected casia or desk)");
}

data::Corpus load(const std::string& root, const net::NetworkConfig& network) {
  try {
    return data::load_corpus(root, graph::resolve_skeleton(network.skeleton), network.views);
  } catch (const data::DataError& e) {
    throw ExitError(kBadData, e.what());
  }
}

train::Checkpoint open_checkpoint(const std::string& path) {
  try {
    return train::load_checkpoint(path);
  } catch (const train::CheckpointVersionError& e) {
    throw ExitError(kCheckpointMismatch, e.what());
  } catch (const train::CheckpointError& e) {
    throw ExitError(kFailure, e.what());
  }
}

void require_matching(const net::NetworkConfig& stored, const net::NetworkConfig& given) {
  if (nlohmann::json(stored) != nlohmann::json(given)) {
    throw ExitError(kCheckpointMismatch, "checkpoint network config differs from the given config:\n  checkpoint " +
                                             nlohmann::json(stored).dump() + "\n  config     " +
                                             nlohmann::json(given).dump());
  }
}

std::vector<net::Variant> variants_for(const std::string& name) {
  if (name == "all") {
    return {net::Variant::baseline, net::Variant::jsfl_only, net::Variant::vatl_only, net::Variant::cag_joint,
            net::Variant::cag_two_stream};
  }
  try {
    return {net::parse_variant(name)};
  } catch (const std::invalid_argument& e) {
    throw ExitError(kUsage, e.what());
  }
}

std::string view_label(std::size_t view, std::size_t views) {
  std::ostringstream s;
  s << (views > 1 ? 180.0 * static_cast<double>(view) / static_cast<double>(views - 1) : 0.0);
  return s.str();
}

// min, q1, median, q3, max by linear interpolation between order statistics.
std::array<double, 5> five_numbers(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  auto q = [&](double p) {
    const double pos = p * static_cast<double>(v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  return {v.front(), q(0.25), q(0.5), q(0.75), v.back()};
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ExitError(kFailure, "cannot write " + path);
  return out;
}

// ------------------------------------------------------------------ commands

int cmd_train(const std::string& config_path, const std::string& corpus, const std::string& metrics_path,
              const std::string& checkpoint, std::optional<std::size_t> epochs, std::optional<std::uint64_t> seed,
              bool print_config) {
  auto config = config_or_default(config_path);
  if (!corpus.empty()) config.corpus = corpus;
  if (!metrics_path.empty()) config.metrics = metrics_path;
  if (!checkpoint.empty()) config.checkpoint = checkpoint;
  if (epochs) config.epochs = *epochs;
  if (seed) config.seed = *seed;
  try {
    config.validate();
  } catch (const std::invalid_argument& e) {
    throw ExitError(kBadConfig, e.what());
  }
  if (print_config) {
    std::cout << nlohmann::json(config).dump(2) << '\n';
    return kOk;
  }
  if (config.corpus.empty()) throw ExitError(kBadConfig, "no training corpus: set \"corpus\" or pass --corpus");

  auto train_corpus = load(config.corpus, config.network);
  std::vector<data::SequenceRecord> eval_records =
      config.eval_corpus.empty() ? train_corpus.records() : load(config.eval_corpus, config.network).records();
  std::cerr << "training " << net::to_string(config.network.variant) << " on " << train_corpus.size()
            << " sequences of " << train_corpus.subject_count() << " subjects\n";

  std::ofstream metrics = open_output(config.metrics);
  train::Trainer trainer(config, std::move(train_corpus), std::move(eval_records));
  const auto summary = trainer.run(&metrics, true, [](const train::EpochMetrics& m) {
    std::cerr << "epoch " << m.epoch << "  loss " << std::setprecision(5) << m.loss;
    if (m.evaluation) {
      std::cerr << "  rank-1 " << 100.0 * m.evaluation->rank1.overall << "%  view-acc "
                << 100.0 * m.evaluation->view_accuracy << "%";
    }
    std::cerr << '\n';
  });
  std::cerr << "finished after " << summary.epochs_run << " epochs"
            << (summary.targets_reached ? " (targets reached)" : "") << "; checkpoint " << config.checkpoint
            << '\n';
  return kOk;
}

int cmd_eval(const std::string& checkpoint, const std::string& corpus, const std::string& config_path,
             const std::string& csv, const std::vector<std::string>& gallery, bool keep_identical, std::size_t batch) {
  auto ck = open_checkpoint(checkpoint);
  if (!config_path.empty()) require_matching(ck.config, config_or_default(config_path).network);
  const auto records = load(corpus, ck.config).records();
  const auto e = eval::evaluate_model(*ck.model, records, gallery, !keep_identical, batch);
  std::cout << eval::format_matrix(e.rank1);
  if (!std::isnan(e.view_accuracy)) std::cout << "view-classification top-1 " << 100.0 * e.view_accuracy << "%\n";
  if (!csv.empty()) {
    auto out = open_output(csv);
    eval::write_csv(e.rank1, out);
  }
  return kOk;
}

int cmd_synth(std::size_t subjects, std::size_t views, std::size_t seqs, std::size_t frames, std::uint64_t seed,
              const std::string& skeleton, const std::string& out) {
  data::SynthCorpusOptions options;
  options.subjects = subjects;
  options.sequences = seqs;
  options.seed = seed;
  options.walker.views = views;
  options.walker.frames = frames;
  std::size_t written = 0;
  try {
    written = data::write_synthetic_corpus(out, graph::resolve_skeleton(skeleton), options);
  } catch (const data::DataError& e) {
    throw ExitError(kBadData, e.what());
  }
  std::cout << "wrote " << written << " sequences to " << out << '\n';
  return kOk;
}

int cmd_gradcheck(double tol, double h, bool verbose) {
  const auto result = check::run_gradient_suite({.h = h, .tol = tol});
  for (const auto& c : result.cases) {
    if (verbose || !c.report.passed) {
      std::cout << (c.report.passed ? "ok    " : "FAIL  ") << c.name << "  " << ad::describe(c.report) << '\n';
    }
  }
  std::size_t failed = 0;
  for (const auto& c : result.cases) failed += !c.report.passed;
  std::cout << result.cases.size() - failed << "/" << result.cases.size() << " cases passed, " << result.checked()
            << " coordinates checked at tol " << tol << '\n';
  return result.passed() ? kOk : kFailure;
}

int cmd_params(const std::string& variant, const std::string& profile, const std::string& config_path) {
  const auto config = profile_config(profile, config_path);
  std::cout << std::left << std::setw(16) << "variant" << std::right << std::setw(12) << "params" << std::setw(12)
            << "params(M)" << '\n';
  for (auto v : variants_for(variant)) {
    const std::size_t n = net::count_params(config, v);
    std::cout << std::left << std::setw(16) << net::to_string(v) << std::right << std::setw(12) << n << std::setw(12)
              << std::fixed << std::setprecision(2) << static_cast<double>(n) / 1e6 << '\n';
  }
  return kOk;
}

int cmd_flops(const std::string& variant, const std::string& profile, const std::string& config_path,
              std::size_t frames) {
  const auto config = profile_config(profile, config_path);
  if (frames == 0) frames = config.frames;
  std::cout << std::left << std::setw(16) << "variant" << std::right << std::setw(14) << "MACs" << std::setw(12)
            << "FLOPs(G)" << "   (T=" << frames << ")\n";
  for (auto v : variants_for(variant)) {
    std::cout << std::left << std::setw(16) << net::to_string(v) << std::right << std::setw(14)
              << net::estimate_macs(config, v, frames) << std::setw(12) << std::fixed << std::setprecision(3)
              << net::estimate_flops(config, v, frames) << '\n';
  }
  return kOk;
}

int cmd_topo_corr(const std::string& checkpoint, const std::string& out_path) {
  auto ck = open_checkpoint(checkpoint);
  auto* learner = ck.model->view_learner();
  if (!learner) throw ExitError(kFailure, "variant " + net::to_string(ck.config.variant) + " has no topology learner");
  const auto m = vatl::topology_correlation_matrix(learner->topology_set());
  const std::size_t views = learner->topology_set().size();
  std::ofstream file;
  if (!out_path.empty()) file = open_output(out_path);
  std::ostream& out = out_path.empty() ? std::cout : file;
  out << "view";
  for (std::size_t j = 0; j < views; ++j) out << ',' << view_label(j, views);
  out << '\n' << std::setprecision(10);
  const auto values = m.values();
  for (std::size_t i = 0; i < views; ++i) {
    out << view_label(i, views);
    for (std::size_t j = 0; j < views; ++j) out << ',' << values[i * views + j];
    out << '\n';
  }
  return kOk;
}

int cmd_filter_stats(const std::string& checkpoint, const std::string& corpus, const std::string& out_path,
                     std::size_t limit) {
  auto ck = open_checkpoint(checkpoint);
  if (!ck.config.uses_jsfl()) {
    throw ExitError(kFailure, "variant " + net::to_string(ck.config.variant) + " generates no filters");
  }
  auto records = load(corpus, ck.config).records();
  if (limit > 0 && records.size() > limit) records.resize(limit);
  const data::Corpus selected(records);
  std::vector<std::size_t> all(records.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;

  net::FilterTrace trace;
  {
    ad::NoGradGuard no_grad;
    ck.model->forward(data::stack_records(selected, all, ck.config.frames), ad::Mode::eval, &trace);
  }
  const auto& names = ck.model->skeleton().joint_names;
  const std::size_t blocks = trace.size() / ck.config.streams();
  std::ofstream file;
  if (!out_path.empty()) file = open_output(out_path);
  std::ostream& out = out_path.empty() ? std::cout : file;
  out << "stream,block,filter,joint,joint_name,min,q1,median,q3,max\n" << std::setprecision(8);
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const std::string stream = ck.config.two_stream() && i >= blocks ? "bone" : "joint";
    for (const auto& [kind, tensor] : {std::pair{"spatial", trace[i].spatial}, std::pair{"temporal", trace[i].temporal}}) {
      // [B, K, N, C]: gather every value belonging to joint n.
      const auto& s = tensor.shape();
      const auto v = tensor.values();
      const std::size_t joints = s[2];
      const std::size_t channels = s[3];
      for (std::size_t n = 0; n < joints; ++n) {
        std::vector<double> xs;
        for (std::size_t outer = 0; outer < s[0] * s[1]; ++outer)
          for (std::size_t c = 0; c < channels; ++c) xs.push_back(v[(outer * joints + n) * channels + c]);
        const auto f = five_numbers(std::move(xs));
        out << stream << ',' << i % blocks << ',' << kind << ',' << n << ','
            << (n < names.size() ? names[n] : std::to_string(n));
        for (double x : f) out << ',' << x;
        out << '\n';
      }
    }
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint-specific filter and view-adaptive topology gait recognition"};
  app.require_subcommand(1);

  auto* train = app.add_subcommand("train", "Train a model from a run config");
  std::string train_config, train_corpus, train_metrics, train_checkpoint;
  std::optional<std::size_t> train_epochs;
  std::optional<std::uint64_t> train_seed;
  bool print_config = false;
  train->add_option("--config", train_config, "Run config JSON (desk profile when omitted)");
  train->add_option("--corpus", train_corpus, "Corpus directory; overrides the config");
  train->add_option("--metrics", train_metrics, "JSONL metrics file; overrides the config");
  train->add_option("--checkpoint", train_checkpoint, "Checkpoint path; overrides the config");
  train->add_option("--epochs", train_epochs, "Epoch limit; overrides the config");
  train->add_option("--seed", train_seed, "Seed; overrides the config");
  train->add_flag("--print-config", print_config, "Print the effective config and exit");

  auto* ev = app.add_subcommand("eval", "Gallery/probe rank-1 evaluation of a checkpoint");
  std::string eval_checkpoint, eval_corpus, eval_config, eval_csv;
  std::vector<std::string> gallery = {"nm-01", "nm-02"};
  bool keep_identical = false;
  std::size_t eval_batch = 64;
  ev->add_option("--checkpoint", eval_checkpoint, "Checkpoint file")->required();
  ev->add_option("--corpus", eval_corpus, "Corpus directory")->required();
  ev->add_option("--config", eval_config, "Run config whose network must match the checkpoint");
  ev->add_option("--csv", eval_csv, "Write the per-view matrix as CSV");
  ev->add_option("--gallery", gallery, "Gallery conditions")->delimiter(',');
  ev->add_flag("--include-identical-view", keep_identical, "Keep identical-view gallery rows");
  ev->add_option("--batch", eval_batch, "Sequences per forward pass")->check(CLI::PositiveNumber);

  auto* synth = app.add_subcommand("synth", "Write a synthetic walker corpus");
  std::size_t subjects = 8, views = 11, seqs = 4, frames = 40;
  std::uint64_t synth_seed = 0;
  std::string skeleton = "coco17", out_dir;
  synth->add_option("--subjects", subjects, "Subjects")->check(CLI::PositiveNumber);
  synth->add_option("--views", views, "Camera views")->check(CLI::Range(2, 1000));
  synth->add_option("--seqs", seqs, "Sequences per subject and view")->check(CLI::PositiveNumber);
  synth->add_option("--frames", frames, "Frames per sequence")->check(CLI::PositiveNumber);
  synth->add_option("--seed", synth_seed, "Corpus seed");
  synth->add_option("--skeleton", skeleton, "coco17, body18 or a skeleton JSON file");
  synth->add_option("--out", out_dir, "Output directory")->required();

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every op and a tiny network");
  double tol = 1e-4, step = 1e-5;
  bool verbose = false;
  gc->add_option("--tol", tol, "Relative tolerance")->check(CLI::PositiveNumber);
  gc->add_option("--step", step, "Central-difference step")->check(CLI::PositiveNumber);
  gc->add_flag("-v,--verbose", verbose, "Report every case");

  std::string variant = "all", profile = "casia", complexity_config;
  std::size_t flop_frames = 0;
  auto* params = app.add_subcommand("params", "Learnable parameter counts per variant");
  params->add_option("--variant", variant, "Variant name or all");
  params->add_option("--profile", profile, "casia or desk");
  params->add_option("--config", complexity_config, "Take the network from a run config");
  auto* flops = app.add_subcommand("flops", "Analytic FLOPs of one forward pass per variant");
  flops->add_option("--variant", variant, "Variant name or all");
  flops->add_option("--profile", profile, "casia or desk");
  flops->add_option("--config", complexity_config, "Take the network from a run config");
  flops->add_option("--frames", flop_frames, "Sequence length (config frames when omitted)");

  auto* topo = app.add_subcommand("topo-corr", "Mean squared difference between learned view topologies (CSV)");
  std::string topo_checkpoint, topo_out;
  topo->add_option("--checkpoint", topo_checkpoint, "Checkpoint file")->required();
  topo->add_option("--out", topo_out, "CSV file (stdout when omitted)");

  auto* fstats = app.add_subcommand("filter-stats", "Per-joint summary of generated filters (CSV)");
  std::string fs_checkpoint, fs_corpus, fs_out;
  std::size_t fs_limit = 64;
  fstats->add_option("--checkpoint", fs_checkpoint, "Checkpoint file")->required();
  fstats->add_option("--corpus", fs_corpus, "Corpus directory")->required();
  fstats->add_option("--out", fs_out, "CSV file (stdout when omitted)");
  fstats->add_option("--limit", fs_limit, "Sequences to run (0 for all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*train) {
      return cmd_train(train_config, train_corpus, train_metrics, train_checkpoint, train_epochs, train_seed,
                       print_config);
    }
    if (*ev) return cmd_eval(eval_checkpoint, eval_corpus, eval_config, eval_csv, gallery, keep_identical, eval_batch);
    if (*synth) return cmd_synth(subjects, views, seqs, frames, synth_seed, skeleton, out_dir);
    if (*gc) return cmd_gradcheck(tol, step, verbose);
    if (*params) return cmd_params(variant, profile, complexity_config);
    if (*flops) return cmd_flops(variant, profile, complexity_config, flop_frames);
    if (*topo) return cmd_topo_corr(topo_checkpoint, topo_out);
    if (*fstats) return cmd_filter_stats(fs_checkpoint, fs_corpus, fs_out, fs_limit);
  } catch (const ExitError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kUsage;
}
