// Acceptance suite: one PASS/FAIL line per criterion.
//
// usage: acceptance [path/to/cag] [--only N]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include "cag/check/suite.hpp"
#include "cag/data/synth.hpp"
#include "cag/eval/protocol.hpp"
#include "cag/network/blocks.hpp"
#include "cag/network/model.hpp"
#include "cag/objectives/losses.hpp"
#include "cag/train/checkpoint.hpp"
#include "cag/train/trainer.hpp"
#include "cag/vatl/vatl.hpp"
#include "eval_oracle.hpp"
#include "test_util.hpp"

using namespace cag;
using ad::Tensor;
using cag::testing::random_size;
using cag::testing::random_tensor;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v, int precision = 3) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(precision) << v;
  return s.str();
}

std::string signed_percent(double fraction) {
  return (fraction >= 0 ? "+" : "") + fmt(100 * fraction, 1) + "%";
}

std::filesystem::path workdir() {
  const auto dir = std::filesystem::temp_directory_path() / "cag_acceptance";
  std::filesystem::create_directories(dir);
  return dir;
}

// ------------------------------------------------------------------ 1

Outcome gradient_integrity() {
  const auto start = Clock::now();
  const auto result = check::run_gradient_suite({.h = 1e-5, .tol = 1e-4});
  const double elapsed = seconds_since(start);
  std::size_t failed = 0;
  double worst = 0.0;
  std::string worst_name;
  for (const auto& c : result.cases) {
    failed += !c.report.passed;
    if (c.report.max_rel_error >= worst) {
      worst = c.report.max_rel_error;
      worst_name = c.name;
    }
    if (!c.report.passed) std::cerr << "  gradcheck failed: " << c.name << "  " << ad::describe(c.report) << '\n';
  }
  const bool network_checked =
      std::any_of(result.cases.begin(), result.cases.end(), [](const auto& c) { return c.name.rfind("network/", 0) == 0; });
  std::ostringstream d;
  d << result.cases.size() - failed << "/" << result.cases.size() << " cases, " << result.checked()
    << " coordinates, worst rel err " << std::scientific << std::setprecision(2) << worst << " (" << worst_name
    << "), " << fmt(elapsed, 1) << " s";
  return {result.passed() && network_checked && elapsed < 120.0, d.str()};
}

// ------------------------------------------------------------------ 2

struct OracleTally {
  std::size_t instances = 0;
  double worst = 0.0;
  void observe(double got, double want) { worst = std::max(worst, std::abs(got - want)); }
};

OracleTally oracle_depthwise_joint_scale(std::mt19937_64& rng, std::size_t trials) {
  OracleTally tally;
  for (std::size_t trial = 0; trial < trials; ++trial, ++tally.instances) {
    const std::size_t b = random_size(rng, 1, 3), t = random_size(rng, 1, 6), n = random_size(rng, 1, 5),
                      c = random_size(rng, 1, 4);
    const bool shared = trial % 2 == 0;
    const Tensor x = random_tensor({b, t, n, c}, rng);
    const Tensor f = shared ? random_tensor({n, c}, rng) : random_tensor({b, n, c}, rng);
    const Tensor y = ad::depthwise_joint_scale(x, f);
    for (std::size_t bb = 0; bb < b; ++bb)
      for (std::size_t tt = 0; tt < t; ++tt)
        for (std::size_t j = 0; j < n; ++j)
          for (std::size_t k = 0; k < c; ++k) {
            const double fv = shared ? f.at({j, k}) : f.at({bb, j, k});
            tally.observe(y.at({bb, tt, j, k}), x.at({bb, tt, j, k}) * fv);
          }
  }
  return tally;
}

OracleTally oracle_depthwise_temporal_conv(std::mt19937_64& rng, std::size_t trials) {
  OracleTally tally;
  for (std::size_t trial = 0; trial < trials; ++trial, ++tally.instances) {
    const std::size_t b = random_size(rng, 1, 2), t = random_size(rng, 1, 9), n = random_size(rng, 1, 4),
                      c = random_size(rng, 1, 3);
    const std::size_t k = 2 * random_size(rng, 0, 3) + 1;
    const std::size_t stride = random_size(rng, 1, 3);
    const bool shared = trial % 2 == 1;
    const Tensor x = random_tensor({b, t, n, c}, rng);
    const Tensor f = shared ? random_tensor({k, c}, rng) : random_tensor({b, k, n, c}, rng);
    const Tensor y = ad::depthwise_temporal_conv(x, f, stride);
    const std::size_t t_out = (t + stride - 1) / stride;
    if (y.shape() != ad::Shape{b, t_out, n, c}) return {0, INFINITY};
    const long pad = static_cast<long>(k / 2);
    for (std::size_t bb = 0; bb < b; ++bb)
      for (std::size_t to = 0; to < t_out; ++to)
        for (std::size_t j = 0; j < n; ++j)
          for (std::size_t ch = 0; ch < c; ++ch) {
            double acc = 0.0;
            for (std::size_t kk = 0; kk < k; ++kk) {
              const long src = static_cast<long>(to * stride + kk) - pad;
              if (src < 0 || src >= static_cast<long>(t)) continue;
              const double fv = shared ? f.at({kk, ch}) : f.at({bb, kk, j, ch});
              acc += fv * x.at({bb, static_cast<std::size_t>(src), j, ch});
            }
            tally.observe(y.at({bb, to, j, ch}), acc);
          }
  }
  return tally;
}

OracleTally oracle_conv1x1(std::mt19937_64& rng, std::size_t trials) {
  OracleTally tally;
  for (std::size_t trial = 0; trial < trials; ++trial, ++tally.instances) {
    const std::size_t b = random_size(rng, 1, 3), t = random_size(rng, 1, 5), n = random_size(rng, 1, 5),
                      c = random_size(rng, 1, 6), c2 = random_size(rng, 1, 6);
    const Tensor x = random_tensor({b, t, n, c}, rng);
    const Tensor w = random_tensor({c, c2}, rng);
    const Tensor y = ad::conv1x1(x, w);
    for (std::size_t bb = 0; bb < b; ++bb)
      for (std::size_t tt = 0; tt < t; ++tt)
        for (std::size_t j = 0; j < n; ++j)
          for (std::size_t o = 0; o < c2; ++o) {
            double acc = 0.0;
            for (std::size_t i = 0; i < c; ++i) acc += x.at({bb, tt, j, i}) * w.at({i, o});
            tally.observe(y.at({bb, tt, j, o}), acc);
          }
  }
  return tally;
}

OracleTally oracle_jrpp(std::mt19937_64& rng, std::size_t trials) {
  OracleTally tally;
  const graph::SkeletonSpec specs[] = {graph::build_skeleton("coco17"), graph::build_skeleton("body18")};
  for (std::size_t trial = 0; trial < trials; ++trial, ++tally.instances) {
    const auto& spec = specs[trial % 2];
    const std::size_t n = spec.joint_count;
    const std::size_t b = random_size(rng, 1, 2), t = random_size(rng, 1, 6), c = random_size(rng, 1, 4);
    const Tensor x = random_tensor({b, t, n, c}, rng, -3.0, 3.0);
    const Tensor y = net::jrpp_map(x, net::pyramid_weights(spec));
    for (std::size_t bb = 0; bb < b; ++bb)
      for (std::size_t ch = 0; ch < c; ++ch) {
        std::vector<double> agg(n);
        for (std::size_t j = 0; j < n; ++j) {
          double mean = 0.0, mx = -INFINITY;
          for (std::size_t tt = 0; tt < t; ++tt) {
            mean += x.at({bb, tt, j, ch});
            mx = std::max(mx, x.at({bb, tt, j, ch}));
          }
          agg[j] = mean / static_cast<double>(t) + mx;
        }
        // Scale 1 is the whole body; every scale averages its group means.
        double body = 0.0;
        for (double a : agg) body += a;
        tally.observe(y.at({bb, 0, ch}), body / static_cast<double>(n));
        for (std::size_t s = 0; s < spec.pyramid.size(); ++s) {
          double scale = 0.0;
          for (const auto& group : spec.pyramid[s]) {
            double g = 0.0;
            for (std::size_t j : group) g += agg[j];
            scale += g / static_cast<double>(group.size());
          }
          tally.observe(y.at({bb, s, ch}), scale / static_cast<double>(spec.pyramid[s].size()));
        }
      }
  }
  return tally;
}

double row_distance(const Tensor& e, std::size_t i, std::size_t j, std::size_t r) {
  double sq = 0.0;
  for (std::size_t k = 0; k < e.dim(2); ++k) sq += std::pow(e.at({i, r, k}) - e.at({j, r, k}), 2);
  return std::sqrt(sq + 1e-12);
}

OracleTally oracle_triplet(std::mt19937_64& rng, std::size_t trials) {
  OracleTally tally;
  for (std::size_t trial = 0; trial < trials; ++trial, ++tally.instances) {
    const std::size_t p = random_size(rng, 2, 4), k = random_size(rng, 2, 3), rows = random_size(rng, 1, 3),
                      d = random_size(rng, 1, 5);
    std::vector<std::size_t> labels;
    for (std::size_t s = 0; s < p; ++s)
      for (std::size_t i = 0; i < k; ++i) labels.push_back(s);
    std::shuffle(labels.begin(), labels.end(), rng);
    const Tensor e = random_tensor({labels.size(), rows, d}, rng);
    const double margin = std::uniform_real_distribution<double>(0.05, 0.95)(rng);
    double total = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      double acc = 0.0;
      std::size_t count = 0;
      for (std::size_t a = 0; a < labels.size(); ++a)
        for (std::size_t pp = 0; pp < labels.size(); ++pp)
          for (std::size_t nn = 0; nn < labels.size(); ++nn) {
            if (pp == a || labels[pp] != labels[a] || labels[nn] == labels[a]) continue;
            acc += std::max(0.0, row_distance(e, a, pp, r) - row_distance(e, a, nn, r) + margin);
            ++count;
          }
      total += acc / static_cast<double>(count);
    }
    tally.observe(obj::triplet_loss(e, labels, margin).value.item(), total / static_cast<double>(rows));
  }
  return tally;
}

OracleTally oracle_view_ce(std::mt19937_64& rng, std::size_t trials) {
  OracleTally tally;
  for (std::size_t trial = 0; trial < trials; ++trial, ++tally.instances) {
    const std::size_t b = random_size(rng, 1, 6), k = random_size(rng, 2, 11);
    const Tensor logits = random_tensor({b, k}, rng, -5.0, 5.0);
    std::vector<std::size_t> labels;
    for (std::size_t i = 0; i < b; ++i) labels.push_back(random_size(rng, 0, k - 1));
    double acc = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
      double z = 0.0;
      for (std::size_t v = 0; v < k; ++v) z += std::exp(logits.at({i, v}));
      acc += -std::log(std::exp(logits.at({i, labels[i]})) / z);
    }
    tally.observe(obj::view_ce_loss(logits, labels).item(), acc / static_cast<double>(b));
  }
  return tally;
}

OracleTally oracle_g2_mixture(std::mt19937_64& rng, std::size_t trials) {
  OracleTally tally;
  for (std::size_t trial = 0; trial < trials; ++trial, ++tally.instances) {
    const std::size_t views = random_size(rng, 2, 6), ks = random_size(rng, 1, 3), n = random_size(rng, 2, 5),
                      b = random_size(rng, 1, 3);
    std::vector<Tensor> set;
    for (std::size_t v = 0; v < views; ++v) set.push_back(random_tensor({ks, n, n}, rng));
    const Tensor fixed = random_tensor({ks, n, n}, rng);
    const auto pred = vatl::make_prediction(random_tensor({b, views}, rng, -3.0, 3.0));
    const auto c = vatl::compose_topology(pred, set, fixed, {0.5, 0.5, 1.0});
    const std::size_t elems = ks * n * n;
    for (std::size_t bb = 0; bb < b; ++bb) {
      double z = 0.0;
      for (std::size_t v = 0; v < views; ++v) z += std::exp(pred.logits.at({bb, v}));
      for (std::size_t e = 0; e < elems; ++e) {
        double mix = 0.0;
        for (std::size_t v = 0; v < views; ++v) mix += std::exp(pred.logits.at({bb, v})) / z * set[v].values()[e];
        tally.observe(c.g2.values()[bb * elems + e], mix);
      }
    }
  }
  return tally;
}

Outcome oracle_equivalence() {
  std::mt19937_64 rng(2024);
  const std::size_t trials = 120;
  const std::pair<const char*, std::function<OracleTally(std::mt19937_64&, std::size_t)>> cases[] = {
      {"depthwise_joint_scale", oracle_depthwise_joint_scale},
      {"depthwise_temporal_conv", oracle_depthwise_temporal_conv},
      {"conv1x1", oracle_conv1x1},
      {"jrpp pyramid", oracle_jrpp},
      {"triplet", oracle_triplet},
      {"view CE", oracle_view_ce},
      {"G_2 mixture", oracle_g2_mixture},
  };
  bool pass = true;
  std::ostringstream d;
  for (const auto& [name, run] : cases) {
    const auto tally = run(rng, trials);
    const bool ok = tally.instances >= 100 && tally.worst < 1e-10;
    pass = pass && ok;
    d << name << " " << tally.instances << "x max|d|=" << std::scientific << std::setprecision(1) << tally.worst
      << (ok ? "" : " (FAIL)") << "; ";
  }
  return {pass, d.str()};
}

// ------------------------------------------------------------------ 3

Outcome complexity() {
  const auto config = net::NetworkConfig::casia();
  struct Row {
    net::Variant variant;
    double params_m;
    double gflops;
  };
  const Row rows[] = {{net::Variant::baseline, 2.05, 0.68},
                      {net::Variant::jsfl_only, 1.07, 0.30},
                      {net::Variant::cag_joint, 1.17, 0.38},
                      {net::Variant::cag_two_stream, 2.34, 0.75}};
  bool pass = true;
  std::ostringstream d;
  for (const auto& r : rows) {
    const double params = static_cast<double>(net::count_params(config, r.variant)) / 1e6;
    const double flops = net::estimate_flops(config, r.variant, config.frames);
    const double dp = params / r.params_m - 1.0;
    const double df = flops / r.gflops - 1.0;
    const bool ok = std::abs(dp) <= 0.20 && std::abs(df) <= 0.25;
    pass = pass && ok;
    d << net::to_string(r.variant) << " " << fmt(params, 2) << "M (" << signed_percent(dp) << ") " << fmt(flops, 3)
      << "G (" << signed_percent(df) << ")" << (ok ? "" : " FAIL") << "; ";
  }
  return {pass, d.str()};
}

// ------------------------------------------------------------------ 4

Outcome desk_learning() {
  const auto start = Clock::now();
  const auto spec = graph::build_skeleton("coco17");
  data::SynthCorpusOptions corpus_options;
  corpus_options.subjects = 8;
  corpus_options.sequences = 4;
  corpus_options.seed = 7;
  corpus_options.walker.views = 11;
  const auto records = data::synthetic_corpus(spec, corpus_options);

  auto config = train::RunConfig::desk();
  config.epochs = 300;
  train::Trainer trainer(config, data::Corpus(records), records);
  const auto summary = trainer.run(nullptr, false, [&](const train::EpochMetrics& m) {
    if (!m.evaluation) return;
    std::cerr << "  [4] epoch " << m.epoch << " loss " << fmt(m.loss) << " rank-1 "
              << fmt(100 * m.evaluation->rank1.overall, 1) << "% pooled " << fmt(100 * m.evaluation->rank1.pooled, 1)
              << "% view-acc " << fmt(100 * m.evaluation->view_accuracy, 1) << "% (" << fmt(seconds_since(start), 0)
              << " s)\n";
  });
  const double elapsed = seconds_since(start);
  const auto& e = *summary.last.evaluation;
  const bool learned = e.rank1.overall == 1.0 && e.rank1.pooled == 1.0 && e.view_accuracy >= 0.95;
  std::ostringstream d;
  d << records.size() << " sequences, " << summary.epochs_run << " epochs, rank-1 " << fmt(100 * e.rank1.overall, 2)
    << "% (pooled " << fmt(100 * e.rank1.pooled, 2) << "%), view top-1 " << fmt(100 * e.view_accuracy, 2) << "%, "
    << fmt(elapsed / 60.0, 1) << " min";
  return {learned && summary.epochs_run <= 300 && elapsed < 15 * 60.0, d.str()};
}

// ------------------------------------------------------------------ 5

net::NetworkConfig small_config(net::Variant variant) {
  net::NetworkConfig c;
  c.skeleton = "coco17";
  c.frames = 12;
  c.embed_width = 8;
  c.block_widths = {8, 16};
  c.block_strides = {1, 2};
  c.head_width = 16;
  c.views = 3;
  c.vatl_width = 8;
  c.embed_kernel = 3;
  c.jsfl.pooled_frames = 6;
  c.jsfl.reduction = 4;
  c.jsfl.temporal_kernel = 3;
  c.variant = variant;
  return c;
}

std::vector<data::SequenceRecord> small_corpus() {
  data::SynthCorpusOptions options;
  options.subjects = 4;
  options.sequences = 4;
  options.seed = 11;
  options.walker.views = 3;
  options.walker.frames = 20;
  return data::synthetic_corpus(graph::build_skeleton("coco17"), options);
}

train::RunConfig small_run(net::NetworkConfig network) {
  train::RunConfig c;
  c.network = std::move(network);
  c.batch = {4, 2};
  c.epochs = 2;
  c.optimizer.warmup_epochs = 1;
  c.eval.every = 1;
  c.eval.batch_size = 16;
  c.seed = 3;
  return c;
}

Outcome ablation_harness() {
  const auto records = small_corpus();
  std::vector<double> losses;
  std::ostringstream d;
  bool pass = true;
  d << "masks (g1 g2 g3):";
  for (int mask = 1; mask < 8; ++mask) {
    auto network = small_config(net::Variant::cag_joint);
    const std::array<double, 3> full = {0.5, 0.5, 1.0};
    for (int i = 0; i < 3; ++i) network.topology_weights[i] = (mask >> (2 - i) & 1) ? full[i] : 0.0;
    try {
      train::Trainer trainer(small_run(network), data::Corpus(records), {});
      const auto m = trainer.train_epoch();
      losses.push_back(m.loss);
      pass = pass && std::isfinite(m.loss);
      d << " " << (mask >> 2 & 1) << (mask >> 1 & 1) << (mask & 1) << "=" << fmt(m.loss, 6);
    } catch (const std::exception& e) {
      pass = false;
      d << " " << mask << " threw: " << e.what();
    }
  }
  auto sorted = losses;
  std::sort(sorted.begin(), sorted.end());
  const bool distinct = std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end() && sorted.size() == 7;
  d << (distinct ? " (all distinct)" : " (NOT distinct)") << ";";
  for (auto mode : {net::JsflMode::non_adaptive, net::JsflMode::global}) {
    auto network = small_config(net::Variant::jsfl_only);
    network.jsfl.mode = mode;
    try {
      train::Trainer trainer(small_run(network), data::Corpus(records), records);
      const auto m = trainer.train_epoch();
      trainer.evaluate();
      pass = pass && std::isfinite(m.loss);
      d << " jsfl " << net::to_string(mode) << " loss " << fmt(m.loss, 4);
    } catch (const std::exception& e) {
      pass = false;
      d << " jsfl " << net::to_string(mode) << " threw: " << e.what();
    }
  }
  return {pass && distinct, d.str()};
}

// ------------------------------------------------------------------ 6

Outcome protocol_correctness() {
  std::mt19937_64 rng(6);
  std::size_t tables = 0, undefined_cells = 0, mismatches = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto [gallery, probe] = cag::testing::toy_tables(rng, 30, 4, 3);
    if (gallery.empty() || probe.empty()) continue;
    ++tables;
    for (bool exclude : {true, false}) {
      const auto got = eval::rank1(gallery, probe, exclude, 4);
      const auto want = cag::testing::rank1_oracle(gallery, probe, exclude, 4);
      for (std::size_t pv = 0; pv < 4; ++pv) {
        for (std::size_t gv = 0; gv < 4; ++gv) {
          const auto it = want.cells.find({pv, gv});
          const bool defined = it != want.cells.end();
          undefined_cells += !defined;
          if (got.cell_defined(pv, gv) != defined) {
            ++mismatches;
            continue;
          }
          if (defined && (got.hits[pv * 4 + gv] != it->second.first || got.probes[pv * 4 + gv] != it->second.second)) {
            ++mismatches;
          }
        }
        const auto row = want.per_view.find(pv);
        if (row == want.per_view.end() ? !std::isnan(got.per_view[pv]) : got.per_view[pv] != row->second) {
          ++mismatches;
        }
      }
      if (std::isnan(want.overall) ? !std::isnan(got.overall) : got.overall != want.overall) ++mismatches;
    }
  }
  std::ostringstream d;
  d << tables << " random 30-record tables x {exclude, include}, " << undefined_cells << " undefined cells, "
    << mismatches << " mismatches";
  return {tables >= 100 && undefined_cells > 0 && mismatches == 0, d.str()};
}

// ------------------------------------------------------------------ 7

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int run(const std::string& command) {
  const int status = std::system((command + " >/dev/null 2>&1").c_str());
  return status == -1 ? -1 : WEXITSTATUS(status);
}

Outcome determinism(const std::string& cli) {
  if (cli.empty() || !std::filesystem::exists(cli)) return {false, "cag executable not found: '" + cli + "'"};
  const auto dir = workdir() / "determinism";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const auto corpus = dir / "corpus";
  if (run(cli + " synth --subjects 4 --views 3 --seqs 4 --frames 20 --seed 5 --out " + corpus.string()) != 0) {
    return {false, "synth failed"};
  }
  auto config = small_run(small_config(net::Variant::cag_two_stream));
  config.epochs = 3;
  config.eval.every = 2;
  config.corpus = corpus.string();
  std::ofstream(dir / "run.json") << nlohmann::json(config).dump(2);

  std::string metrics[2];
  for (int i = 0; i < 2; ++i) {
    const auto tag = std::to_string(i);
    const int code = run(cli + " train --config " + (dir / "run.json").string() + " --metrics " +
                         (dir / ("metrics" + tag + ".jsonl")).string() + " --checkpoint " +
                         (dir / ("model" + tag + ".json")).string());
    if (code != 0) return {false, "train run " + tag + " exited with " + std::to_string(code)};
    metrics[i] = slurp(dir / ("metrics" + tag + ".jsonl"));
  }
  const bool same_metrics = !metrics[0].empty() && metrics[0] == metrics[1];
  const bool same_checkpoints = slurp(dir / "model0.json") == slurp(dir / "model1.json");

  // Reload, re-save and evaluate in process; compare with the CLI and the run's own log.
  const auto ck = train::load_checkpoint(dir / "model0.json");
  train::save_checkpoint(dir / "resaved.json", *ck.model, ck.epoch);
  const bool resave_identical = slurp(dir / "resaved.json") == slurp(dir / "model0.json");
  const auto records = data::load_corpus(corpus, graph::build_skeleton("coco17"), 3).records();
  const auto reloaded = eval::evaluate_model(*ck.model, records, config.eval.gallery_conditions, true, 16);
  std::string last_line;
  std::istringstream lines(metrics[0]);
  for (std::string line; std::getline(lines, line);) last_line = line;
  const auto logged = nlohmann::json::parse(last_line);
  const bool matches_log = logged.at("rank1").get<double>() == reloaded.rank1.overall &&
                           logged.at("view_acc").get<double>() == reloaded.view_accuracy;

  std::string csv[2];
  for (int i = 0; i < 2; ++i) {
    const auto out = dir / ("eval" + std::to_string(i) + ".csv");
    if (run(cli + " eval --checkpoint " + (dir / ("model" + std::to_string(i) + ".json")).string() + " --corpus " +
            corpus.string() + " --batch 16 --csv " + out.string()) != 0) {
      return {false, "eval failed"};
    }
    csv[i] = slurp(out);
  }
  std::ostringstream want_csv;
  eval::write_csv(reloaded.rank1, want_csv);
  const bool same_eval = !csv[0].empty() && csv[0] == csv[1] && csv[0] == want_csv.str();

  std::ostringstream d;
  d << "metrics identical: " << (same_metrics ? "yes" : "no") << ", checkpoints identical: "
    << (same_checkpoints ? "yes" : "no") << ", reload+resave identical: " << (resave_identical ? "yes" : "no")
    << ", reloaded eval matches log: " << (matches_log ? "yes" : "no")
    << ", CLI eval identical: " << (same_eval ? "yes" : "no");
  return {same_metrics && same_checkpoints && resave_identical && matches_log && same_eval, d.str()};
}

// ------------------------------------------------------------------ 8

Outcome topology_invariants() {
  std::mt19937_64 rng(8);
  std::size_t violations = 0, trials = 0, one_hot_bad = 0, doubled_bad = 0, corr_bad = 0;
  for (int trial = 0; trial < 100; ++trial, ++trials) {
    const std::size_t views = random_size(rng, 2, 11), ks = random_size(rng, 1, 3), n = random_size(rng, 2, 17),
                      b = random_size(rng, 1, 3);
    std::vector<Tensor> set;
    for (std::size_t v = 0; v < views; ++v) set.push_back(random_tensor({ks, n, n}, rng));
    const Tensor fixed = random_tensor({ks, n, n}, rng);
    const std::size_t elems = ks * n * n;

    // One-hot prediction: the mixture is exactly the selected member.
    std::vector<double> logits(b * views, -1e4);
    std::vector<std::size_t> chosen;
    for (std::size_t bb = 0; bb < b; ++bb) {
      chosen.push_back(random_size(rng, 0, views - 1));
      logits[bb * views + chosen.back()] = 1e4;
    }
    const auto one_hot = vatl::compose_topology(vatl::make_prediction(Tensor::from({b, views}, logits)), set, fixed,
                                                {0.5, 0.5, 1.0});
    for (std::size_t bb = 0; bb < b; ++bb)
      for (std::size_t e = 0; e < elems; ++e) {
        one_hot_bad += one_hot.g2.values()[bb * elems + e] != one_hot.g1.values()[bb * elems + e];
        one_hot_bad += one_hot.g1.values()[bb * elems + e] != set[chosen[bb]].values()[e];
      }

    // Equal members and fixed graph: G_VA = 2G at (1/2, 1/2, 1).
    const std::vector<Tensor> equal(views, fixed);
    const auto doubled = vatl::compose_topology(vatl::make_prediction(random_tensor({b, views}, rng, -4.0, 4.0)),
                                                equal, fixed, {0.5, 0.5, 1.0});
    for (std::size_t bb = 0; bb < b; ++bb)
      for (std::size_t e = 0; e < elems; ++e) {
        doubled_bad += doubled.composed.values()[bb * elems + e] != 2.0 * fixed.values()[e];
      }

    // Correlation matrix: symmetric with a zero diagonal.
    const Tensor m = vatl::topology_correlation_matrix(set);
    for (std::size_t i = 0; i < views; ++i) {
      corr_bad += m.at({i, i}) != 0.0;
      for (std::size_t j = 0; j < views; ++j) corr_bad += m.at({i, j}) != m.at({j, i});
    }
  }
  violations = one_hot_bad + doubled_bad + corr_bad;
  std::ostringstream d;
  d << trials << " random topology sets; violations: one-hot " << one_hot_bad << ", equal members " << doubled_bad
    << ", correlation " << corr_bad;
  return {violations == 0, d.str()};
}

}  // namespace

int main(int argc, char** argv) {
  std::string cli;
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--only" && i + 1 < argc) {
      only = std::stoi(argv[++i]);
    } else {
      cli = arg;
    }
  }

  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"gradient integrity", gradient_integrity},
      {"oracle equivalence", oracle_equivalence},
      {"complexity reproduction", complexity},
      {"desk-scale learning", desk_learning},
      {"ablation harness", ablation_harness},
      {"protocol correctness", protocol_correctness},
      {"determinism", [&] { return determinism(cli); }},
      {"topology invariants", topology_invariants},
  };
  int failures = 0;
  for (int i = 0; i < 8; ++i) {
    if (only != 0 && only != i + 1) continue;
    Outcome outcome;
    try {
      outcome = criteria[i].second();
    } catch (const std::exception& e) {
      outcome = {false, std::string("threw: ") + e.what()};
    }
    failures += !outcome.pass;
    std::cout << (outcome.pass ? "PASS" : "FAIL") << "  criterion " << i + 1 << " (" << criteria[i].first
              << "): " << outcome.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
