#include "cag/check/suite.hpp"

#include <random>

#include "cag/autodiff/ops.hpp"
#include "cag/graph/skeleton.hpp"
#include "cag/network/model.hpp"
#include "cag/objectives/losses.hpp"

namespace cag::check {

using ad::Tensor;

bool SuiteResult::passed() const {
  for (const auto& c : cases)
    if (!c.report.passed) return false;
  return !cases.empty();
}

std::size_t SuiteResult::checked() const {
  std::size_t n = 0;
  for (const auto& c : cases) n += c.report.checked;
  return n;
}

namespace {

Tensor random_tensor(ad::Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> values(ad::shape_numel(shape));
  for (double& v : values) v = dist(rng);
  return Tensor::from(std::move(shape), std::move(values), true);
}

// Fixed random projection to a scalar so every output coordinate matters.
Tensor weighted_sum(const Tensor& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> w(y.numel());
  for (double& v : w) v = dist(rng);
  return ad::sum(ad::mul(y, Tensor::from(y.shape(), std::move(w))));
}

class Runner {
 public:
  explicit Runner(const ad::GradCheckOptions& options) : options_(options) {}

  void add(std::string name, const std::function<Tensor()>& loss, const std::vector<Tensor>& params,
           double floor = 0.0) {
    auto options = options_;
    if (floor > options.floor) options.floor = floor;
    result.cases.push_back({std::move(name), ad::finite_diff_check(loss, params, options)});
  }

  SuiteResult result;

 private:
  ad::GradCheckOptions options_;
};

void op_cases(Runner& run) {
  using namespace ad;
  std::mt19937_64 rng(101);
  const std::size_t b = 2, t = 5, n = 3, c = 3, c2 = 2;
  Tensor x = random_tensor({b, t, n, c}, rng);
  Tensor y = random_tensor({1, t, 1, c}, rng);
  Tensor w = random_tensor({c, c2}, rng);
  Tensor bias = random_tensor({c2}, rng);
  Tensor f = random_tensor({b, n, c}, rng);
  Tensor ft = random_tensor({b, 3, n, c}, rng);
  Tensor fk = random_tensor({3, c}, rng);
  Tensor wt = random_tensor({3, c, c2}, rng);
  Tensor adj = random_tensor({n, n}, rng);

  run.add("add", [&] { return weighted_sum(add(x, y), 1); }, {x, y});
  run.add("sub", [&] { return weighted_sum(sub(x, y), 2); }, {x, y});
  run.add("mul", [&] { return weighted_sum(mul(x, y), 3); }, {x, y});
  run.add("scale", [&] { return weighted_sum(scale(x, -1.7), 4); }, {x});
  run.add("broadcast_to", [&] { return weighted_sum(broadcast_to(y, {b, t, n, c}), 5); }, {y});
  run.add("mean", [&] { return mean(mul(x, x)); }, {x});
  run.add("reshape", [&] { return weighted_sum(reshape(x, {b * t, n * c}), 6); }, {x});
  run.add("permute", [&] { return weighted_sum(permute(x, {0, 3, 1, 2}), 7); }, {x});
  run.add("select", [&] { return weighted_sum(select(x, 1, 2), 8); }, {x});
  run.add("stack", [&] { return weighted_sum(stack({x, mul(x, x)}, 1), 9); }, {x});
  run.add("concat", [&] { return weighted_sum(concat({x, mul(x, x)}, 3), 10); }, {x});
  run.add("index_select", [&] { return weighted_sum(index_select(x, 2, {2, 0, 2}), 11); }, {x});
  run.add("matmul", [&] { return weighted_sum(matmul(adj, x), 12); }, {adj, x});
  run.add("conv1x1", [&] { return weighted_sum(conv1x1(x, w), 13); }, {x, w});
  run.add("fully_connected", [&] { return weighted_sum(fully_connected(x, w, bias), 14); }, {x, w, bias});
  run.add("depthwise_joint_scale", [&] { return weighted_sum(depthwise_joint_scale(x, f), 15); }, {x, f});
  for (std::size_t stride : {1u, 2u}) {
    const std::string s = "/stride" + std::to_string(stride);
    run.add("depthwise_temporal_conv" + s, [&] { return weighted_sum(depthwise_temporal_conv(x, ft, stride), 16); },
            {x, ft});
    run.add("depthwise_temporal_conv_shared" + s,
            [&] { return weighted_sum(depthwise_temporal_conv(x, fk, stride), 17); }, {x, fk});
    run.add("temporal_conv" + s, [&] { return weighted_sum(temporal_conv(x, wt, bias, stride), 18); }, {x, wt, bias});
    run.add("temporal_subsample" + s, [&] { return weighted_sum(temporal_subsample(x, stride), 19); }, {x});
  }
  BatchNorm bn = BatchNorm::make(c);
  bn.gamma = random_tensor({c}, rng, 0.5, 1.5);
  bn.beta = random_tensor({c}, rng);
  run.add("batch_norm/train", [&] { return weighted_sum(batch_norm(x, 3, bn, Mode::train), 20); },
          {x, bn.gamma, bn.beta});
  run.add("batch_norm/eval", [&] { return weighted_sum(batch_norm(x, 3, bn, Mode::eval), 21); },
          {x, bn.gamma, bn.beta});
  run.add("relu", [&] { return weighted_sum(relu(x), 22); }, {x});
  run.add("softmax", [&] { return weighted_sum(softmax(x, 3), 23); }, {x});
  run.add("adaptive_temporal_pool", [&] { return weighted_sum(adaptive_temporal_pool(x, 2), 24); }, {x});
  run.add("temporal_mean", [&] { return weighted_sum(temporal_mean(x), 25); }, {x});
  run.add("temporal_max", [&] { return weighted_sum(temporal_max(x), 26); }, {x});
  run.add("global_average_pool", [&] { return weighted_sum(global_average_pool(x), 27); }, {x});
}

void loss_cases(Runner& run) {
  std::mt19937_64 rng(202);
  Tensor e = random_tensor({6, 2, 3}, rng);
  const std::vector<std::size_t> labels = {0, 0, 1, 1, 2, 2};
  run.add("triplet_loss", [&] { return obj::triplet_loss(e, labels, 0.2).value; }, {e});
  run.add("circle_loss", [&] { return obj::circle_loss(e, labels, 0.5, 4.0).value; }, {e});
  Tensor logits = random_tensor({6, 4}, rng, -2, 2);
  run.add("view_ce_loss", [&] { return obj::view_ce_loss(logits, {0, 3, 1, 2, 2, 0}); }, {logits});
}

void network_case(Runner& run) {
  net::NetworkConfig config;
  config.skeleton = "tiny";
  config.frames = 8;
  config.embed_width = 4;
  config.block_widths = {8, 8};
  config.block_strides = {1, 2};
  config.head_width = 8;
  config.views = 3;
  config.vatl_width = 4;
  config.embed_kernel = 3;
  config.jsfl.pooled_frames = 4;
  config.jsfl.reduction = 2;
  config.jsfl.temporal_kernel = 3;
  config.variant = net::Variant::cag_two_stream;
  const auto skeleton = graph::build_custom_skeleton(5, {{0, 1}, {1, 2}, {1, 3}, {3, 4}}, 1);
  net::Model model(config, skeleton, 11);

  std::mt19937_64 rng(20);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> values(4 * 8 * 5 * 2);
  for (double& v : values) v = dist(rng);
  const Tensor x = Tensor::from({4, 8, 5, 2}, std::move(values));
  const std::vector<std::size_t> subjects = {0, 0, 1, 1};
  const std::vector<std::size_t> views = {0, 2, 1, 2};
  const obj::LossConfig losses;
  std::vector<Tensor> params;
  for (const auto& p : model.params().params()) params.push_back(p.tensor);
  // Parameters feeding a train-mode batch norm directly have exactly zero
  // gradient; the floor keeps rounding noise there from counting.
  run.add(
      "network/cag-two-stream",
      [&] {
        const auto out = model.forward(x, ad::Mode::train);
        obj::LossParts parts{obj::triplet_loss(out.embedding, subjects, losses.triplet_margin).value,
                             obj::circle_loss(out.embedding, subjects, losses.circle_margin, 8.0).value,
                             obj::view_ce_loss(out.view.logits, views)};
        return obj::total_loss(parts, losses);
      },
      params, 1e-5);
}

}  // namespace

SuiteResult run_gradient_suite(const ad::GradCheckOptions& options) {
  Runner run(options);
  op_cases(run);
  loss_cases(run);
  network_case(run);
  return std::move(run.result);
}

}  // namespace cag::check
