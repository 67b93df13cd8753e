#include <gtest/gtest.h>

#include <random>

#include "cag/autodiff/gradcheck.hpp"
#include "cag/autodiff/ops.hpp"
#include "cag/autodiff/tape.hpp"
#include "cag/jsfl/jsfl.hpp"
#include "test_util.hpp"

using namespace cag;
using ad::Tensor;
using jsfl::FilterGenerator;
using cag::testing::random_tensor;

namespace {

struct Generator {
  net::ParameterSet params;
  net::Rng rng{42};
  FilterGenerator gen;

  Generator(const net::JsflConfig& cfg, std::size_t joints, std::size_t c, std::size_t c_out, std::size_t tp)
      : gen(cfg, joints, c, c_out, tp, params, "gen", rng) {}

  void zero_biases() {
    for (auto& p : params.params()) {
      const auto& n = p.name;
      const bool bias = n.find("bias") != std::string::npos || n.ends_with(".b3") || n.ends_with(".b4") ||
                        n.ends_with(".b5") || n.ends_with(".b6");
      if (bias) {
        Tensor t = p.tensor;
        auto v = t.mutable_values();
        std::fill(v.begin(), v.end(), 0.0);
      }
    }
  }
};

net::JsflConfig small_config() {
  net::JsflConfig c;
  c.pooled_frames = 4;
  c.reduction = 2;
  c.temporal_kernel = 3;
  return c;
}

Tensor permute_joints(const Tensor& x, std::size_t axis, std::size_t a, std::size_t b) {
  std::vector<std::size_t> order(x.dim(static_cast<int>(axis)));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::swap(order[a], order[b]);
  return ad::index_select(x, static_cast<int>(axis), order);
}

void expect_close(const Tensor& a, const Tensor& b, double tol) {
  ASSERT_EQ(a.shape(), b.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a.values()[i], b.values()[i], tol) << "index " << i;
}

}  // namespace

TEST(FilterGenerator, FirstBlockShapes) {
  // First block of the full-size network: C = 64 in, C' = 128 out.
  Generator g(net::JsflConfig{}, 17, 64, 128, 15);
  std::mt19937_64 rng(1);
  const auto filters = g.gen.generate(random_tensor({2, 15, 17, 64}, rng), ad::Mode::train);
  EXPECT_EQ(filters.spatial.shape(), (ad::Shape{2, 3, 17, 64}));
  EXPECT_EQ(filters.temporal.shape(), (ad::Shape{2, 9, 17, 128}));

  Generator same_width(net::JsflConfig{}, 17, 64, 64, 15);
  const auto square = same_width.gen.generate(random_tensor({1, 15, 17, 64}, rng), ad::Mode::eval);
  EXPECT_EQ(ad::select(square.spatial, 0, 0).shape(), (ad::Shape{3, 17, 64}));
  EXPECT_EQ(ad::select(square.temporal, 0, 0).shape(), (ad::Shape{9, 17, 64}));
}

TEST(FilterGenerator, RejectsMismatchedInputs) {
  EXPECT_THROW(Generator(small_config(), 5, 7, 8, 4), std::invalid_argument);
  Generator g(small_config(), 5, 4, 8, 4);
  EXPECT_THROW(g.gen.spatial(Tensor::zeros({1, 3, 5, 4}), ad::Mode::eval), ad::ShapeError);
  EXPECT_THROW(g.gen.temporal(Tensor::zeros({1, 4, 5, 6}), ad::Mode::eval), ad::ShapeError);
}

TEST(FilterGenerator, ZeroInputZeroBiasesGivesZeroFilters) {
  for (ad::Mode mode : {ad::Mode::train, ad::Mode::eval}) {
    Generator g(small_config(), 5, 4, 8, 4);
    g.zero_biases();
    const auto filters = g.gen.generate(Tensor::zeros({2, 4, 5, 4}), mode);
    for (double v : filters.spatial.values()) EXPECT_EQ(v, 0.0);
    for (double v : filters.temporal.values()) EXPECT_EQ(v, 0.0);
  }
}

TEST(FilterGenerator, DistinctInputsGiveDistinctFilters) {
  Generator g(net::JsflConfig{}, 17, 64, 128, 15);
  std::mt19937_64 rng(2);
  const Tensor a = random_tensor({1, 15, 17, 64}, rng);
  const Tensor b = random_tensor({1, 15, 17, 64}, rng);
  const auto fa = g.gen.generate(a, ad::Mode::eval);
  const auto fb = g.gen.generate(b, ad::Mode::eval);
  double diff_s = 0.0, diff_t = 0.0;
  for (std::size_t i = 0; i < fa.spatial.numel(); ++i) diff_s += std::abs(fa.spatial.values()[i] - fb.spatial.values()[i]);
  for (std::size_t i = 0; i < fa.temporal.numel(); ++i)
    diff_t += std::abs(fa.temporal.values()[i] - fb.temporal.values()[i]);
  EXPECT_GT(diff_s, 1e-6);
  EXPECT_GT(diff_t, 1e-6);
}

TEST(FilterGenerator, EvalModeIsDeterministic) {
  Generator g(small_config(), 5, 4, 8, 4);
  std::mt19937_64 rng(3);
  const Tensor x = random_tensor({3, 4, 5, 4}, rng);
  const auto a = g.gen.generate(x, ad::Mode::eval);
  const auto b = g.gen.generate(x, ad::Mode::eval);
  expect_close(a.spatial, b.spatial, 0.0);
  expect_close(a.temporal, b.temporal, 0.0);
}

TEST(FilterGenerator, JointPermutationEquivariance) {
  std::mt19937_64 rng(4);
  for (ad::Mode mode : {ad::Mode::train, ad::Mode::eval}) {
    Generator g(small_config(), 5, 4, 8, 4);
    const Tensor x = random_tensor({2, 4, 5, 4}, rng);
    const auto base = g.gen.generate(x, mode);
    const auto swapped = g.gen.generate(permute_joints(x, 2, 0, 3), mode);
    expect_close(swapped.temporal, permute_joints(base.temporal, 2, 0, 3), 1e-12);
    expect_close(swapped.spatial, permute_joints(base.spatial, 2, 0, 3), 1e-12);
  }
}

TEST(FilterGenerator, GlobalModeSharesFiltersAcrossJoints) {
  auto cfg = small_config();
  cfg.mode = net::JsflMode::global;
  Generator g(cfg, 5, 4, 8, 4);
  std::mt19937_64 rng(5);
  const auto f = g.gen.generate(random_tensor({2, 4, 5, 4}, rng), ad::Mode::train);
  EXPECT_EQ(f.spatial.shape(), (ad::Shape{2, 3, 5, 4}));
  EXPECT_EQ(f.temporal.shape(), (ad::Shape{2, 3, 5, 8}));
  for (std::size_t j = 1; j < 5; ++j) {
    expect_close(ad::select(f.spatial, 2, j), ad::select(f.spatial, 2, 0), 0.0);
    expect_close(ad::select(f.temporal, 2, j), ad::select(f.temporal, 2, 0), 0.0);
  }
}

TEST(FilterGenerator, NonAdaptiveModeIgnoresInput) {
  auto cfg = small_config();
  cfg.mode = net::JsflMode::non_adaptive;
  Generator g(cfg, 5, 4, 8, 4);
  std::mt19937_64 rng(6);
  const auto a = g.gen.generate(random_tensor({2, 4, 5, 4}, rng), ad::Mode::train);
  const auto b = g.gen.generate(random_tensor({2, 4, 5, 4}, rng), ad::Mode::train);
  expect_close(a.spatial, b.spatial, 0.0);
  expect_close(a.temporal, b.temporal, 0.0);
  EXPECT_EQ(g.params.params().size(), 2u);
}

TEST(FilterGenerator, FewerParamsThanDenseConvolution) {
  // Generator plus the two 1x1 mixes of a block stay below a dense K_S graph
  // conv plus a K_T temporal conv at the same widths.
  const std::size_t c = 128, c_out = 128;
  Generator g(net::JsflConfig{}, 17, c, c_out, 15);
  const std::size_t adaptive = g.params.scalar_count() + c * c_out + c_out * c_out;
  const std::size_t dense = 3 * c * c_out + 9 * c_out * c_out;
  EXPECT_LT(adaptive, dense);
}

class GeneratorGradients : public ::testing::TestWithParam<net::JsflMode> {};

TEST_P(GeneratorGradients, FiniteDifferences) {
  auto cfg = small_config();
  cfg.mode = GetParam();
  Generator g(cfg, 5, 4, 6, 4);
  std::mt19937_64 rng(7);
  const Tensor x = random_tensor({2, 4, 5, 4}, rng);
  const Tensor rs = random_tensor({2, 3, 5, 4}, rng);
  const Tensor rt = random_tensor({2, 3, 5, 6}, rng);
  std::vector<Tensor> params{x};
  for (const auto& p : g.params.params()) params.push_back(p.tensor);
  // Biases ahead of a train-mode BN have exactly zero gradient, so the
  // floor has to sit above the finite-difference rounding noise.
  const auto report = ad::finite_diff_check(
      [&] {
        const auto f = g.gen.generate(x, ad::Mode::train);
        return ad::add(ad::sum(ad::mul(f.spatial, rs)), ad::sum(ad::mul(f.temporal, rt)));
      },
      params, {.h = 1e-5, .tol = 1e-4, .floor = 1e-5});
  EXPECT_TRUE(report.passed) << ad::describe(report);
}

INSTANTIATE_TEST_SUITE_P(Modes, GeneratorGradients,
                         ::testing::Values(net::JsflMode::adaptive, net::JsflMode::global,
                                           net::JsflMode::non_adaptive));
