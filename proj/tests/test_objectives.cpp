#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cag/autodiff/gradcheck.hpp"
#include "cag/autodiff/ops.hpp"
#include "cag/objectives/losses.hpp"
#include "test_util.hpp"

using namespace cag::obj;
using cag::ad::Tensor;
using cag::testing::random_tensor;

namespace {

double row_distance(const Tensor& e, std::size_t i, std::size_t j, std::size_t r) {
  const std::size_t d = e.dim(2);
  double sq = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    const double diff = e.at({i, r, k}) - e.at({j, r, k});
    sq += diff * diff;
  }
  return std::sqrt(sq + 1e-12);
}

double triplet_oracle(const Tensor& e, const std::vector<std::size_t>& labels, double margin) {
  const std::size_t b = e.dim(0);
  double total = 0.0;
  for (std::size_t r = 0; r < e.dim(1); ++r) {
    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t a = 0; a < b; ++a)
      for (std::size_t p = 0; p < b; ++p)
        for (std::size_t n = 0; n < b; ++n) {
          if (p == a || labels[p] != labels[a] || labels[n] == labels[a]) continue;
          acc += std::max(0.0, row_distance(e, a, p, r) - row_distance(e, a, n, r) + margin);
          ++count;
        }
    total += acc / static_cast<double>(count);
  }
  return total / static_cast<double>(e.dim(1));
}

double cosine(const Tensor& e, std::size_t i, std::size_t j) {
  const std::size_t len = e.dim(1) * e.dim(2);
  const auto v = e.values();
  double dot = 0.0, ni = 0.0, nj = 0.0;
  for (std::size_t k = 0; k < len; ++k) {
    dot += v[i * len + k] * v[j * len + k];
    ni += v[i * len + k] * v[i * len + k];
    nj += v[j * len + k] * v[j * len + k];
  }
  return dot / (std::sqrt(ni + 1e-12) * std::sqrt(nj + 1e-12));
}

double circle_oracle(const Tensor& e, const std::vector<std::size_t>& labels, double m, double gamma) {
  double sum_n = 0.0, sum_p = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    for (std::size_t j = i + 1; j < labels.size(); ++j) {
      const double s = cosine(e, i, j);
      if (labels[i] == labels[j]) {
        sum_p += std::exp(-gamma * std::max(0.0, 1.0 + m - s) * (s - (1.0 - m)));
      } else {
        sum_n += std::exp(gamma * std::max(0.0, s + m) * (s - m));
      }
    }
  return std::log(1.0 + sum_n * sum_p);
}

const std::vector<std::size_t> kLabels = {0, 0, 1, 1};

}  // namespace

TEST(LossConfig, Validation) {
  EXPECT_NO_THROW(LossConfig{}.validate());
  LossConfig c;
  c.triplet_margin = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.circle_margin = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.lambda_view = -0.1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(TripletLoss, IdenticalEmbeddingsGiveMargin) {
  const Tensor e = Tensor::full({4, 12, 8}, 0.3);
  const auto loss = triplet_loss(e, kLabels, 0.2);
  EXPECT_FALSE(loss.degenerate);
  EXPECT_NEAR(loss.value.item(), 0.2, 1e-12);
}

TEST(TripletLoss, HingeFloor) {
  // Subjects sit at far apart centres with tiny within-subject spread.
  std::vector<double> v;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t r = 0; r < 2; ++r) {
      v.push_back(10.0 * static_cast<double>(kLabels[i]) + 0.01 * static_cast<double>(i));
      v.push_back(0.0);
    }
  const auto loss = triplet_loss(Tensor::from({4, 2, 2}, v), kLabels, 0.2);
  EXPECT_EQ(loss.value.item(), 0.0);
}

TEST(TripletLoss, MatchesTripleLoopOracle) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const std::vector<std::size_t> labels = {0, 0, 1, 1, 2, 0};
    const Tensor e = random_tensor({6, 12, 5}, rng);
    EXPECT_NEAR(triplet_loss(e, labels, 0.2).value.item(), triplet_oracle(e, labels, 0.2), 1e-10);
  }
}

TEST(TripletLoss, DegenerateBatchIsFlagged) {
  const Tensor e = Tensor::full({3, 2, 2}, 1.0);
  const auto one_class = triplet_loss(e, {4, 4, 4}, 0.2);
  EXPECT_TRUE(one_class.degenerate);
  EXPECT_EQ(one_class.value.item(), 0.0);
  const auto singletons = triplet_loss(e, {0, 1, 2}, 0.2);
  EXPECT_TRUE(singletons.degenerate);
  EXPECT_EQ(singletons.value.item(), 0.0);
}

TEST(TripletLoss, TranslationInvariant) {
  std::mt19937_64 rng(11);
  const Tensor e = random_tensor({4, 3, 4}, rng);
  const Tensor shift = random_tensor({1, 1, 4}, rng, -5.0, 5.0);
  const Tensor moved = cag::ad::add(e, shift);
  EXPECT_NEAR(triplet_loss(e, kLabels, 0.2).value.item(), triplet_loss(moved, kLabels, 0.2).value.item(), 1e-10);
}

TEST(TripletLoss, RejectsBadShapes) {
  EXPECT_THROW(triplet_loss(Tensor::zeros({4, 3}), kLabels, 0.2), cag::ad::ShapeError);
  EXPECT_THROW(triplet_loss(Tensor::zeros({3, 2, 2}), kLabels, 0.2), cag::ad::ShapeError);
}

TEST(CircleLoss, MatchesPairwiseOracle) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const std::vector<std::size_t> labels = {0, 1, 0, 1, 2, 2};
    const Tensor e = random_tensor({6, 12, 4}, rng);
    EXPECT_NEAR(circle_loss(e, labels, 0.5, 64.0).value.item(), circle_oracle(e, labels, 0.5, 64.0), 1e-10);
    EXPECT_NEAR(circle_loss(e, labels, 0.25, 2.0).value.item(), circle_oracle(e, labels, 0.25, 2.0), 1e-10);
  }
}

TEST(CircleLoss, SaturatedOptimumIsNearZero) {
  // Positives coincide, negatives point the opposite way: s_p = 1, s_n = -1.
  const Tensor e = Tensor::from({4, 1, 2}, {1, 0, 1, 0, -1, 0, -1, 0});
  const double loss = circle_loss(e, kLabels, 0.5, 64.0).value.item();
  EXPECT_GE(loss, 0.0);
  EXPECT_LT(loss, 1e-5);
}

TEST(CircleLoss, NonNegativeOnRandomBatches) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    EXPECT_GE(circle_loss(random_tensor({4, 2, 3}, rng), kLabels, 0.5, 64.0).value.item(), 0.0);
  }
}

TEST(CircleLoss, DegenerateBatchIsFlagged) {
  const auto loss = circle_loss(Tensor::full({3, 1, 2}, 1.0), {1, 1, 1}, 0.5, 64.0);
  EXPECT_TRUE(loss.degenerate);
  EXPECT_EQ(loss.value.item(), 0.0);
}

TEST(ViewCrossEntropy, UniformLogits) {
  const Tensor logits = Tensor::zeros({3, 11});
  EXPECT_NEAR(view_ce_loss(logits, {0, 5, 10}).item(), std::log(11.0), 1e-12);
}

TEST(ViewCrossEntropy, SaturatesToZero) {
  std::vector<double> v(11, 0.0);
  v[4] = 1000.0;
  EXPECT_LT(view_ce_loss(Tensor::from({1, 11}, v), {4}).item(), 1e-12);
}

TEST(ViewCrossEntropy, MatchesDirectFormula) {
  std::mt19937_64 rng(13);
  const Tensor logits = random_tensor({5, 11}, rng, -3.0, 3.0);
  const std::vector<std::size_t> labels = {0, 3, 10, 7, 3};
  double expected = 0.0;
  for (std::size_t i = 0; i < 5; ++i) {
    double denom = 0.0;
    for (std::size_t j = 0; j < 11; ++j) denom += std::exp(logits.at({i, j}));
    expected -= std::log(std::exp(logits.at({i, labels[i]})) / denom);
  }
  EXPECT_NEAR(view_ce_loss(logits, labels).item(), expected / 5.0, 1e-12);
}

TEST(ViewCrossEntropy, RejectsOutOfRangeLabel) {
  EXPECT_THROW(view_ce_loss(Tensor::zeros({2, 11}), {0, 11}), std::out_of_range);
  EXPECT_THROW(view_ce_loss(Tensor::zeros({2, 11}), {0}), cag::ad::ShapeError);
}

TEST(TotalLoss, WeightedSum) {
  const LossConfig cfg;
  const LossParts ones{Tensor::scalar(1.0), Tensor::scalar(1.0), Tensor::scalar(1.0)};
  EXPECT_NEAR(total_loss(ones, cfg).item(), 1.1, 1e-15);
  const LossParts zeros{Tensor::scalar(0.0), Tensor::scalar(0.0), Tensor::scalar(0.0)};
  EXPECT_EQ(total_loss(zeros, cfg).item(), 0.0);
  LossConfig triplet_only;
  triplet_only.lambda_circle = 0.0;
  triplet_only.lambda_view = 0.0;
  const LossParts parts{Tensor::scalar(2.5), Tensor::scalar(7.0), Tensor::scalar(3.0)};
  EXPECT_DOUBLE_EQ(total_loss(parts, triplet_only).item(), 0.9 * 2.5);
}

TEST(TotalLoss, LinearInParts) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  const LossConfig cfg;
  for (int trial = 0; trial < 10; ++trial) {
    const double a = u(rng), b = u(rng), c = u(rng);
    const double got = total_loss({Tensor::scalar(a), Tensor::scalar(b), Tensor::scalar(c)}, cfg).item();
    EXPECT_NEAR(got, 0.9 * a + 0.1 * b + 0.1 * c, 1e-14);
  }
}

TEST(TotalLoss, RejectsNonFiniteWithPartName) {
  const LossParts parts{Tensor::scalar(1.0), Tensor::scalar(std::nan("")), Tensor::scalar(1.0)};
  try {
    total_loss(parts, LossConfig{});
    FAIL() << "expected NonFiniteLoss";
  } catch (const NonFiniteLoss& e) {
    EXPECT_NE(std::string(e.what()).find("circle"), std::string::npos);
  }
  const LossParts inf{Tensor::scalar(INFINITY), Tensor::scalar(0.0), Tensor::scalar(0.0)};
  EXPECT_THROW(total_loss(inf, LossConfig{}), NonFiniteLoss);
}

TEST(TotalLoss, MissingViewPartCountsAsZero) {
  const LossParts parts{Tensor::scalar(1.0), Tensor::scalar(1.0), Tensor()};
  EXPECT_NEAR(total_loss(parts, LossConfig{}).item(), 1.0, 1e-15);
}

class LossGradients : public ::testing::TestWithParam<unsigned> {};

TEST_P(LossGradients, Triplet) {
  std::mt19937_64 rng(GetParam());
  const Tensor e = random_tensor({6, 3, 4}, rng);
  const std::vector<std::size_t> labels = {0, 1, 0, 2, 1, 0};
  const auto report = cag::ad::finite_diff_check([&] { return triplet_loss(e, labels, 0.2).value; }, {e});
  EXPECT_TRUE(report.passed) << cag::ad::describe(report);
}

TEST_P(LossGradients, Circle) {
  std::mt19937_64 rng(GetParam());
  const Tensor e = random_tensor({6, 2, 3}, rng);
  const std::vector<std::size_t> labels = {0, 1, 0, 2, 1, 0};
  const auto report = cag::ad::finite_diff_check([&] { return circle_loss(e, labels, 0.5, 4.0).value; }, {e});
  EXPECT_TRUE(report.passed) << cag::ad::describe(report);
}

TEST_P(LossGradients, ViewCrossEntropy) {
  std::mt19937_64 rng(GetParam());
  const Tensor logits = random_tensor({4, 5}, rng, -2.0, 2.0);
  const auto report = cag::ad::finite_diff_check([&] { return view_ce_loss(logits, {0, 4, 2, 2}); }, {logits});
  EXPECT_TRUE(report.passed) << cag::ad::describe(report);
}

TEST_P(LossGradients, Total) {
  std::mt19937_64 rng(GetParam());
  const Tensor e = random_tensor({4, 2, 3}, rng);
  const Tensor logits = random_tensor({4, 3}, rng);
  const auto report = cag::ad::finite_diff_check(
      [&] {
        return total_loss({triplet_loss(e, kLabels, 0.2).value, circle_loss(e, kLabels, 0.5, 8.0).value,
                           view_ce_loss(logits, {0, 1, 2, 0})},
                          LossConfig{});
      },
      {e, logits});
  EXPECT_TRUE(report.passed) << cag::ad::describe(report);
}

INSTANTIATE_TEST_SUITE_P(Seeds, LossGradients, ::testing::Values(1u, 2u, 3u, 4u));
