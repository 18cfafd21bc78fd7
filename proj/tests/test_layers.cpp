#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "xtime/layers.hpp"
#include "xtime/verify.hpp"

using namespace xtime;

namespace {

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

Conv1dParams fixed_conv(Shape shape, std::vector<double> w, std::size_t groups = 1) {
  Conv1dParams p;
  p.weight = Tensor(std::move(shape), std::move(w), true);
  p.groups = groups;
  return p;
}

}  // namespace

TEST(Conv1d, SamePaddingExample) {
  auto p = fixed_conv({1, 1, 3}, {1, 1, 1});
  auto y = conv1d(Tensor({1, 1, 3}, {1, 2, 3}), p);
  EXPECT_EQ(values(y), (std::vector<double>{3, 6, 5}));
}

TEST(Conv1d, DepthwiseKeepsChannelsSeparate) {
  auto p = fixed_conv({2, 1, 3}, {1, 1, 1, 0, 1, 0}, 2);
  auto y = conv1d(Tensor({1, 2, 3}, {1, 2, 3, 4, 5, 6}), p);
  EXPECT_EQ(values(y), (std::vector<double>{3, 6, 5, 4, 5, 6}));
}

TEST(Conv1d, BiasAdded) {
  auto p = fixed_conv({2, 1, 1}, {2, -1});
  p.bias = Tensor({2}, {0.5, 1.0});
  auto y = conv1d(Tensor({1, 1, 2}, {1, 2}), p);
  EXPECT_EQ(values(y), (std::vector<double>{2.5, 4.5, 0.0, -1.0}));
}

TEST(Conv1d, RejectsEvenKernelAndBadGroups) {
  Rng rng(1);
  EXPECT_THROW(make_conv1d(4, 4, 4, 1, true, rng), ShapeError);
  EXPECT_THROW(make_conv1d(4, 6, 3, 4, true, rng), ShapeError);
  auto p = make_conv1d(3, 2, 3, 1, false, rng);
  EXPECT_THROW(conv1d(Tensor({1, 4, 5}), p), ShapeError);
}

TEST(Conv1d, LengthPreservedForAllKernels) {
  Rng rng(3);
  for (std::size_t k : {1, 11, 21, 41}) {
    auto p = make_conv1d(2, 3, k, 1, true, rng);
    auto dw = make_conv1d(2, 2, k, 2, true, rng);
    for (std::size_t L = 1; L <= 64; ++L) {
      Tensor x = random_tensor({2, 2, L}, rng);
      ASSERT_EQ(conv1d(x, p).shape(), (Shape{2, 3, L})) << "k=" << k << " L=" << L;
      ASSERT_EQ(conv1d(x, dw).shape(), (Shape{2, 2, L}));
      if (k == 1) ASSERT_EQ(max_pool1d(x, 3).shape(), (Shape{2, 2, L}));
    }
  }
}

TEST(Conv1d, GemmPathMatchesDirectSum) {
  Rng rng(5);
  auto p = make_conv1d(4, 6, 5, 2, true, rng);
  for (double& b : p.bias->data()) b = 0.3;
  Tensor x = random_tensor({2, 4, 7}, rng);
  auto y = conv1d(x, p);
  const std::size_t cig = 2, cog = 3, K = 5, L = 7;
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t o = 0; o < 6; ++o)
      for (std::size_t t = 0; t < L; ++t) {
        const std::size_t g = o / cog;
        double acc = 0.3;
        for (std::size_t ci = 0; ci < cig; ++ci)
          for (std::size_t k = 0; k < K; ++k) {
            const long pos = static_cast<long>(t + k) - 2;
            if (pos < 0 || pos >= static_cast<long>(L)) continue;
            acc += p.weight[(o * cig + ci) * K + k] * x[(b * 4 + g * cig + ci) * L + static_cast<std::size_t>(pos)];
          }
        EXPECT_NEAR(y[(b * 6 + o) * L + t], acc, 1e-12);
      }
}

TEST(DepthwiseSeparable, EqualsComposition) {
  Rng rng(7);
  DepthwiseSeparableParams p{make_conv1d(16, 16, 11, 16, true, rng), make_conv1d(16, 16, 1, 1, true, rng)};
  Tensor x = random_tensor({2, 16, 13}, rng);
  auto a = depthwise_separable_conv1d(x, p);
  auto b = conv1d(conv1d(x, p.depthwise), p.pointwise);
  EXPECT_EQ(values(a), values(b));
}

TEST(DepthwiseSeparable, ParameterCount) {
  Rng rng(1);
  DepthwiseSeparableParams p{make_conv1d(16, 16, 11, 16, true, rng), make_conv1d(16, 16, 1, 1, true, rng)};
  EXPECT_EQ(p.depthwise.parameter_count() + p.pointwise.parameter_count(), 464u);
}

TEST(BatchNorm, TrainModeNormalizesExactlyWithoutEps) {
  Rng rng(2);
  auto p = make_batch_norm(3);
  p.eps = 0.0;
  Tensor x = random_tensor({4, 3, 6}, rng, 3.0);
  auto y = batch_norm1d(x, p);
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0, v = 0;
    for (std::size_t b = 0; b < 4; ++b)
      for (std::size_t t = 0; t < 6; ++t) m += y[(b * 3 + c) * 6 + t];
    m /= 24;
    for (std::size_t b = 0; b < 4; ++b)
      for (std::size_t t = 0; t < 6; ++t) v += std::pow(y[(b * 3 + c) * 6 + t] - m, 2);
    v /= 24;
    EXPECT_NEAR(m, 0.0, 1e-10);
    EXPECT_NEAR(v, 1.0, 1e-10);
  }
}

TEST(BatchNorm, TrainModeVarianceWithDefaultEps) {
  auto p = make_batch_norm(1);
  Tensor x({1, 1, 4}, {1, 2, 3, 4});
  auto y = batch_norm1d(x, p);
  const double var = 1.25;
  double v = 0;
  for (double e : y.data()) v += e * e;
  EXPECT_NEAR(v / 4, var / (var + 1e-5), 1e-12);
}

TEST(BatchNorm, RunningStatisticsUpdate) {
  auto p = make_batch_norm(1);
  Tensor x({1, 1, 4}, {1, 2, 3, 4});
  batch_norm1d(x, p);
  EXPECT_NEAR(p.running_mean[0], 0.1 * 2.5, 1e-15);
  EXPECT_NEAR(p.running_var[0], 0.9 + 0.1 * (5.0 / 3.0), 1e-15);
}

TEST(BatchNorm, EvalModeUsesRunningStatsAndLeavesThemAlone) {
  auto p = make_batch_norm(1);
  p.mode = BnMode::eval;
  p.running_mean[0] = 1.0;
  p.running_var[0] = 4.0;
  p.gamma[0] = 2.0;
  p.beta[0] = 0.5;
  auto y = batch_norm1d(Tensor({1, 1, 2}, {1, 3}), p);
  EXPECT_NEAR(y[0], 0.5, 1e-12);
  EXPECT_NEAR(y[1], 2.0 * 2.0 / std::sqrt(4.0 + 1e-5) + 0.5, 1e-12);
  EXPECT_EQ(p.running_mean[0], 1.0);
  EXPECT_EQ(p.running_var[0], 4.0);
}

TEST(Relu, Values) {
  auto y = relu(Tensor({4}, {-1, 0, 2, -3}));
  EXPECT_EQ(values(y), (std::vector<double>{0, 0, 2, 0}));
}

TEST(MaxPool, Example) {
  auto y = max_pool1d(Tensor({1, 1, 4}, {1, 3, 2, 5}), 3);
  EXPECT_EQ(values(y), (std::vector<double>{3, 3, 5, 5}));
}

TEST(MaxPool, NegativeEdgesIgnorePadding) {
  auto y = max_pool1d(Tensor({1, 1, 3}, {-1, -2, -3}), 3);
  EXPECT_EQ(values(y), (std::vector<double>{-1, -1, -2}));
}

TEST(AdaptivePool, Examples) {
  auto y = adaptive_avg_pool1d(Tensor({1, 1, 4}, {1, 2, 3, 4}), 2);
  EXPECT_EQ(values(y), (std::vector<double>{1.5, 3.5}));
  auto one = adaptive_avg_pool1d(Tensor({1, 1, 4}, {1, 2, 3, 4}), 1);
  EXPECT_DOUBLE_EQ(one[0], 2.5);
  auto up = adaptive_avg_pool1d(Tensor({1, 1, 2}, {1, 3}), 4);
  EXPECT_EQ(values(up), (std::vector<double>{1, 1, 3, 3}));
  auto odd = adaptive_avg_pool1d(Tensor({1, 1, 5}, {1, 2, 3, 4, 5}), 3);
  EXPECT_EQ(values(odd), (std::vector<double>{1.5, 3, 4.5}));
}

TEST(CrossEntropy, UniformTwoClasses) {
  auto l = cross_entropy(Tensor({1, 2}, {0, 0}), std::vector<int>{0});
  EXPECT_NEAR(l.item(), std::log(2.0), 1e-15);
}

TEST(CrossEntropy, StableForHugeLogits) {
  auto l = cross_entropy(Tensor({1, 2}, {1000, 0}), std::vector<int>{0});
  EXPECT_TRUE(std::isfinite(l.item()));
  EXPECT_NEAR(l.item(), 0.0, 1e-12);
  auto h = cross_entropy(Tensor({1, 2}, {-1000, 0}), std::vector<int>{0});
  EXPECT_NEAR(h.item(), 1000.0, 1e-9);
}

TEST(CrossEntropy, GradientIsSoftmaxMinusOneHot) {
  Tensor z({1, 2}, {0, 0}, true);
  Tape tape;
  auto l = cross_entropy(z, std::vector<int>{1}, &tape);
  backward(l, tape);
  EXPECT_NEAR(z.grad()[0], 0.5, 1e-15);
  EXPECT_NEAR(z.grad()[1], -0.5, 1e-15);
}

TEST(CrossEntropy, RejectsBadLabels) {
  EXPECT_THROW(cross_entropy(Tensor({1, 2}), std::vector<int>{2}), DataError);
  EXPECT_THROW(cross_entropy(Tensor({2, 2}), std::vector<int>{0}), ShapeError);
}

TEST(LayerGradients, AllCasesBelowTolerance) {
  GradCheckOptions opt;
  for (const auto& c : layer_gradcheck_cases(opt)) {
    EXPECT_LT(max_error(c.run()), 1e-6) << c.name;
  }
}
