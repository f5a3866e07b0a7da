#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "fedft/nn.hpp"
#include "fedft/selection.hpp"
#include "oracles.hpp"

using namespace fedft;

namespace {

Tensor2 random_batch(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal;
  Tensor2 t(rows, cols);
  for (double& v : t.values()) v = normal(rng);
  return t;
}

std::vector<std::size_t> random_labels(std::size_t n, std::size_t classes, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, classes - 1);
  std::vector<std::size_t> out(n);
  for (auto& l : out) l = pick(rng);
  return out;
}

}  // namespace

TEST(Forward, ZeroNetworkGivesZeroLogits) {
  Model m({Layer::dense(3, 4), Layer::relu(), Layer::dense(4, 2)}, 0, 2);
  auto pass = forward(m, random_batch(5, 3, 1));
  for (double v : pass.logits().values()) EXPECT_EQ(v, 0.0);
}

TEST(Forward, SingleDenseLayerByHand) {
  Model m({Layer::dense(Tensor2::from_rows({{2, 0}, {0, 3}}), {1, -1})}, 0, 2);
  auto pass = forward(m, Tensor2::from_rows({{1, 1}}));
  EXPECT_EQ(pass.logits()(0, 0), 3.0);
  EXPECT_EQ(pass.logits()(0, 1), 2.0);
}

TEST(Forward, MatchesIndependentReference) {
  Model m = make_mlp({6, {5}, 3}, 11);
  Tensor2 x = random_batch(4, 6, 12);
  auto pass = forward(m, x);
  auto ref = oracle::reference_logits(m, x);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(pass.logits()(r, c), ref[r][c], 1e-12);
  EXPECT_EQ(pass.activations.size(), m.layer_count() + 1);
}

TEST(Forward, ShapeMismatchIsRejected) {
  Model m = make_mlp({6, {5}, 3}, 1);
  EXPECT_THROW(forward(m, random_batch(2, 5, 1)), ShapeError);
}

TEST(Forward, NonFiniteActivationIsReported) {
  Model m({Layer::dense(Tensor2::from_rows({{1e308, 1e308}}), {0.0})}, 0, 1);
  EXPECT_THROW(forward(m, Tensor2::from_rows({{1e308, 1e308}})), NumericError);
}

TEST(Forward, Deterministic) {
  Model m = make_mlp({8, {16, 16}, 4}, 3);
  Tensor2 x = random_batch(10, 8, 4);
  EXPECT_EQ(forward(m, x).logits(), forward(m, x).logits());
}

TEST(Model, RejectsInconsistentShapes) {
  EXPECT_THROW(Model({Layer::dense(3, 4), Layer::dense(5, 2)}, 0, 2), ShapeError);
  EXPECT_THROW(Model({Layer::dense(3, 4)}, 0, 3), ShapeError);
  EXPECT_THROW(Model({Layer::dense(3, 4)}, 2, 4), ParameterError);
}

TEST(Softmax, UniformLogits) {
  auto p = softmax_with_temperature(std::vector<double>{0, 0, 0}, 1.0);
  for (double v : p) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Softmax, HighPrecisionReference) {
  // mpmath, 30 digits.
  auto p = softmax_with_temperature(std::vector<double>{1, 2, 3}, 1.0);
  EXPECT_NEAR(p[0], 0.0900305731703804580, 1e-15);
  EXPECT_NEAR(p[1], 0.2447284710547976525, 1e-15);
  EXPECT_NEAR(p[2], 0.6652409557748218895, 1e-15);
}

TEST(Softmax, HardeningLimit) {
  auto p = softmax_with_temperature(std::vector<double>{1, 2}, 0.01);
  EXPECT_LT(p[0], 1e-40);
  EXPECT_GT(p[0], 0.0);
  EXPECT_NEAR(p[1], 1.0, 1e-15);
}

TEST(Softmax, NoOverflowAtLargeScaledLogits) {
  auto p = softmax_with_temperature(std::vector<double>{7.0, 6.5, -7.0}, 0.01);
  double s = 0.0;
  for (double v : p) {
    EXPECT_TRUE(std::isfinite(v));
    s += v;
  }
  EXPECT_NEAR(s, 1.0, 1e-12);
}

TEST(Softmax, RejectsNonPositiveTemperature) {
  EXPECT_THROW(softmax_with_temperature(std::vector<double>{1, 2}, 0.0), ParameterError);
  EXPECT_THROW(softmax_with_temperature(std::vector<double>{1, 2}, -1.0), ParameterError);
}

TEST(Softmax, ShiftInvarianceProperty) {
  Rng rng(5);
  std::normal_distribution<double> normal(0.0, 3.0);
  std::uniform_real_distribution<double> temp(0.05, 3.0), shift(-50.0, 50.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> z(7), zc(7);
    const double c = shift(rng), rho = temp(rng);
    for (std::size_t i = 0; i < z.size(); ++i) {
      z[i] = normal(rng);
      zc[i] = z[i] + c;
    }
    auto a = softmax_with_temperature(z, rho);
    auto b = softmax_with_temperature(zc, rho);
    for (std::size_t i = 0; i < z.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
  }
}

TEST(CrossEntropy, Cases) {
  std::vector<std::size_t> label0{0};
  EXPECT_NEAR(cross_entropy_loss(Tensor2::from_rows({{1.0, 0.0, 0.0}}), label0), 0.0, 1e-12);
  Tensor2 uniform(1, 10, 0.1);
  EXPECT_NEAR(cross_entropy_loss(uniform, label0), std::log(10.0), 1e-12);
  // -ln 0.7 (mpmath)
  EXPECT_NEAR(cross_entropy_loss(Tensor2::from_rows({{0.7, 0.2, 0.1}}), label0),
              0.356674943938732379, 1e-12);
}

TEST(CrossEntropy, ClampsZeroProbability) {
  std::vector<std::size_t> label{1};
  EXPECT_NEAR(cross_entropy_loss(Tensor2::from_rows({{1.0, 0.0}}), label), -std::log(1e-12), 1e-9);
}

TEST(CrossEntropy, Errors) {
  std::vector<std::size_t> bad{3};
  EXPECT_THROW(cross_entropy_loss(Tensor2::from_rows({{0.5, 0.5}}), bad), ParameterError);
  std::vector<std::size_t> ok{0};
  EXPECT_THROW(cross_entropy_loss(Tensor2::from_rows({{0.5, 0.6}}), ok), ParameterError);
}

TEST(Backward, MatchesFiniteDifferences) {
  Model m = make_mlp({5, {7}, 4}, 21);
  m.set_split_index(0);
  Tensor2 x = random_batch(6, 5, 22);
  auto y = random_labels(6, 4, 23);
  auto g = backward(m, forward(m, x), y);
  auto fd = oracle::finite_difference_gradient(m, x, y, 1e-5);
  ASSERT_EQ(g.values.size(), fd.size());
  for (std::size_t i = 0; i < fd.size(); ++i)
    EXPECT_LT(oracle::relative_error(g.values[i], fd[i]), 1e-5) << "parameter " << i;
}

TEST(Backward, OnlyTrainableSuffixReceivesGradients) {
  Model m = make_mlp({5, {7, 6}, 3}, 31);
  m.set_split_index(2);
  Tensor2 x = random_batch(4, 5, 32);
  auto y = random_labels(4, 3, 33);
  auto g = backward(m, forward(m, x), y);
  EXPECT_EQ(g.values.size(), m.theta().param_count());
  auto fd = oracle::finite_difference_gradient(m, x, y, 1e-5);
  for (std::size_t i = 0; i < fd.size(); ++i) EXPECT_LT(oracle::relative_error(g.values[i], fd[i]), 1e-5);
}

TEST(Backward, StationaryAtConfidentCorrectPrediction) {
  // Logit gap of 100 on the true class makes the softmax numerically one-hot.
  Model m({Layer::dense(Tensor2::from_rows({{50.0}, {-50.0}}), {0.0, 0.0})}, 0, 2);
  std::vector<std::size_t> y{0, 0};
  auto g = backward(m, forward(m, Tensor2::from_rows({{1.0}, {1.0}})), y);
  EXPECT_LT(g.norm(), 1e-6);
}

TEST(Backward, DuplicatingTheBatchKeepsTheMeanGradient) {
  Model m = make_mlp({4, {6}, 3}, 41);
  m.set_split_index(0);
  Tensor2 x = random_batch(5, 4, 42);
  auto y = random_labels(5, 3, 43);
  std::vector<std::size_t> twice_idx{0, 1, 2, 3, 4, 0, 1, 2, 3, 4};
  std::vector<std::size_t> y2(y);
  y2.insert(y2.end(), y.begin(), y.end());
  auto g1 = backward(m, forward(m, x), y);
  auto g2 = backward(m, forward(m, x.gather_rows(twice_idx)), y2);
  for (std::size_t i = 0; i < g1.values.size(); ++i) EXPECT_NEAR(g1.values[i], g2.values[i], 1e-14);
}

TEST(Backward, StaleCacheIsAStateError) {
  Model m = make_mlp({4, {6}, 3}, 1);
  Tensor2 x = random_batch(2, 4, 2);
  std::vector<std::size_t> y{0, 1};
  auto pass = forward(m, x);
  std::vector<double> theta = m.theta().flatten();
  m.set_theta(theta);
  EXPECT_THROW(backward(m, pass, y), StateError);
  EXPECT_THROW(backward(m, ForwardPass{}, y), StateError);
}

TEST(Sgd, PlainStep) {
  std::vector<double> w{1.0}, g{0.5};
  OptimizerState opt(0.1, 0.0, 1);
  sgd_step(std::span<double>(w), std::span<const double>(g), opt);
  EXPECT_DOUBLE_EQ(w[0], 0.95);
}

TEST(Sgd, HeavyBallTwoSteps) {
  std::vector<double> w{1.0}, g{1.0};
  OptimizerState opt(0.1, 0.5, 1);
  sgd_step(std::span<double>(w), std::span<const double>(g), opt);
  EXPECT_DOUBLE_EQ(opt.velocity[0], 1.0);
  EXPECT_DOUBLE_EQ(w[0], 0.9);
  sgd_step(std::span<double>(w), std::span<const double>(g), opt);
  EXPECT_DOUBLE_EQ(opt.velocity[0], 1.5);
  EXPECT_NEAR(w[0], 0.75, 1e-15);
}

TEST(Sgd, ZeroLearningRateStillAccumulatesVelocity) {
  std::vector<double> w{2.0}, g{1.0};
  OptimizerState opt(0.0, 0.5, 1);
  sgd_step(std::span<double>(w), std::span<const double>(g), opt);
  sgd_step(std::span<double>(w), std::span<const double>(g), opt);
  EXPECT_EQ(w[0], 2.0);
  EXPECT_DOUBLE_EQ(opt.velocity[0], 1.5);
}

TEST(Sgd, RejectsNonFiniteGradient) {
  std::vector<double> w{1.0}, g{std::nan("")};
  OptimizerState opt(0.1, 0.5, 1);
  EXPECT_THROW(sgd_step(std::span<double>(w), std::span<const double>(g), opt), NumericError);
  EXPECT_EQ(w[0], 1.0);
}

TEST(Split, Partitions) {
  Model m({Layer::dense(3, 4), Layer::relu(), Layer::dense(4, 5), Layer::dense(5, 2)}, 2, 2);
  auto [phi, theta] = split_params(m);
  EXPECT_EQ(phi.param_count(), 3u * 4 + 4);
  EXPECT_EQ(theta.param_count(), 4u * 5 + 5 + 5 * 2 + 2);
  EXPECT_EQ(phi.param_count() + theta.param_count(), m.param_count());

  m.set_split_index(0);
  EXPECT_TRUE(m.phi().empty());
  EXPECT_EQ(m.theta().param_count(), m.param_count());

  m.set_split_index(m.layer_count());
  EXPECT_EQ(m.theta().param_count(), 0u);
}

TEST(Split, FrozenPrefixIsBitwiseUnchangedByTraining) {
  Model m = make_mlp({5, {8, 8}, 3}, 51);
  const auto phi_before = m.phi().flatten();
  Tensor2 x = random_batch(20, 5, 52);
  auto y = random_labels(20, 3, 53);
  OptimizerState opt(0.1, 0.5, m.theta().param_count());
  for (int step = 0; step < 25; ++step) sgd_step(m, backward(m, forward(m, x), y), opt);
  EXPECT_EQ(m.phi().flatten(), phi_before);
}

TEST(Trainer, CentralizedMlpSeparatesWellSeparatedBlobs) {
  // 4 classes, d = 8, separation 10: 50 epochs should fit the training set.
  Rng rng(61);
  std::normal_distribution<double> normal;
  const std::size_t per_class = 50, classes = 4, d = 8;
  Tensor2 x(per_class * classes, d);
  std::vector<std::size_t> y;
  for (std::size_t c = 0; c < classes; ++c)
    for (std::size_t s = 0; s < per_class; ++s) {
      auto row = x.row(y.size());
      for (std::size_t j = 0; j < d; ++j) row[j] = (j == c ? 10.0 : 0.0) + normal(rng);
      y.push_back(c);
    }
  Model m = make_mlp({d, {16}, classes}, 62);
  m.set_split_index(0);
  OptimizerState opt(0.1, 0.5, m.theta().param_count());
  std::vector<std::size_t> order(y.size());
  std::iota(order.begin(), order.end(), 0);
  for (int e = 0; e < 50; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    train_epoch(m, x, y, order, 32, opt);
  }
  EXPECT_GT(evaluate(m, x, y).accuracy, 0.95);
}
