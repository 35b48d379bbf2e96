#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "advlab/error.hpp"
#include "advlab/nn.hpp"
#include "oracles.hpp"

using namespace advlab;

namespace {

// Sign pattern of every hidden pre-activation; equal patterns mean the
// central difference did not straddle a ReLU kink.
std::vector<bool> relu_pattern(const FeedForwardNet& net, const DenseMatrix& x) {
  std::vector<bool> pattern;
  DenseMatrix a = x;
  for (std::size_t l = 0; l + 1 < net.num_layers(); ++l) {
    DenseMatrix z = matmul(a, net.weights[l]);
    add_row_vector(z, net.biases[l]);
    for (double& v : z.data()) {
      pattern.push_back(v > 0.0);
      v = v > 0.0 ? v : 0.0;
    }
    a = std::move(z);
  }
  return pattern;
}

struct FdCase {
  FeedForwardNet net;
  DenseMatrix x;
  Labels y;
};

FdCase make_case(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t hidden_layers = 1 + rng.index(3);
  std::vector<std::size_t> sizes{2 + rng.index(5)};
  for (std::size_t l = 0; l < hidden_layers; ++l) sizes.push_back(2 + rng.index(6));
  const std::size_t classes = 2 + rng.index(4);
  sizes.push_back(classes);
  FdCase c{FeedForwardNet::initialize(sizes, seed), DenseMatrix(1 + rng.index(4), sizes[0]), {}};
  for (auto& b : c.net.biases)
    for (double& v : b) v = rng.uniform(-0.1, 0.1);
  for (double& v : c.x.data()) v = rng.uniform();
  for (std::size_t i = 0; i < c.x.rows(); ++i) c.y.push_back(static_cast<int>(rng.index(classes)));
  return c;
}

}  // namespace

TEST(FeedForwardNetTest, InitializationShapesAndBounds) {
  const auto net = FeedForwardNet::initialize({784, 256, 128, 10}, 3);
  ASSERT_EQ(net.num_layers(), 3u);
  EXPECT_EQ(net.parameter_count(), 784u * 256 + 256 + 256 * 128 + 128 + 128 * 10 + 10);
  for (std::size_t l = 0; l < 3; ++l) {
    const double bound = std::sqrt(6.0 / static_cast<double>(net.layer_sizes[l] + net.layer_sizes[l + 1]));
    EXPECT_LE(max_abs(net.weights[l]), bound);
    for (double b : net.biases[l]) EXPECT_EQ(b, 0.0);
  }
  EXPECT_EQ(net, FeedForwardNet::initialize({784, 256, 128, 10}, 3));
  EXPECT_NE(net, FeedForwardNet::initialize({784, 256, 128, 10}, 4));
  EXPECT_THROW(FeedForwardNet::initialize({5}, 0), ShapeError);
}

TEST(Forward, ProbabilitiesSumToOne) {
  const auto net = FeedForwardNet::initialize({6, 5, 3}, 8);
  const auto x = oracle::random_unit_matrix(4, 6, 9);
  const auto p = forward(net, x);
  for (std::size_t i = 0; i < 4; ++i) {
    double s = 0.0;
    for (double v : p.row(i)) {
      EXPECT_GT(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  EXPECT_THROW(forward(net, DenseMatrix(2, 5)), ShapeError);
}

TEST(Forward, StableForLargeLogits) {
  auto net = FeedForwardNet::initialize({2, 2}, 1);
  net.weights[0] = DenseMatrix::from_rows({{1000.0, -1000.0}, {0.0, 0.0}});
  const auto p = forward(net, DenseMatrix::from_rows({{1.0, 0.0}}));
  EXPECT_TRUE(p.all_finite());
  EXPECT_DOUBLE_EQ(p(0, 0), 1.0);
}

TEST(CrossEntropy, FlooredAtTinyProbability) {
  const auto p = DenseMatrix::from_rows({{1.0, 0.0}});
  const std::vector<int> y{1};
  EXPECT_NEAR(cross_entropy(p, y), -std::log(1e-12), 1e-9);
}

TEST(Gradients, MatchCentralDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    FdCase c = make_case(1000 + seed);
    const auto grads = gradients(c.net, c.x, c.y);
    const auto loss = [&] { return cross_entropy(forward(c.net, c.x), c.y); };
    const auto base_pattern = relu_pattern(c.net, c.x);
    constexpr double h = 1e-6;

    const auto check = [&](double& param, double analytic, const char* what) {
      const double keep = param;
      param = keep + h;
      const bool kink_up = relu_pattern(c.net, c.x) != base_pattern;
      param = keep - h;
      const bool kink_down = relu_pattern(c.net, c.x) != base_pattern;
      param = keep;
      if (kink_up || kink_down) return;
      const double numeric = oracle::central_difference(loss, param, h);
      EXPECT_TRUE(oracle::close_relative(analytic, numeric, 1e-4))
          << what << " seed " << seed << ": analytic " << analytic << " numeric " << numeric;
    };

    for (std::size_t l = 0; l < c.net.num_layers(); ++l) {
      for (std::size_t k = 0; k < c.net.weights[l].size(); ++k)
        check(c.net.weights[l].data()[k], grads.weight_grads[l].data()[k], "weight");
      for (std::size_t k = 0; k < c.net.biases[l].size(); ++k)
        check(c.net.biases[l][k], grads.bias_grads[l][k], "bias");
    }
    for (std::size_t k = 0; k < c.x.size(); ++k) check(c.x.data()[k], grads.input_grad.data()[k], "input");
  }
}

TEST(Gradients, InputGradientAgreesWithFullBundle) {
  FdCase c = make_case(77);
  const auto full = gradients(c.net, c.x, c.y);
  const auto only = input_gradient(c.net, c.x, c.y);
  EXPECT_EQ(full.input_grad, only);
}

TEST(Gradients, RejectLinearOutput) {
  const auto net = FeedForwardNet::initialize({3, 2}, 0, OutputKind::linear);
  const std::vector<int> y{0};
  EXPECT_THROW(gradients(net, DenseMatrix(1, 3), y), DomainError);
}

TEST(TrainSgd, LearnsSeparableProblem) {
  Rng rng(5);
  DenseMatrix x(200, 2);
  Labels y(200);
  for (std::size_t i = 0; i < 200; ++i) {
    x(i, 0) = rng.uniform();
    x(i, 1) = rng.uniform();
    y[i] = x(i, 0) > x(i, 1) ? 1 : 0;
  }
  TrainConfig cfg;
  cfg.learning_rate = 0.5;
  cfg.epochs = 60;
  cfg.batch_size = 16;
  cfg.seed = 2;
  const auto r = train_sgd(FeedForwardNet::initialize({2, 8, 2}, 1), x, y, cfg);
  ASSERT_EQ(r.epoch_loss.size(), 60u);
  EXPECT_LT(r.epoch_loss.back(), r.epoch_loss.front());
  EXPECT_LT(evaluate(r.net, x, y).error_rate, 0.05);
}

TEST(TrainSgd, DeterministicForSeed) {
  const auto x = oracle::random_unit_matrix(50, 4, 1);
  Labels y(50);
  for (std::size_t i = 0; i < 50; ++i) y[i] = static_cast<int>(i % 3);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 7;
  cfg.seed = 11;
  const auto a = train_sgd(FeedForwardNet::initialize({4, 5, 3}, 2), x, y, cfg);
  const auto b = train_sgd(FeedForwardNet::initialize({4, 5, 3}, 2), x, y, cfg);
  EXPECT_EQ(a.net, b.net);
  EXPECT_EQ(a.epoch_loss, b.epoch_loss);
}

TEST(TrainSgd, DivergenceReportsEpoch) {
  const auto x = oracle::random_unit_matrix(20, 3, 1);
  Labels y(20);
  for (std::size_t i = 0; i < 20; ++i) y[i] = static_cast<int>(i % 2);
  TrainConfig cfg;
  cfg.learning_rate = 1e300;
  cfg.epochs = 5;
  cfg.batch_size = 4;
  try {
    train_sgd(FeedForwardNet::initialize({3, 4, 2}, 0), x, y, cfg);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_LT(e.epoch(), 5u);
  }
}

TEST(TrainSgd, ConfigValidation) {
  TrainConfig cfg;
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), DomainError);
  cfg = TrainConfig{};
  cfg.learning_rate = -1.0;
  EXPECT_THROW(cfg.validate(), DomainError);
}

TEST(Evaluate, TiesBreakTowardLowerIndex) {
  const auto p = DenseMatrix::from_rows({{0.25, 0.5, 0.25}, {0.4, 0.2, 0.4}});
  const auto preds = predictions_from_probs(p);
  EXPECT_EQ(preds[0].predicted, 1);
  EXPECT_EQ(preds[1].predicted, 0);
  EXPECT_DOUBLE_EQ(preds[1].confidence, 0.4);
  const std::vector<int> y{1, 2};
  const auto e = evaluate_probs(p, y);
  EXPECT_DOUBLE_EQ(e.error_rate, 0.5);
  EXPECT_DOUBLE_EQ(e.mean_confidence, 0.45);
}

TEST(Evaluate, EmptyInputRejected) {
  const auto net = FeedForwardNet::initialize({2, 2}, 0);
  EXPECT_THROW(evaluate(net, LabeledDataset{}), EmptyInputError);
}
