#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dcsl/adam.hpp"
#include "dcsl/network.hpp"
#include "support/test_support.hpp"

using namespace dcsl;
using dcsl::testing::random_matrix;

namespace {

Network single_layer(Matrix w, Vector b, Activation act = Activation::identity) {
  return Network({DenseLayer{std::move(w), std::move(b), act}});
}

}  // namespace

TEST(Forward, IdentityLayerPassesInputThrough) {
  const Network net = single_layer(Matrix::identity(2), {0.0, 0.0});
  const auto out = forward(net, Matrix{{1.0, 2.0}});
  EXPECT_EQ(out.logits, (Matrix{{1.0, 2.0}}));
  EXPECT_EQ(out.features, (Matrix{{1.0, 2.0}}));
  EXPECT_FALSE(net.feature_layer_index().has_value());
}

TEST(Forward, ReluClampsNegatives) {
  const Network net({DenseLayer{Matrix::identity(2), {0.0, 0.0}, Activation::relu},
                     DenseLayer{Matrix::identity(2), {0.0, 0.0}, Activation::identity}});
  const auto out = forward(net, Matrix{{-1.0, 3.0}});
  EXPECT_EQ(out.features, (Matrix{{0.0, 3.0}}));
  EXPECT_EQ(net.feature_layer_index(), 0u);
}

TEST(Forward, RandomNetworksProduceFiniteOutputs) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    const Network net = Network::random({5, {7}, 3, 4}, seed);
    const auto out = forward(net, random_matrix(rng, 6, 5, -10.0, 10.0));
    EXPECT_TRUE(all_finite(out.logits)) << "seed " << seed;
    EXPECT_TRUE(all_finite(out.features)) << "seed " << seed;
    EXPECT_EQ(out.features.cols(), 3u);
    EXPECT_EQ(out.logits.cols(), 4u);
  }
}

TEST(Forward, RejectsWrongInputWidth) {
  const Network net = Network::random({4, {3}, 2, 3}, 1);
  EXPECT_THROW(forward(net, Matrix(2, 5)), InvalidInput);
}

TEST(Network, RejectsBrokenLayerChains) {
  EXPECT_THROW(Network({DenseLayer{Matrix(2, 3), Vector(3), Activation::relu},
                        DenseLayer{Matrix(4, 2), Vector(2), Activation::identity}}),
               InvalidInput);
  EXPECT_THROW(single_layer(Matrix(2, 2), Vector(2), Activation::relu), InvalidInput);
  EXPECT_THROW(single_layer(Matrix(2, 2), Vector(3)), InvalidInput);
}

TEST(Network, RandomInitIsDeterministicPerSeed) {
  const NetworkShape shape{8, {16}, 2, 3};
  EXPECT_EQ(Network::random(shape, 42), Network::random(shape, 42));
  EXPECT_NE(Network::random(shape, 42), Network::random(shape, 43));
  const Network net = Network::random(shape, 42);
  EXPECT_EQ(net.feature_layer_index(), 1u);
  EXPECT_EQ(net.feature_dim(), 2u);
  EXPECT_EQ(net.layers()[0].activation, Activation::relu);
  EXPECT_EQ(net.layers()[1].activation, Activation::identity);
}

TEST(Backward, ZeroUpstreamGivesZeroGradients) {
  std::mt19937_64 rng(3);
  const Network net = Network::random({4, {5, 3}, 2, 3}, 9);
  const auto fwd = forward(net, random_matrix(rng, 5, 4));
  const auto grads = backward(net, fwd.cache, Matrix(5, 3), Matrix(5, 2));
  for (auto block : grads.blocks()) {
    for (double g : block) EXPECT_EQ(g, 0.0);
  }
}

TEST(Backward, LinearLayerWeightGradientIsInput) {
  // L = w . x with one output unit: dL/dw = x.
  const Network net = single_layer(Matrix{{0.3}, {-0.7}, {1.1}}, {0.0});
  const Matrix x{{2.0, -1.0, 0.5}};
  const auto fwd = forward(net, x);
  const auto grads = backward(net, fwd.cache, Matrix{{1.0}}, Matrix(1, 3));
  EXPECT_EQ(grads.layers[0].weights, (Matrix{{2.0}, {-1.0}, {0.5}}));
  EXPECT_EQ(grads.layers[0].bias, Vector{1.0});
}

TEST(Backward, MatchesFiniteDifferencesOnRandomNets) {
  // L = sum(G_logits .* logits) + sum(G_feat .* features): its gradient is
  // exactly what backward() computes for upstream (G_logits, G_feat).
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    std::mt19937_64 rng(seed);
    std::size_t in = 0, n = 0, d = 0;
    const Network net = dcsl::testing::random_network(rng, 6, in, n, d);
    const Matrix x = random_matrix(rng, 4, in, -2.0, 2.0);
    const Matrix g_logits = random_matrix(rng, 4, n);
    const Matrix g_feat = random_matrix(rng, 4, d);
    auto objective = [&](const Network& p) {
      const auto f = forward(p, x);
      double s = 0.0;
      for (std::size_t k = 0; k < f.logits.size(); ++k) s += g_logits.data()[k] * f.logits.data()[k];
      for (std::size_t k = 0; k < f.features.size(); ++k) s += g_feat.data()[k] * f.features.data()[k];
      return s;
    };
    const auto fwd = forward(net, x);
    const auto analytic = dcsl::testing::flatten(backward(net, fwd.cache, g_logits, g_feat));
    const auto numeric = dcsl::testing::numeric_gradient(net, objective);
    EXPECT_LT(dcsl::testing::relative_error(analytic, numeric), 1e-5) << "seed " << seed;
  }
}

TEST(Backward, RejectsMismatchedShapes) {
  const Network net = Network::random({3, {}, 2, 2}, 0);
  const auto fwd = forward(net, Matrix(2, 3));
  EXPECT_THROW(backward(net, fwd.cache, Matrix(3, 2), Matrix(2, 2)), InvalidInput);
  EXPECT_THROW(backward(net, fwd.cache, Matrix(2, 2), Matrix(2, 3)), InvalidInput);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  Network net = Network::random({3, {4}, 2, 3}, 5);
  const Network before = net;
  Gradients zero;
  for (const auto& layer : net.layers()) {
    zero.layers.push_back({Matrix(layer.in_dim(), layer.out_dim()), Vector(layer.out_dim(), 0.0)});
  }
  AdamState state;
  adam_step(net, zero, state, 1e-3);
  EXPECT_EQ(net, before);
  EXPECT_EQ(state.step, 1u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  // t = 1: m_hat = g, v_hat = g^2, so the step is eta * g / (|g| + eps).
  std::vector<double> param{1.0};
  const std::vector<double> grad{1.0};
  AdamState state;
  const double eta = 1e-3;
  std::vector<std::span<double>> p{param};
  std::vector<std::span<const double>> g{grad};
  adam_step(p, g, state, eta);
  EXPECT_NEAR(param[0], 1.0 - eta * 1.0 / (1.0 + 1e-8), 1e-15);
  EXPECT_NEAR(param[0], 1.0 - eta, 1e-10);
}

TEST(Adam, DescendsConvexQuadratic) {
  // f(x) = sum_k a_k (x_k - b_k)^2
  const std::vector<double> a{1.0, 3.0, 0.5};
  const std::vector<double> b{2.0, -1.0, 0.5};
  std::vector<double> x{-1.0, 2.0, 4.0};
  auto f = [&] {
    double s = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) s += a[k] * (x[k] - b[k]) * (x[k] - b[k]);
    return s;
  };
  AdamState state;
  double previous = f();
  const double start = previous;
  for (int step = 0; step < 400; ++step) {
    std::vector<double> grad(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) grad[k] = 2.0 * a[k] * (x[k] - b[k]);
    std::vector<std::span<double>> p{x};
    std::vector<std::span<const double>> g{grad};
    adam_step(p, g, state, 1e-2);
    const double now = f();
    if (step >= 5) {
      EXPECT_LT(now, previous) << "step " << step;
    }
    previous = now;
  }
  EXPECT_LT(previous, 0.5 * start);
}

TEST(Adam, NonFiniteGradientIsDivergenceAndLeavesStateAlone) {
  std::vector<double> param{1.0, 2.0};
  const std::vector<double> grad{0.5, std::nan("")};
  AdamState state;
  std::vector<std::span<double>> p{param};
  std::vector<std::span<const double>> g{grad};
  EXPECT_THROW(adam_step(p, g, state, 1e-3), TrainingDivergence);
  EXPECT_EQ(param, (std::vector<double>{1.0, 2.0}));
  EXPECT_EQ(state.step, 0u);
}

TEST(Adam, StepsAreDeterministic) {
  auto run = [] {
    std::mt19937_64 rng(11);
    Network net = Network::random({4, {6}, 2, 3}, 11);
    AdamState state;
    for (int k = 0; k < 10; ++k) {
      const Matrix x = random_matrix(rng, 5, 4);
      const auto fwd = forward(net, x);
      const auto grads = backward(net, fwd.cache, random_matrix(rng, 5, 3), random_matrix(rng, 5, 2));
      adam_step(net, grads, state, 1e-3);
    }
    return std::make_pair(net, state);
  };
  const auto first = run();
  const auto second = run();
  EXPECT_EQ(first.first, second.first);
  EXPECT_EQ(first.second, second.second);
}
