#include <gtest/gtest.h>

#include <filesystem>

#include "autoprune/netlib.hpp"
#include "gradcheck.hpp"

using namespace autoprune;
using autoprune::testing::check_gradients;

namespace {

// Plain loops, no Eigen products: the oracle for the forward pass.
std::vector<double> hand_forward(const MlpParams& p, std::vector<double> x) {
  for (std::size_t i = 0; i < p.depth(); ++i) {
    std::vector<double> y(std::size_t(p.layer_sizes[i + 1]));
    for (int r = 0; r < p.layer_sizes[i + 1]; ++r) {
      long double acc = p.biases[i](r);
      for (int c = 0; c < p.layer_sizes[i]; ++c) acc += (long double)p.weights[i](r, c) * x[std::size_t(c)];
      double v = double(acc);
      const Activation act = i + 1 == p.depth() ? p.output_activation : p.hidden_activation;
      if (act == Activation::relu) v = v > 0 ? v : 0;
      if (act == Activation::sigmoid) v = 1.0 / (1.0 + std::exp(-v));
      y[std::size_t(r)] = v;
    }
    x = std::move(y);
  }
  return x;
}

Eigen::VectorXd random_vector(int n, Rng& rng) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = rng.uniform(-1, 1);
  return v;
}

}  // namespace

TEST(MlpForward, ZeroSigmoidNetOutputsHalf) {
  auto p = MlpParams::zeros({11, 64, 64, 1}, Activation::sigmoid);
  Rng rng(1);
  EXPECT_EQ(mlp_forward(p, random_vector(11, rng))(0), 0.5);
}

TEST(MlpForward, IdentityLayerIsIdentity) {
  auto p = MlpParams::zeros({3, 3}, Activation::identity);
  p.weights[0] = Eigen::MatrixXd::Identity(3, 3);
  Eigen::VectorXd x(3);
  x << 0.3, -2.0, 7.5;
  EXPECT_EQ(mlp_forward(p, x), x);
}

TEST(MlpForward, MatchesHandRolledOracle) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    auto p = MlpParams::random({11, 64, 1}, Activation::sigmoid, rng);
    auto x = random_vector(11, rng);
    const double got = mlp_forward(p, x)(0);
    const double want = hand_forward(p, std::vector<double>(x.data(), x.data() + 11))[0];
    EXPECT_NEAR(got, want, 1e-12);
  }
}

TEST(MlpForward, BatchColumnsMatchSingleSamples) {
  Rng rng(2);
  auto p = MlpParams::random({12, 64, 64, 1}, Activation::identity, rng);
  Eigen::MatrixXd x(12, 5);
  for (int c = 0; c < 5; ++c) x.col(c) = random_vector(12, rng);
  auto batch = mlp_forward(p, x);
  for (int c = 0; c < 5; ++c) EXPECT_NEAR(batch(0, c), mlp_forward(p, Eigen::VectorXd(x.col(c)))(0), 1e-12);
}

TEST(MlpForward, ShapeMismatchThrows) {
  auto p = MlpParams::zeros({4, 2}, Activation::identity);
  EXPECT_THROW(mlp_forward(p, Eigen::VectorXd(Eigen::VectorXd::Zero(3))), ShapeError);
}

TEST(MlpBackward, ZeroUpstreamGivesZeroGradients) {
  Rng rng(3);
  auto p = MlpParams::random({11, 64, 64, 1}, Activation::sigmoid, rng);
  auto r = mlp_backward(p, random_vector(11, rng), Eigen::VectorXd::Zero(1));
  for (std::size_t i = 0; i < p.depth(); ++i) {
    EXPECT_EQ(r.param_grads.weights[i].cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(r.param_grads.biases[i].cwiseAbs().maxCoeff(), 0.0);
  }
  EXPECT_EQ(r.input_grad.cwiseAbs().maxCoeff(), 0.0);
}

TEST(MlpBackward, LinearLayerInputGradIsTransposeTimesUpstream) {
  Rng rng(4);
  auto p = MlpParams::random({5, 3}, Activation::identity, rng);
  auto u = random_vector(3, rng);
  auto r = mlp_backward(p, random_vector(5, rng), u);
  EXPECT_TRUE(r.input_grad.col(0).isApprox(p.weights[0].transpose() * u, 1e-14));
}

TEST(MlpBackward, MatchesFiniteDifferencesOnArtifactArchitectures) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    Rng rng(seed + 10);
    for (auto [in, act] : {std::pair{11, Activation::sigmoid}, std::pair{12, Activation::identity}}) {
      auto p = MlpParams::random({in, 64, 64, 1}, act, rng);
      auto x = random_vector(in, rng);
      const double c = rng.uniform(0.5, 2.0);
      Eigen::VectorXd up(1);
      up(0) = c;
      auto grads = mlp_backward(p, x, up).param_grads;
      auto loss = [&](const MlpParams& q) { return c * mlp_forward(q, x)(0); };
      EXPECT_LT(check_gradients(p, grads, loss).max_rel, 1e-4);
    }
  }
}

TEST(MlpBackward, InputGradMatchesFiniteDifferences) {
  Rng rng(21);
  auto p = MlpParams::random({6, 8, 8, 2}, Activation::sigmoid, rng);
  auto x = random_vector(6, rng);
  auto u = random_vector(2, rng);
  auto r = mlp_backward(p, x, u);
  for (int i = 0; i < 6; ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp(i) += 1e-5;
    xm(i) -= 1e-5;
    const double num = (u.dot(mlp_forward(p, xp)) - u.dot(mlp_forward(p, xm))) / 2e-5;
    EXPECT_LT(autoprune::testing::relative_error(r.input_grad(i, 0), num), 1e-6);
  }
}

TEST(Adam, ZeroGradientLeavesParamsAndMoments) {
  Rng rng(5);
  auto p = MlpParams::random({3, 4, 1}, Activation::identity, rng);
  const auto before = p;
  auto s = AdamState::for_params(p, 1e-3);
  adam_step(p, p.zero_gradients(), s);
  EXPECT_TRUE(p == before);
  EXPECT_EQ(s.first_moment.weights[0].cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(s.second_moment.weights[0].cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(s.step_count, 1u);
}

TEST(Adam, FirstStepMovesByLearningRateAgainstSign) {
  auto p = MlpParams::zeros({2, 1}, Activation::identity);
  auto g = p.zero_gradients();
  g.weights[0] << 0.3, -4.0;
  g.biases[0] << 1e-3;
  auto s = AdamState::for_params(p, 0.01);
  adam_step(p, g, s);
  // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
  EXPECT_NEAR(p.weights[0](0, 0), -0.01 * 0.3 / (0.3 + 1e-8), 1e-15);
  EXPECT_NEAR(p.weights[0](0, 1), 0.01 * 4.0 / (4.0 + 1e-8), 1e-15);
  EXPECT_NEAR(p.biases[0](0), -0.01 * 1e-3 / (1e-3 + 1e-8), 1e-15);
}

TEST(Adam, SecondMomentGrowsOnRepeatedGradient) {
  auto p = MlpParams::zeros({2, 1}, Activation::identity);
  auto g = p.zero_gradients();
  g.weights[0] << 0.5, 0.5;
  g.biases[0] << 0.5;
  auto s = AdamState::for_params(p, 0.01);
  adam_step(p, g, s);
  const double v1 = s.second_moment.weights[0](0, 0);
  adam_step(p, g, s);
  EXPECT_GT(s.second_moment.weights[0](0, 0), v1);
}

TEST(Adam, NonFiniteGradientRejectedWithoutChange) {
  auto p = MlpParams::zeros({2, 1}, Activation::identity);
  auto g = p.zero_gradients();
  g.weights[0](0, 0) = std::nan("");
  auto s = AdamState::for_params(p, 0.01);
  EXPECT_THROW(adam_step(p, g, s), NumericError);
  EXPECT_EQ(s.step_count, 0u);
}

TEST(SoftUpdate, EndpointsAndConvexCombination) {
  auto t = MlpParams::zeros({1, 1}, Activation::identity);
  auto o = t;
  o.weights[0](0, 0) = 1.0;
  o.biases[0](0) = 1.0;
  EXPECT_TRUE(soft_update(t, o, 1.0) == o);
  EXPECT_TRUE(soft_update(t, o, 0.0) == t);
  EXPECT_DOUBLE_EQ(soft_update(t, o, 0.01).weights[0](0, 0), 0.01);
  EXPECT_THROW(soft_update(t, o, 1.5), InvalidArgument);
  EXPECT_THROW(soft_update(t, MlpParams::zeros({2, 1}, Activation::identity), 0.5), ShapeError);
}

TEST(Serialization, RoundTripIsBitwise) {
  Rng rng(6);
  auto p = MlpParams::random({11, 64, 64, 1}, Activation::sigmoid, rng);
  auto q = deserialize(serialize(p));
  EXPECT_TRUE(p == q);
  auto x = random_vector(11, rng);
  EXPECT_EQ(mlp_forward(p, x)(0), mlp_forward(q, x)(0));

  const auto path = std::filesystem::temp_directory_path() / "autoprune_netlib_roundtrip.bin";
  save_params(p, path);
  EXPECT_TRUE(load_params(path) == p);
  std::filesystem::remove(path);
}

TEST(Serialization, RejectsCorruptInput) {
  auto bytes = serialize(MlpParams::zeros({2, 1}, Activation::identity));
  auto truncated = bytes;
  truncated.pop_back();
  EXPECT_THROW(deserialize(truncated), LibraryError);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(deserialize(bad_magic), LibraryError);
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(deserialize(trailing), LibraryError);
  auto bad_version = bytes;
  bad_version[4] = 9;
  EXPECT_THROW(deserialize(bad_version), LibraryError);
}
