#include <gtest/gtest.h>

#include <functional>
#include <limits>

#include "autoprune/env.hpp"
#include "reference_scenarios.hpp"

using namespace autoprune;

namespace {

ScenarioSpec equal_layers(int n, double p) {
  ScenarioSpec s;
  s.scenario_id = "eq";
  s.target_preservation = p;
  for (int i = 0; i < n; ++i) s.layers.push_back(LayerDescriptor::make(std::size_t(i), LayerKind::standard, 8, 8, 3, 1, 4, 4));
  return s;
}

Eigen::MatrixXd rows(std::initializer_list<std::initializer_list<double>> r) {
  Eigen::MatrixXd m(Eigen::Index(r.size()), Eigen::Index(r.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& row : r) {
    Eigen::Index j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

LinearReconLayer random_layer(int in, int out, int n, Rng& rng) {
  LinearReconLayer l;
  l.weight.resize(out, in);
  l.calibration.resize(n, in);
  for (Eigen::Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < l.calibration.size(); ++i) l.calibration.data()[i] = rng.normal();
  return l;
}

// Best-subset oracle: every m-subset, each refit by a fresh QR least-squares solve.
double best_subset_error(const LinearReconLayer& l, int m) {
  const int in = l.in_channels();
  const Eigen::MatrixXd y = l.calibration * l.weight.transpose();
  double best = std::numeric_limits<double>::infinity();
  for (unsigned mask = 0; mask < (1u << in); ++mask) {
    if (__builtin_popcount(mask) != m) continue;
    Eigen::MatrixXd xs(l.calibration.rows(), m);
    int j = 0;
    for (int c = 0; c < in; ++c)
      if (mask & (1u << c)) xs.col(j++) = l.calibration.col(c);
    const Eigen::MatrixXd coef = xs.colPivHouseholderQr().solve(y);
    best = std::min(best, (y - xs * coef).norm());
  }
  return best;
}

}  // namespace

TEST(ActionBounds, NoPressureAtFullRatio) {
  auto b = action_bounds(equal_layers(2, 1.0), {});
  EXPECT_EQ(b.lo, 0.1);
  EXPECT_EQ(b.hi, 1.0);
}

TEST(ActionBounds, LinearBudgetHandSolve) {
  auto s = equal_layers(2, 0.55);
  EXPECT_NEAR(action_bounds(s, {1.0}).hi, 0.1, 1e-12);
  EXPECT_NEAR(action_bounds(s, {0.6}).hi, 0.5, 1e-12);
}

TEST(ActionBounds, SingleLayerCappedAtRatio) {
  auto b = action_bounds(equal_layers(1, 0.4), {});
  EXPECT_EQ(b.lo, 0.1);
  EXPECT_NEAR(b.hi, 0.4, 1e-12);
}

TEST(ActionBounds, InfeasibleBudgetNamesLayer) {
  auto s = equal_layers(3, 0.05);
  try {
    action_bounds(s, {});
    FAIL() << "expected InfeasibleError";
  } catch (const InfeasibleError& e) {
    EXPECT_EQ(e.layer(), 0u);
  }
}

TEST(Session, StepClampsAndTerminates) {
  Environment env(equal_layers(2, 0.55), SyntheticNetModel{0.9, {0.1, 0.1}});
  EnvironmentSession s(env);
  EXPECT_EQ(s.step(1.0).applied_action, 1.0);
  auto r = s.step(1.0);
  EXPECT_NEAR(r.applied_action, 0.1, 1e-12);
  EXPECT_TRUE(r.done);
  EXPECT_TRUE(r.next_state.is_terminal_sentinel());
  EXPECT_THROW(s.step(0.5), ProtocolError);
}

TEST(Session, InBoundsActionUnchangedAndInvalidRejected) {
  Environment env(equal_layers(3, 0.5), SyntheticNetModel{0.9, {0.1, 0.1, 0.1}});
  EnvironmentSession s(env);
  EXPECT_EQ(s.step(0.37).applied_action, 0.37);
  EXPECT_THROW(s.step(0.0), InvalidArgument);
  EXPECT_THROW(s.step(1.2), InvalidArgument);
  EXPECT_THROW(s.evaluate(), ProtocolError);
}

TEST(Session, BudgetNeverExceeded) {
  auto scenario = autoprune::testing::ref8(0.3, "b");
  Environment env(scenario, autoprune::testing::ref8_model(0.9));
  Rng rng(9);
  for (int ep = 0; ep < 500; ++ep) {
    EnvironmentSession s(env);
    while (!s.done()) s.step(rng.uniform(1e-3, 1.0));
    EXPECT_LE(realized_preservation(scenario, s.chosen_actions()), scenario.target_preservation + 1e-6);
    for (double a : s.chosen_actions()) EXPECT_GE(a, kMinAction);
  }
}

TEST(Synthetic, HandEvaluatedValues) {
  SyntheticNetModel m{0.9, {0.5}};
  m.critical = {false};
  EXPECT_DOUBLE_EQ(evaluate_synthetic(m, {1.0}), 0.9);
  EXPECT_DOUBLE_EQ(evaluate_synthetic(m, {0.5}), 0.9 - 0.5 * 0.25);
  SyntheticNetModel c{0.9, {0.5}, 0.2, 2.0, {true}};
  EXPECT_DOUBLE_EQ(evaluate_synthetic(c, {0.5}), 0.9 - 0.125 - 0.1);
  EXPECT_THROW(evaluate_synthetic(m, {0.0}), InvalidArgument);
  EXPECT_THROW(evaluate_synthetic(m, {0.5, 0.5}), ShapeError);
}

TEST(Synthetic, ClampedToUnitInterval) {
  SyntheticNetModel m{0.5, {5.0}};
  m.critical = {false};
  EXPECT_EQ(evaluate_synthetic(m, {0.1}), 0.0);
}

TEST(Synthetic, MonotoneInEveryAction) {
  auto m = autoprune::testing::ref8_model(0.93);
  m.critical.assign(8, false);
  m.critical[3] = true;
  m.criticality_penalty = 0.05;
  Rng rng(12);
  for (int rep = 0; rep < 300; ++rep) {
    std::vector<double> a(8);
    for (auto& v : a) v = rng.uniform(0.1, 1.0);
    const std::size_t k = rng.index(8);
    auto b = a;
    b[k] = rng.uniform(a[k], 1.0);
    EXPECT_GE(evaluate_synthetic(m, b), evaluate_synthetic(m, a));
  }
}

TEST(GridOptimum, MatchesBruteForceEnumeration) {
  const auto grid = action_grid(10);
  for (double p : {0.3, 0.5, 0.7}) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      auto scenario = autoprune::testing::four_layer(p);
      auto model = autoprune::testing::four_layer_model();
      Rng rng(seed);
      for (auto& w : model.layer_importance) w = rng.uniform(0.05, 1.0);
      model.critical.assign(4, false);
      const double budget = p * scenario.total_flops() + 1e-9;
      double best = -1;
      for (int i = 0; i < 10000; ++i) {
        std::vector<double> a{grid[std::size_t(i % 10)], grid[std::size_t(i / 10 % 10)], grid[std::size_t(i / 100 % 10)],
                              grid[std::size_t(i / 1000)]};
        double used = 0;
        for (int k = 0; k < 4; ++k) used += a[std::size_t(k)] * scenario.layers[std::size_t(k)].flops;
        if (used <= budget) best = std::max(best, evaluate_synthetic(model, a));
      }
      const auto g = grid_optimum(scenario, model, grid);
      EXPECT_NEAR(g.accuracy, best, 1e-12) << "p=" << p << " seed=" << seed;
      EXPECT_NEAR(evaluate_synthetic(model, g.actions), g.accuracy, 1e-12);
    }
  }
}

TEST(ChannelSelect, KeepAllIsExact) {
  Rng rng(1);
  auto l = random_layer(4, 3, 10, rng);
  auto sel = channel_select(l, 4);
  EXPECT_EQ(sel.kept, (std::vector<std::size_t>{0, 1, 2, 3}));
  EXPECT_EQ(sel.reconstruction_error, 0.0);
  EXPECT_THROW(channel_select(l, 0), InvalidArgument);
  EXPECT_THROW(channel_select(l, 5), InvalidArgument);
}

TEST(ChannelSelect, DropsAllZeroColumn) {
  Rng rng(2);
  auto l = random_layer(5, 3, 12, rng);
  l.weight.col(2).setZero();
  auto sel = channel_select(l, 4);
  EXPECT_EQ(sel.kept, (std::vector<std::size_t>{0, 1, 3, 4}));
  EXPECT_NEAR(sel.reconstruction_error, 0.0, 1e-9);
}

TEST(ChannelSelect, NearBestSubsetOnRandomInstances) {
  Rng rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    auto l = random_layer(4, 3, 16, rng);
    for (int m = 1; m <= 3; ++m) {
      const double oracle = best_subset_error(l, m);
      const auto sel = channel_select(l, m);
      EXPECT_EQ(sel.kept.size(), std::size_t(m));
      EXPECT_LE(sel.reconstruction_error, 1.05 * oracle + 1e-12) << "rep " << rep << " m " << m;
    }
  }
}

TEST(ChannelSelect, RankDeficientCalibrationFallsBack) {
  LinearReconLayer l;
  l.weight = rows({{1, 1, 1}});
  l.calibration = rows({{1, 1, 0}, {2, 2, 0}, {3, 3, 1}, {1, 1, 2}});
  auto sel = channel_select(l, 2);
  EXPECT_EQ(sel.kept.size(), 2u);
  EXPECT_TRUE(std::isfinite(sel.reconstruction_error));
}

TEST(Recon, AllOnesIsPerfect) {
  auto scenario = autoprune::testing::four_layer(0.5);
  auto model = LinearReconModel::generate(scenario, 7, 32);
  EXPECT_EQ(evaluate_recon(model, {1, 1, 1, 1}), 1.0);
}

TEST(Recon, DroppingZeroChannelsIsPerfect) {
  Rng rng(4);
  LinearReconModel model;
  auto l = random_layer(4, 2, 8, rng);
  l.weight.col(1).setZero();
  l.weight.col(3).setZero();
  model.layers.push_back(l);
  EXPECT_NEAR(evaluate_recon(model, {0.5}), 1.0, 1e-12);
}

// Frozen value from tests/fixtures/recon_reference.py (independent Lasso +
// least-squares pipeline).
TEST(Recon, FrozenTwoLayerFixture) {
  LinearReconModel model;
  LinearReconLayer l0, l1;
  l0.weight = rows({{-0.211, -0.518, 0.150, -1.790}, {0.284, -0.322, -0.726, 0.099}, {-1.951, -0.158, -0.731, 0.410}});
  l0.calibration = rows({{0.442, -0.928, -0.933, -1.470},
                         {-0.788, 0.319, 0.857, 0.229},
                         {0.035, -0.867, 0.196, -0.816},
                         {0.240, -0.203, 0.856, 0.202},
                         {1.369, -0.408, 0.756, 0.225},
                         {1.697, -1.962, 0.874, -1.024},
                         {-0.869, -0.018, -1.511, -1.195},
                         {-0.506, -0.322, -1.904, -0.874}});
  l1.weight = rows({{-0.146, -0.132, -0.662, -0.004, -0.513}, {1.173, -0.809, 0.059, -0.490, 0.855}});
  l1.calibration = rows({{-0.972, 0.877, -1.195, -1.367, -0.548},
                         {0.092, -1.521, -0.504, -0.004, -0.036},
                         {0.876, 0.784, 0.333, 0.913, 0.940},
                         {-1.109, 2.185, -0.049, -0.606, 0.600},
                         {-0.489, 0.627, -1.201, 0.725, -1.264},
                         {0.376, -0.213, -0.501, 0.153, -0.575},
                         {-0.772, 0.395, 1.931, -0.998, 1.155},
                         {1.082, -1.120, 0.190, 0.524, -0.911}});
  model.layers = {l0, l1};
  EXPECT_EQ(channel_select(l0, 2).kept, (std::vector<std::size_t>{0, 3}));
  EXPECT_EQ(channel_select(l1, 3).kept, (std::vector<std::size_t>{0, 1, 4}));
  EXPECT_NEAR(evaluate_recon(model, {0.5, 0.6}), 0.94638317015370887, 1e-9);
}

TEST(Recon, CacheGivesSameAnswer) {
  auto scenario = autoprune::testing::four_layer(0.5);
  Environment env(scenario, LinearReconModel::generate(scenario, 3, 64));
  const auto& model = std::get<LinearReconModel>(env.model());
  const std::vector<double> a{0.5, 0.4, 0.3, 0.6};
  EXPECT_EQ(env.evaluate(a), evaluate_recon(model, a));
  EXPECT_EQ(env.evaluate(a), env.evaluate(a));
}

TEST(Recon, GenerateRejectsMismatchedModel) {
  auto scenario = autoprune::testing::four_layer(0.5);
  auto model = LinearReconModel::generate(scenario, 3, 64);
  model.layers.pop_back();
  EXPECT_THROW(Environment(scenario, model), ShapeError);
}

TEST(Environment, ObservationNoiseIsSeededAndBounded) {
  Environment env(equal_layers(2, 0.8), SyntheticNetModel{0.9, {0.1, 0.1}}, 0.05);
  Rng a(1, "env"), b(1, "env");
  for (int i = 0; i < 100; ++i) {
    const double x = env.observe({0.8, 0.8}, a);
    EXPECT_EQ(x, env.observe({0.8, 0.8}, b));
    EXPECT_GE(x, 0.0);
    EXPECT_LE(x, 1.0);
  }
  Environment quiet(equal_layers(2, 0.8), SyntheticNetModel{0.9, {0.1, 0.1}});
  EXPECT_EQ(quiet.observe({0.8, 0.8}, a), quiet.evaluate({0.8, 0.8}));
}

TEST(Environment, RejectsMismatchedSyntheticModel) {
  EXPECT_THROW(Environment(equal_layers(2, 0.5), SyntheticNetModel{0.9, {0.1}}), ShapeError);
  EXPECT_THROW(Environment(equal_layers(1, 0.5), SyntheticNetModel{1.5, {0.1}}), InvalidArgument);
}
