#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "autoprune/core.hpp"
#include "autoprune/rng.hpp"

using namespace autoprune;

namespace {

ScenarioSpec flops_scenario(std::vector<double> flops, double p = 0.5) {
  ScenarioSpec s;
  s.scenario_id = "f";
  s.target_preservation = p;
  for (std::size_t i = 0; i < flops.size(); ++i) {
    s.layers.push_back(LayerDescriptor::make(i, LayerKind::depthwise, 8, 8, 3, 1, 4, 4, flops[i]));
  }
  return s;
}

// Brute-force windowed mean/variance, written independently of moving_stats.
std::pair<double, double> window_stats(const std::vector<double>& x, std::size_t i, std::size_t w) {
  const long half = long(w / 2);
  double sum = 0, n = 0;
  for (long j = long(i) - half; j <= long(i) + half; ++j) {
    if (j < 0 || j >= long(x.size())) continue;
    sum += x[std::size_t(j)];
    n += 1;
  }
  const double mean = sum / n;
  double ss = 0;
  for (long j = long(i) - half; j <= long(i) + half; ++j) {
    if (j < 0 || j >= long(x.size())) continue;
    ss += (x[std::size_t(j)] - mean) * (x[std::size_t(j)] - mean);
  }
  return {mean, ss / n};
}

}  // namespace

TEST(LayerDescriptor, ConvFlopsFromGeometry) {
  auto l = LayerDescriptor::make(0, LayerKind::standard, 16, 32, 3, 1, 8, 8);
  EXPECT_DOUBLE_EQ(l.flops, 16.0 * 32 * 9 * 64);
  auto dw = LayerDescriptor::make(0, LayerKind::depthwise, 16, 16, 3, 2, 8, 8);
  EXPECT_DOUBLE_EQ(dw.flops, 16.0 * 9 * 64 / 4);
  auto explicit_cost = LayerDescriptor::make(0, LayerKind::depthwise, 16, 16, 3, 1, 8, 8, 123.0);
  EXPECT_DOUBLE_EQ(explicit_cost.flops, 123.0);
  EXPECT_THROW(LayerDescriptor::make(0, LayerKind::standard, 16, 32, 3, 1, 8, 8, 123.0), InvalidScenario);
}

TEST(LayerDescriptor, CriticalDefaultsFollowKind) {
  EXPECT_TRUE(LayerDescriptor::make(0, LayerKind::shortcut, 8, 8, 1, 1, 4, 4).critical);
  EXPECT_FALSE(LayerDescriptor::make(0, LayerKind::standard, 8, 8, 3, 1, 4, 4).critical);
  EXPECT_FALSE(LayerDescriptor::make(0, LayerKind::shortcut, 8, 8, 1, 1, 4, 4, std::nullopt, false).critical);
}

TEST(LayerDescriptor, RejectsBadGeometry) {
  EXPECT_THROW(LayerDescriptor::make(0, LayerKind::standard, 0, 8, 3, 1, 4, 4), InvalidScenario);
  EXPECT_THROW(LayerDescriptor::make(0, LayerKind::standard, 8, 8, 3, 1, 4, 4, -1.0), InvalidScenario);
}

TEST(ScenarioSpec, ValidateRejectsBadRatioAndEmpty) {
  auto s = flops_scenario({1, 1});
  s.target_preservation = 0.0;
  EXPECT_THROW(s.validate(), InvalidScenario);
  s.target_preservation = 1.2;
  EXPECT_THROW(s.validate(), InvalidScenario);
  ScenarioSpec empty;
  empty.scenario_id = "e";
  EXPECT_THROW(empty.validate(), InvalidScenario);
}

TEST(LayerKind, StringRoundTrip) {
  for (auto k : {LayerKind::standard, LayerKind::shortcut, LayerKind::block_top, LayerKind::depthwise}) {
    EXPECT_EQ(layer_kind_from_string(to_string(k)), k);
  }
  EXPECT_THROW(layer_kind_from_string("pool"), InvalidArgument);
}

TEST(BuildState, FirstLayerHasNothingPruned) {
  auto s = flops_scenario({100, 200, 100});
  auto st = build_state(s.layers[0], s, 0.0, 300.0, 1.0);
  EXPECT_EQ(st[StateVector::previous_action], 1.0);
  EXPECT_EQ(st[StateVector::flops_reduced], 0.0);
}

TEST(BuildState, MaxChannelsNormalizeToOne) {
  ScenarioSpec s;
  s.scenario_id = "c";
  s.target_preservation = 0.5;
  s.layers.push_back(LayerDescriptor::make(0, LayerKind::standard, 64, 16, 3, 1, 4, 4));
  s.layers.push_back(LayerDescriptor::make(1, LayerKind::standard, 16, 32, 3, 1, 4, 4));
  EXPECT_EQ(build_state(s.layers[0], s, 0, 0, 1.0)[StateVector::in_channels], 1.0);
  EXPECT_EQ(build_state(s.layers[1], s, 0, 0, 1.0)[StateVector::out_channels], 0.5);
}

TEST(BuildState, ReducedFlopsHandCount) {
  auto s = flops_scenario({100, 200, 100});
  // Layer 0 pruned to 0.5 removes 50 of 400.
  auto st = build_state(s.layers[1], s, 50.0, 100.0, 0.5);
  EXPECT_DOUBLE_EQ(st[StateVector::flops_reduced], 0.125);
  EXPECT_DOUBLE_EQ(st[StateVector::flops_remaining], 0.25);
  EXPECT_DOUBLE_EQ(st[StateVector::layer_index], 0.5);
}

TEST(BuildState, PureAndBounded) {
  auto s = flops_scenario({10, 20, 30, 40});
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = rng.index(4);
    const double red = rng.uniform(0, 100), rem = rng.uniform(0, 100), prev = rng.uniform();
    auto a = build_state(s.layers[k], s, red, rem, prev);
    auto b = build_state(s.layers[k], s, red, rem, prev);
    EXPECT_EQ(a, b);
    for (double v : a.values()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(BuildState, RejectsBadArguments) {
  auto s = flops_scenario({1, 1});
  EXPECT_THROW(build_state(s.layers[0], s, -1, 0, 1), InvalidArgument);
  EXPECT_THROW(build_state(s.layers[0], s, 0, 0, 1.5), InvalidArgument);
}

TEST(Transitions, TerminalCarriesReward) {
  EpisodeTrace t;
  t.accuracy = 0.7;
  for (int k = 0; k < 3; ++k) {
    StateVector s;
    s[0] = k;
    t.per_layer.push_back({s, 0.5, 0.6});
  }
  auto tr = to_transitions(t);
  ASSERT_EQ(tr.size(), 3u);
  EXPECT_EQ(tr[0].reward, 0.0);
  EXPECT_FALSE(tr[0].terminal);
  EXPECT_EQ(tr[0].next_state[0], 1.0);
  EXPECT_EQ(tr[0].action, 0.6);
  EXPECT_TRUE(tr[2].terminal);
  EXPECT_EQ(tr[2].reward, 0.7);
  EXPECT_TRUE(tr[2].next_state.is_terminal_sentinel());
}

TEST(RealizedPreservation, FlopsWeighted) {
  auto s = flops_scenario({100, 300});
  EXPECT_DOUBLE_EQ(realized_preservation(s, {1.0, 0.2}), (100 + 60) / 400.0);
  EXPECT_THROW(realized_preservation(s, {1.0}), ShapeError);
}

TEST(EmaSmooth, HandValues) {
  EXPECT_EQ(ema_smooth({0.3, 0.3, 0.3}, 0.5), (std::vector<double>{0.3, 0.3, 0.3}));
  EXPECT_EQ(ema_smooth({0, 1}, 0.5), (std::vector<double>{0, 0.5}));
  EXPECT_EQ(ema_smooth({1, 0, 0}, 0.5), (std::vector<double>{1, 0.5, 0.25}));
  EXPECT_THROW(ema_smooth({1}, 1.0), InvalidArgument);
  EXPECT_THROW(ema_smooth({1}, 0.0), InvalidArgument);
}

TEST(EmaSmooth, AppendingNeverChangesPrefix) {
  Rng rng(1);
  std::vector<double> x;
  std::vector<double> prev;
  for (int n = 1; n < 60; ++n) {
    x.push_back(rng.uniform());
    auto y = ema_smooth(x, 0.5);
    for (std::size_t i = 0; i < prev.size(); ++i) EXPECT_EQ(y[i], prev[i]);
    prev = y;
  }
}

TEST(MovingStats, HandValues) {
  auto c = moving_stats({2, 2, 2, 2}, 3);
  EXPECT_EQ(c.means, (std::vector<double>{2, 2, 2, 2}));
  EXPECT_EQ(c.vars, (std::vector<double>{0, 0, 0, 0}));
  auto m = moving_stats({0, 1, 2}, 3);
  EXPECT_NEAR(m.means[1], 1.0, 1e-12);
  EXPECT_NEAR(m.vars[1], 2.0 / 3.0, 1e-12);
  std::vector<double> five{1, 4, 2, 8, 5};
  auto f = moving_stats(five, 21);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_NEAR(f.means[i], 4.0, 1e-12);
    EXPECT_NEAR(f.vars[i], f.vars[0], 1e-15);
  }
  EXPECT_THROW(moving_stats(five, 4), InvalidArgument);
  EXPECT_THROW(moving_stats(five, 0), InvalidArgument);
}

TEST(MovingStats, MatchesBruteForce) {
  Rng rng(2);
  for (int rep = 0; rep < 30; ++rep) {
    std::vector<double> x(1 + rng.index(80));
    for (auto& v : x) v = rng.normal(0.5, 0.3);
    const std::size_t w = 2 * rng.index(15) + 1;
    auto s = moving_stats(x, w);
    ASSERT_EQ(s.means.size(), x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      auto [mean, var] = window_stats(x, i, w);
      EXPECT_NEAR(s.means[i], mean, 1e-12);
      EXPECT_NEAR(s.vars[i], var, 1e-12);
      EXPECT_GE(s.vars[i], 0.0);
    }
  }
}

TEST(MovingStats, ShiftEquivariantAwayFromTheEnd) {
  Rng rng(3);
  std::vector<double> x(40);
  for (auto& v : x) v = rng.uniform();
  const std::size_t w = 7;
  auto before = moving_stats(x, w);
  x.push_back(rng.uniform());
  auto after = moving_stats(x, w);
  for (std::size_t i = 0; i + w / 2 < before.means.size(); ++i) {
    EXPECT_EQ(after.means[i], before.means[i]);
    EXPECT_EQ(after.vars[i], before.vars[i]);
  }
}

TEST(LearningCurve, SmoothAndBest) {
  LearningCurve c;
  c.rewards = {0.1, 0.5, 0.3};
  c.smooth(3);
  ASSERT_TRUE(c.smoothed_mean);
  EXPECT_NEAR((*c.smoothed_mean)[1], 0.3, 1e-12);
  EXPECT_EQ(c.best(), 0.5);
}

TEST(Rng, NamedStreamsAreIndependentAndStable) {
  Rng a(7, "agent-noise"), b(7, "agent-noise"), c(7, "assistant");
  const auto x = a.next_u64();
  EXPECT_EQ(x, b.next_u64());
  EXPECT_NE(x, c.next_u64());
  EXPECT_NE(stream_seed(7, "env"), stream_seed(8, "env"));
}

TEST(Rng, IndexUniformAndShufflePermutes) {
  Rng rng(11);
  std::vector<int> counts(5);
  for (int i = 0; i < 50000; ++i) counts[rng.index(5)]++;
  for (int c : counts) EXPECT_NEAR(c / 50000.0, 0.2, 0.01);
  std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7};
  rng.shuffle(v.begin(), v.end());
  EXPECT_EQ(std::set<int>(v.begin(), v.end()).size(), 8u);
}

TEST(Rng, TruncatedNormalStaysInRange) {
  Rng rng(4);
  for (int i = 0; i < 5000; ++i) {
    const double x = rng.truncated_normal(0.95, 0.5, 0.0, 1.0);
    EXPECT_GT(x, 0.0);
    EXPECT_LE(x, 1.0);
  }
}
