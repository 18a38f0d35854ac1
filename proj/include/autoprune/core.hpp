#pragma once

// Domain types shared by every module: layer and scenario descriptions, the
// per-layer MDP observation, transitions, episode traces and learning curves,
// plus the curve statistics used for smoothing and source selection.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "autoprune/errors.hpp"

namespace autoprune {

/// Smallest per-layer preservation ratio any environment will apply.
inline constexpr double kMinAction = 0.1;

enum class LayerKind { standard, shortcut, block_top, depthwise };

inline std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::standard: return "standard";
    case LayerKind::shortcut: return "shortcut";
    case LayerKind::block_top: return "block-top";
    case LayerKind::depthwise: return "depthwise";
  }
  return "standard";
}

inline LayerKind layer_kind_from_string(std::string_view s) {
  if (s == "standard") return LayerKind::standard;
  if (s == "shortcut") return LayerKind::shortcut;
  if (s == "block-top") return LayerKind::block_top;
  if (s == "depthwise") return LayerKind::depthwise;
  throw InvalidArgument("unknown layer kind '" + std::string(s) + "'");
}

enum class EnvironmentKind { synthetic, linear_recon };

inline std::string_view to_string(EnvironmentKind kind) {
  return kind == EnvironmentKind::synthetic ? "synthetic" : "linear-recon";
}

inline EnvironmentKind environment_kind_from_string(std::string_view s) {
  if (s == "synthetic") return EnvironmentKind::synthetic;
  if (s == "linear-recon") return EnvironmentKind::linear_recon;
  throw InvalidArgument("unknown environment kind '" + std::string(s) + "'");
}

struct LayerDescriptor {
  std::size_t index = 0;
  LayerKind kind = LayerKind::standard;
  int in_channels = 1;
  int out_channels = 1;
  int kernel_size = 1;
  int stride = 1;
  int feature_height = 1;
  int feature_width = 1;
  double flops = 0.0;  // multiply-accumulate count
  bool critical = false;

  /// MAC count of a dense convolution with this geometry.
  double conv_flops() const {
    const double k2 = static_cast<double>(kernel_size) * kernel_size;
    const double s2 = static_cast<double>(stride) * stride;
    const double spatial = static_cast<double>(feature_height) * feature_width;
    if (kind == LayerKind::depthwise) return in_channels * k2 * spatial / s2;
    return static_cast<double>(out_channels) * in_channels * k2 * spatial / s2;
  }

  /// Builds a validated descriptor. Flops default to the convolution cost
  /// model; shortcut and block-top layers default to critical.
  static LayerDescriptor make(std::size_t index, LayerKind kind, int in_channels, int out_channels,
                              int kernel_size, int stride, int feature_height, int feature_width,
                              std::optional<double> flops = std::nullopt,
                              std::optional<bool> critical = std::nullopt) {
    LayerDescriptor d;
    d.index = index;
    d.kind = kind;
    d.in_channels = in_channels;
    d.out_channels = out_channels;
    d.kernel_size = kernel_size;
    d.stride = stride;
    d.feature_height = feature_height;
    d.feature_width = feature_width;
    d.flops = flops.value_or(d.conv_flops());
    d.critical =
        critical.value_or(kind == LayerKind::shortcut || kind == LayerKind::block_top);
    d.validate();
    return d;
  }

  void validate() const {
    if (in_channels < 1 || out_channels < 1 || kernel_size < 1 || stride < 1 ||
        feature_height < 1 || feature_width < 1) {
      throw InvalidScenario("layer " + std::to_string(index) +
                            ": channel counts and geometry must be >= 1");
    }
    if (!(flops >= 0.0) || !std::isfinite(flops)) {
      throw InvalidScenario("layer " + std::to_string(index) + ": flops must be finite and >= 0");
    }
    if (kind == LayerKind::standard) {
      const double expected = conv_flops();
      if (std::abs(flops - expected) > 1e-9 * std::max(1.0, expected)) {
        throw InvalidScenario("layer " + std::to_string(index) + ": flops " +
                              std::to_string(flops) + " inconsistent with geometry (" +
                              std::to_string(expected) + ")");
      }
    }
  }
};

struct ScenarioSpec {
  std::string scenario_id;
  std::vector<LayerDescriptor> layers;
  double target_preservation = 1.0;
  std::string dataset_tag;
  EnvironmentKind environment_kind = EnvironmentKind::synthetic;

  std::size_t layer_count() const { return layers.size(); }

  double total_flops() const {
    double total = 0.0;
    for (const auto& l : layers) total += l.flops;
    return total;
  }

  void validate() const {
    if (layers.empty()) throw InvalidScenario("scenario '" + scenario_id + "' has no layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (layers[i].index != i) {
        throw InvalidScenario("scenario '" + scenario_id +
                              "': layer indices must be consecutive from 0");
      }
      layers[i].validate();
    }
    if (!(target_preservation > 0.0 && target_preservation <= 1.0)) {
      throw InvalidScenario("scenario '" + scenario_id +
                            "': target_preservation must lie in (0, 1]");
    }
  }
};

/// Fixed-length, [0, 1]-normalized per-layer observation.
class StateVector {
 public:
  static constexpr std::size_t kDim = 11;

  enum Feature : std::size_t {
    layer_index = 0,
    kind = 1,
    in_channels = 2,
    out_channels = 3,
    kernel = 4,
    stride = 5,
    height = 6,
    width = 7,
    flops_reduced = 8,
    flops_remaining = 9,
    previous_action = 10,
  };

  StateVector() { values_.fill(0.0); }
  explicit StateVector(const std::array<double, kDim>& values) : values_(values) {}

  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }
  const std::array<double, kDim>& values() const { return values_; }
  const double* data() const { return values_.data(); }

  bool is_terminal_sentinel() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return v == 0.0; });
  }

  friend bool operator==(const StateVector&, const StateVector&) = default;

 private:
  std::array<double, kDim> values_;
};

struct Transition {
  StateVector state;
  double action = 1.0;
  double reward = 0.0;
  StateVector next_state;
  bool terminal = false;
};

struct LayerStep {
  StateVector state;
  double action = 1.0;           // applied, after budget projection
  double proposed_action = 1.0;  // what the policy asked for
};

struct EpisodeTrace {
  std::string scenario_id;
  std::vector<LayerStep> per_layer;
  double accuracy = 0.0;
  std::size_t trial_index = 0;

  std::vector<double> actions() const {
    std::vector<double> out;
    out.reserve(per_layer.size());
    for (const auto& s : per_layer) out.push_back(s.action);
    return out;
  }
};

/// Expands an episode into its transitions: zero reward everywhere except the
/// terminal step, which carries the episode accuracy. Transitions record the
/// proposed action; the budget projection is part of the environment dynamics.
inline std::vector<Transition> to_transitions(const EpisodeTrace& trace) {
  std::vector<Transition> out;
  out.reserve(trace.per_layer.size());
  for (std::size_t k = 0; k < trace.per_layer.size(); ++k) {
    const bool last = k + 1 == trace.per_layer.size();
    Transition t;
    t.state = trace.per_layer[k].state;
    t.action = trace.per_layer[k].proposed_action;
    t.terminal = last;
    t.reward = last ? trace.accuracy : 0.0;
    t.next_state = last ? StateVector{} : trace.per_layer[k + 1].state;
    out.push_back(t);
  }
  return out;
}

/// Flops-weighted overall preservation realized by a set of per-layer actions.
inline double realized_preservation(const ScenarioSpec& scenario, const std::vector<double>& actions) {
  if (actions.size() != scenario.layers.size()) {
    throw ShapeError("action count does not match layer count");
  }
  double kept = 0.0;
  for (std::size_t k = 0; k < actions.size(); ++k) kept += actions[k] * scenario.layers[k].flops;
  return kept / scenario.total_flops();
}

/// Builds the observation for `layer`. Divisors are per-scenario maxima so
/// every component lands in [0, 1].
inline StateVector build_state(const LayerDescriptor& layer, const ScenarioSpec& scenario,
                               double reduced_flops, double remaining_flops, double prev_action) {
  if (reduced_flops < 0.0 || remaining_flops < 0.0) {
    throw InvalidArgument("build_state: flops arguments must be >= 0");
  }
  if (!(prev_action >= 0.0 && prev_action <= 1.0)) {
    throw InvalidArgument("build_state: prev_action must lie in [0, 1]");
  }
  const double total = scenario.total_flops();
  if (!(total > 0.0)) {
    throw InvalidScenario("scenario '" + scenario.scenario_id + "' has zero total flops");
  }

  double max_channels = 1, max_kernel = 1, max_stride = 1, max_h = 1, max_w = 1;
  for (const auto& l : scenario.layers) {
    max_channels = std::max({max_channels, double(l.in_channels), double(l.out_channels)});
    max_kernel = std::max(max_kernel, double(l.kernel_size));
    max_stride = std::max(max_stride, double(l.stride));
    max_h = std::max(max_h, double(l.feature_height));
    max_w = std::max(max_w, double(l.feature_width));
  }
  const std::size_t n = scenario.layers.size();
  auto unit = [](double v) { return std::clamp(v, 0.0, 1.0); };

  StateVector s;
  s[StateVector::layer_index] = n > 1 ? double(layer.index) / double(n - 1) : 0.0;
  s[StateVector::kind] = double(static_cast<int>(layer.kind)) / 3.0;
  s[StateVector::in_channels] = layer.in_channels / max_channels;
  s[StateVector::out_channels] = layer.out_channels / max_channels;
  s[StateVector::kernel] = layer.kernel_size / max_kernel;
  s[StateVector::stride] = layer.stride / max_stride;
  s[StateVector::height] = layer.feature_height / max_h;
  s[StateVector::width] = layer.feature_width / max_w;
  s[StateVector::flops_reduced] = unit(reduced_flops / total);
  s[StateVector::flops_remaining] = unit(remaining_flops / total);
  s[StateVector::previous_action] = prev_action;
  return s;
}

/// y0 = x0, y_t = weight * y_{t-1} + (1 - weight) * x_t.
inline std::vector<double> ema_smooth(const std::vector<double>& series, double weight) {
  if (!(weight > 0.0 && weight < 1.0)) throw InvalidArgument("ema_smooth: weight must lie in (0, 1)");
  std::vector<double> out;
  out.reserve(series.size());
  for (std::size_t t = 0; t < series.size(); ++t) {
    out.push_back(t == 0 ? series[0] : weight * out.back() + (1.0 - weight) * series[t]);
  }
  return out;
}

struct MovingStats {
  std::vector<double> means;
  std::vector<double> vars;
};

/// Centered moving mean and population variance with windows clipped at the
/// series ends. `window` must be odd.
inline MovingStats moving_stats(const std::vector<double>& series, std::size_t window) {
  if (window == 0 || window % 2 == 0) {
    throw InvalidArgument("moving_stats: window must be odd and >= 1");
  }
  MovingStats out;
  const std::size_t n = series.size();
  out.means.resize(n);
  out.vars.resize(n);
  const std::size_t half = window / 2;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(n - 1, i + half);
    const double count = double(hi - lo + 1);
    double mean = 0.0;
    for (std::size_t j = lo; j <= hi; ++j) mean += series[j];
    mean /= count;
    double var = 0.0;
    for (std::size_t j = lo; j <= hi; ++j) var += (series[j] - mean) * (series[j] - mean);
    out.means[i] = mean;
    out.vars[i] = var / count;
  }
  return out;
}

struct LearningCurve {
  std::vector<double> rewards;
  std::optional<std::vector<double>> smoothed_mean;
  std::optional<std::vector<double>> smoothed_var;

  std::size_t size() const { return rewards.size(); }

  void smooth(std::size_t window) {
    auto stats = moving_stats(rewards, window);
    smoothed_mean = std::move(stats.means);
    smoothed_var = std::move(stats.vars);
  }

  double best() const {
    return rewards.empty() ? 0.0 : *std::max_element(rewards.begin(), rewards.end());
  }
};

}  // namespace autoprune
