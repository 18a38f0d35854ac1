#pragma once

// History-driven actions for the first trials of a run: nearest historical
// states by Gaussian similarity, decaying uniform noise, and rank-based
// acceptance of those episodes into the replay buffer.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "autoprune/agent.hpp"
#include "autoprune/core.hpp"
#include "autoprune/env.hpp"
#include "autoprune/errors.hpp"
#include "autoprune/rng.hpp"
#include "autoprune/transfer.hpp"

namespace autoprune {

struct AssistantConfig {
  double sigma = 0.1;
  double omega = 2.0;
  std::size_t top_n = 3;
  std::size_t switch_trial = 30;
  double explore_phase_fraction = 0.5;
  double noise_amplitude0 = 0.2;
  double accept_top_fraction = 1.0 / 3.0;
  double accept_decay = 4.0;
  std::size_t batch_window = 12;
  bool defer_updates = false;  // skip gradient steps while the assistant drives

  void validate() const {
    if (!(sigma > 0.0)) throw InvalidArgument("assistant: sigma must be > 0");
    if (top_n < 1) throw InvalidArgument("assistant: top_n must be >= 1");
    if (!(accept_top_fraction > 0.0 && accept_top_fraction <= 1.0)) {
      throw InvalidArgument("assistant: accept_top_fraction must lie in (0, 1]");
    }
    if (batch_window < 1) throw InvalidArgument("assistant: batch_window must be >= 1");
    if (!(noise_amplitude0 >= 0.0)) throw InvalidArgument("assistant: noise amplitude must be >= 0");
  }
};

struct HistorySample {
  StateVector state;
  double action = 1.0;
  double performance = 0.0;
  std::string id;  // record:trace:layer
};

struct HistoryIndex {
  std::vector<HistorySample> samples;

  bool empty() const { return samples.empty(); }
  std::size_t size() const { return samples.size(); }

  void add_trace(const EpisodeTrace& trace, const std::string& prefix) {
    for (std::size_t k = 0; k < trace.per_layer.size(); ++k) {
      samples.push_back({trace.per_layer[k].state, trace.per_layer[k].action, trace.accuracy,
                         prefix + ":" + std::to_string(k)});
    }
  }

  struct BuildOptions {
    bool augment = true;        // false indexes raw source states (ablation)
    std::size_t best_traces = 0;  // keep only the top traces per record; 0 keeps all
  };

  /// Index over the records' traces, featurized for `target` after
  /// augmentation. Infeasible traces are left out.
  static HistoryIndex build(const std::vector<const HistoricalRecord*>& records, const Environment& target,
                            const BuildOptions& opts) {
    HistoryIndex index;
    for (const auto* r : records) {
      std::vector<std::size_t> order(r->traces.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      if (opts.best_traces > 0) {
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
          return r->traces[a].accuracy > r->traces[b].accuracy;
        });
        order.resize(std::min(order.size(), opts.best_traces));
      }
      for (const std::size_t t : order) {
        const std::string prefix = r->id + ":" + std::to_string(t);
        if (!opts.augment) {
          index.add_trace(r->traces[t], prefix);
          continue;
        }
        try {
          index.add_trace(augment_trace(r->traces[t], r->scenario, target), prefix);
        } catch (const AugmentationInfeasible&) {
        }
      }
    }
    return index;
  }

  static HistoryIndex build(const std::vector<const HistoricalRecord*>& records, const Environment& target) {
    return build(records, target, BuildOptions{});
  }
};

/// Per-coordinate Gaussian kernel without normalization, so identical states
/// score exactly 1.
inline double similarity(const StateVector& h, const StateVector& i, double sigma) {
  if (!(sigma > 0.0)) throw InvalidArgument("similarity: sigma must be > 0");
  double exponent = 0.0;
  for (std::size_t x = 0; x < StateVector::kDim; ++x) {
    const double d = h[x] - i[x];
    exponent += d * d;
  }
  return std::exp(-exponent / (2.0 * sigma * sigma));
}

/// Dimension-checked overload for raw feature vectors.
inline double similarity(const std::vector<double>& h, const std::vector<double>& i, double sigma) {
  if (h.size() != i.size()) throw ShapeError("similarity: dimension mismatch");
  if (!(sigma > 0.0)) throw InvalidArgument("similarity: sigma must be > 0");
  double exponent = 0.0;
  for (std::size_t x = 0; x < h.size(); ++x) exponent += (h[x] - i[x]) * (h[x] - i[x]);
  return std::exp(-exponent / (2.0 * sigma * sigma));
}

inline double selection_metric(double s, double p, double omega) { return std::pow(s, omega) + p; }

struct SampleChoice {
  double action = 1.0;
  std::size_t sample = 0;
  double similarity = 0.0;
  double metric = 0.0;
};

/// Early in the assistant window a uniform pick among the top-n samples by
/// metric; afterwards the single best (lowest index on ties).
inline SampleChoice select_sample(const HistoryIndex& index, const StateVector& state, std::size_t trial,
                                  const AssistantConfig& cfg, Rng& rng) {
  if (index.empty()) throw AssistantUnavailable("history index is empty");
  const std::size_t n = index.size();
  std::vector<double> s(n), m(n);
  for (std::size_t k = 0; k < n; ++k) {
    s[k] = similarity(index.samples[k].state, state, cfg.sigma);
    m[k] = selection_metric(s[k], index.samples[k].performance, cfg.omega);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const bool early = double(trial) < cfg.explore_phase_fraction * double(cfg.switch_trial);
  std::size_t pick = 0;
  if (early) {
    const std::size_t top = std::min(cfg.top_n, n);
    std::partial_sort(order.begin(), order.begin() + std::ptrdiff_t(top), order.end(),
                      [&](std::size_t a, std::size_t b) { return m[a] > m[b] || (m[a] == m[b] && a < b); });
    pick = order[rng.index(top)];
  } else {
    pick = std::size_t(std::max_element(m.begin(), m.end()) - m.begin());
  }
  return {index.samples[pick].action, pick, s[pick], m[pick]};
}

inline double noise_amplitude(std::size_t trial, const AssistantConfig& cfg) {
  if (cfg.switch_trial == 0) return 0.0;
  return cfg.noise_amplitude0 * (1.0 - double(trial) / double(cfg.switch_trial));
}

/// Uniform noise whose amplitude decays linearly to zero at the switch trial.
inline double perturb(double action, std::size_t trial, const AssistantConfig& cfg, Rng& rng) {
  if (trial >= cfg.switch_trial) throw InvalidArgument("perturb: trial is past the assistant window");
  const double amp = noise_amplitude(trial, cfg);
  return std::clamp(action + rng.uniform(-amp, amp), kMinAction, 1.0);
}

/// 1 on the top ceil(fraction * window) ranks, exponential decay below.
inline double accept_probability(std::size_t rank, std::size_t window_size, const AssistantConfig& cfg) {
  if (window_size < 1 || rank < 1 || rank > window_size) {
    throw InvalidArgument("accept_probability: rank must lie in [1, window]");
  }
  const auto top = std::size_t(std::ceil(cfg.accept_top_fraction * double(window_size) - 1e-12));
  if (rank <= top) return 1.0;
  return std::exp(-cfg.accept_decay * double(rank - top) / double(window_size));
}

/// 1-based rank of `accuracy` among itself and the trailing accuracies
/// (ties share the better rank), plus the window size.
inline std::pair<std::size_t, std::size_t> trailing_rank(const std::vector<double>& history, double accuracy,
                                                         std::size_t batch_window) {
  const std::size_t prior = std::min(history.size(), batch_window - 1);
  std::size_t rank = 1;
  for (std::size_t i = history.size() - prior; i < history.size(); ++i) {
    if (history[i] > accuracy) ++rank;
  }
  return {rank, prior + 1};
}

/// Training where the first `switch_trial` trials take their actions from the
/// history index (then perturbed) and reach the buffer through rank-based
/// acceptance; later trials are ordinary agent trials.
inline TrainResult assisted_train(DdpgAgent& agent, const Environment& env, ReplayBuffer& buffer,
                                  const HistoryIndex& index, const AssistantConfig& cfg, std::size_t trials,
                                  std::uint64_t seed, std::ostream* log = &std::cerr) {
  cfg.validate();
  if (cfg.switch_trial == 0) return train(agent, env, buffer, trials, seed);
  if (index.empty()) {
    if (log) *log << "warning: assistant history is empty; training without assistance\n";
    return train(agent, env, buffer, trials, seed);
  }

  struct Shared {
    Rng rng;
    std::vector<double> accuracies;
    std::vector<std::string> chosen;
    double s_sum = 0.0, m_sum = 0.0;
    std::size_t picks = 0;
  };
  auto sh = std::make_shared<Shared>(Shared{Rng(seed, "assistant"), {}, {}, 0.0, 0.0, 0});

  TrainHooks hooks;
  hooks.use_override = [&cfg](std::size_t trial) { return trial < cfg.switch_trial; };
  hooks.make_override = [&index, &cfg, sh](std::size_t trial) -> ActionOverride {
    sh->chosen.clear();
    sh->s_sum = sh->m_sum = 0.0;
    sh->picks = 0;
    return [&index, &cfg, sh, trial](const StateVector& state, std::size_t) {
      const auto c = select_sample(index, state, trial, cfg, sh->rng);
      sh->chosen.push_back(index.samples[c.sample].id);
      sh->s_sum += c.similarity;
      sh->m_sum += c.metric;
      ++sh->picks;
      return perturb(c.action, trial, cfg, sh->rng);
    };
  };
  hooks.override_acceptance = [&cfg, sh](const EpisodeTrace& trace, std::size_t) {
    const auto [rank, window] = trailing_rank(sh->accuracies, trace.accuracy, cfg.batch_window);
    return accept_probability(rank, window, cfg);
  };
  hooks.defer_updates_during_override = cfg.defer_updates;
  hooks.annotate_row = [sh](TrialRow& row) {
    if (row.action_source != "assistant" || sh->picks == 0) return;
    std::string ids;
    for (const auto& id : sh->chosen) ids += (ids.empty() ? "" : "|") + id;
    row.chosen_history_id = ids;
    row.similarity_s = sh->s_sum / double(sh->picks);
    row.metric_m = sh->m_sum / double(sh->picks);
  };
  hooks.on_trial = [sh](const TrialRow& row) { sh->accuracies.push_back(row.raw_accuracy); };
  return train(agent, env, buffer, trials, seed, hooks);
}

}  // namespace autoprune
