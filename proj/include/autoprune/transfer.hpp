#pragma once

// Reusing past pruning runs: weight transfer, ratio and cross-model remapping
// of historical actions, replay-buffer seeding, and concurrent source
// selection with early stopping.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <future>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "autoprune/agent.hpp"
#include "autoprune/core.hpp"
#include "autoprune/env.hpp"
#include "autoprune/errors.hpp"
#include "autoprune/netlib.hpp"
#include "autoprune/rng.hpp"

namespace autoprune {

struct HistoricalRecord {
  std::string id;
  std::string model_tag;  // free-form network family label used by the library index
  ScenarioSpec scenario;
  MlpParams actor;
  MlpParams critic;
  bool invariant_mode = false;
  std::vector<EpisodeTrace> traces;
  LearningCurve final_curve;
  std::int64_t created_at = 0;  // seconds since the Unix epoch

  void validate(int hidden_width = 64) const {
    if (!actor.same_architecture(MlpParams::zeros(actor_layer_sizes(hidden_width), Activation::sigmoid))) {
      throw TransferError("record '" + id + "': actor does not match the canonical architecture");
    }
    if (!critic.same_architecture(MlpParams::zeros(critic_layer_sizes(hidden_width), Activation::identity))) {
      throw TransferError("record '" + id + "': critic does not match the canonical architecture");
    }
    for (const auto& t : traces) {
      if (t.scenario_id != scenario.scenario_id) {
        throw TransferError("record '" + id + "': trace belongs to scenario '" + t.scenario_id + "'");
      }
    }
  }

  /// Highest-accuracy trace, or nullptr for a record without history.
  const EpisodeTrace* best_trace() const {
    const EpisodeTrace* best = nullptr;
    for (const auto& t : traces) {
      if (!best || t.accuracy > best->accuracy) best = &t;
    }
    return best;
  }
};

/// Snapshot of a finished run as a library record.
inline HistoricalRecord make_record(std::string id, std::string model_tag, const ScenarioSpec& scenario,
                                    const DdpgAgent& agent, const TrainResult& run, std::int64_t created_at) {
  HistoricalRecord r;
  r.id = std::move(id);
  r.model_tag = std::move(model_tag);
  r.scenario = scenario;
  r.actor = agent.actor;
  r.critic = agent.critic;
  r.invariant_mode = agent.config.invariant_mode;
  r.traces = run.traces;
  r.final_curve = run.curve;
  r.created_at = created_at;
  return r;
}

namespace detail {

inline void check_transfer_shape(const MlpParams& from, const MlpParams& to, const char* which) {
  if (from.layer_sizes.size() != to.layer_sizes.size()) {
    throw TransferError(std::string(which) + ": depth " + std::to_string(from.layer_sizes.size() - 1) + " vs " +
                        std::to_string(to.layer_sizes.size() - 1));
  }
  for (std::size_t i = 0; i + 1 < from.layer_sizes.size(); ++i) {
    if (from.layer_sizes[i] != to.layer_sizes[i] || from.layer_sizes[i + 1] != to.layer_sizes[i + 1]) {
      throw TransferError(std::string(which) + ": layer " + std::to_string(i) + " is " +
                          std::to_string(from.layer_sizes[i + 1]) + "x" + std::to_string(from.layer_sizes[i]) +
                          " in the source but " + std::to_string(to.layer_sizes[i + 1]) + "x" +
                          std::to_string(to.layer_sizes[i]) + " in the target");
    }
  }
  if (from.hidden_activation != to.hidden_activation || from.output_activation != to.output_activation) {
    throw TransferError(std::string(which) + ": activation mismatch");
  }
}

}  // namespace detail

/// Starts `target` from the record's weights: online and target networks are
/// overwritten and both optimizers restart from zero moments.
inline DdpgAgent& vanilla_transfer(const HistoricalRecord& record, DdpgAgent& target) {
  detail::check_transfer_shape(record.actor, target.actor, "actor");
  detail::check_transfer_shape(record.critic, target.critic, "critic");
  if (record.invariant_mode != target.config.invariant_mode) {
    throw TransferError("record '" + record.id + "' was trained with invariant_mode=" +
                        (record.invariant_mode ? "true" : "false") + " but the target agent uses " +
                        (target.config.invariant_mode ? "true" : "false"));
  }
  target.actor = record.actor;
  target.critic = record.critic;
  target.target_actor = record.actor;
  target.target_critic = record.critic;
  target.reset_optimizers();
  return target;
}

// ---------------------------------------------------------------------------
// Data augmentation

/// Remaps a layer action between target ratios while keeping a = 1 fixed.
inline double augment_ratio(double a_source, double p_source, double p_target) {
  if (p_source == 1.0) throw InvalidArgument("augment_ratio: source ratio 1 leaves nothing to rescale");
  if (!(a_source > 0.0 && a_source <= 1.0)) throw InvalidArgument("augment_ratio: action must lie in (0, 1]");
  if (!(p_source > 0.0 && p_source < 1.0) || !(p_target > 0.0 && p_target <= 1.0)) {
    throw InvalidArgument("augment_ratio: ratios must lie in (0, 1)");
  }
  const double a = 1.0 - (1.0 - a_source) / (1.0 - p_source) * (1.0 - p_target);
  return std::clamp(a, kMinAction, 1.0);
}

/// Index of the source layer whose normalized depth (index / count) is
/// closest to target layer `j`; ties go to the shallower layer.
inline std::size_t align_layer(std::size_t j, std::size_t target_layers, std::size_t source_layers) {
  const double depth = double(j) / double(target_layers);
  std::size_t best = 0;
  double best_gap = std::abs(depth);
  for (std::size_t i = 1; i < source_layers; ++i) {
    const double gap = std::abs(double(i) / double(source_layers) - depth);
    if (gap < best_gap) {
      best = i;
      best_gap = gap;
    }
  }
  return best;
}

namespace detail {

/// Shifts the non-critical actions by one common offset (clamped to
/// [a_min, 1]) so that sum(a_k * f_k) over them equals `budget`.
inline void rebalance(std::vector<double>& actions, const std::vector<double>& flops, const std::vector<bool>& fixed,
                      double budget) {
  auto kept = [&](double delta) {
    double s = 0.0;
    for (std::size_t k = 0; k < actions.size(); ++k) {
      if (!fixed[k]) s += std::clamp(actions[k] - delta, kMinAction, 1.0) * flops[k];
    }
    return s;
  };
  double lo = -1.0, hi = 1.0;  // kept(lo) is the all-ones total, kept(hi) the all-floor total
  if (budget >= kept(lo)) {
    for (std::size_t k = 0; k < actions.size(); ++k)
      if (!fixed[k]) actions[k] = 1.0;
    return;
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (kept(mid) > budget ? lo : hi) = mid;
  }
  // Exact offset on the unclamped set found by bisection.
  const double delta = 0.5 * (lo + hi);
  double free_flops = 0.0, free_kept = 0.0, pinned = 0.0;
  for (std::size_t k = 0; k < actions.size(); ++k) {
    if (fixed[k]) continue;
    const double shifted = actions[k] - delta;
    if (shifted <= kMinAction) {
      pinned += kMinAction * flops[k];
    } else if (shifted >= 1.0) {
      pinned += flops[k];
    } else {
      free_flops += flops[k];
      free_kept += actions[k] * flops[k];
    }
  }
  const double exact = free_flops > 0.0 ? (free_kept + pinned - budget) / free_flops : delta;
  for (std::size_t k = 0; k < actions.size(); ++k) {
    if (fixed[k]) continue;
    const double shifted = actions[k] - delta;
    if (shifted <= kMinAction) {
      actions[k] = kMinAction;
    } else if (shifted >= 1.0) {
      actions[k] = 1.0;
    } else {
      actions[k] = std::clamp(actions[k] - exact, kMinAction, 1.0);
    }
  }
}

inline bool same_geometry(const ScenarioSpec& a, const ScenarioSpec& b) {
  if (a.layers.size() != b.layers.size()) return false;
  for (std::size_t k = 0; k < a.layers.size(); ++k) {
    const auto& x = a.layers[k];
    const auto& y = b.layers[k];
    if (x.kind != y.kind || x.in_channels != y.in_channels || x.out_channels != y.out_channels ||
        x.kernel_size != y.kernel_size || x.stride != y.stride || x.feature_height != y.feature_height ||
        x.feature_width != y.feature_width || x.critical != y.critical) {
      return false;
    }
  }
  return true;
}

}  // namespace detail

/// Historical actions remapped onto the target network before replay:
/// depth alignment, critical layers pinned to 1, a flops-weighted common
/// shift restoring the source's realized preservation, then the ratio remap.
inline std::vector<double> augment_cross_model_actions(const std::vector<double>& source_actions,
                                                       const ScenarioSpec& source, const ScenarioSpec& target) {
  if (source_actions.size() != source.layers.size()) throw ShapeError("trace length does not match source layers");
  const std::size_t n = target.layers.size();
  std::vector<double> actions(n), flops(n);
  std::vector<bool> critical(n);
  for (std::size_t j = 0; j < n; ++j) {
    actions[j] = source_actions[align_layer(j, n, source.layers.size())];
    flops[j] = target.layers[j].flops;
    critical[j] = target.layers[j].critical;
  }

  const double preserved = realized_preservation(source, source_actions);
  double budget = preserved * target.total_flops();
  double free_flops = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (critical[j]) {
      actions[j] = 1.0;
      budget -= flops[j];
    } else {
      free_flops += flops[j];
    }
  }
  const double slack = 1e-9 * target.total_flops();
  if (budget < kMinAction * free_flops - slack) {
    throw AugmentationInfeasible("critical layers of '" + target.scenario_id + "' alone exceed the preserved budget");
  }
  if (free_flops > 0.0) detail::rebalance(actions, flops, critical, budget);

  const double ps = source.target_preservation, pt = target.target_preservation;
  if (ps != pt) {
    if (ps == 1.0) throw AugmentationInfeasible("source ratio 1 cannot be remapped to " + std::to_string(pt));
    for (std::size_t j = 0; j < n; ++j) {
      if (!critical[j]) actions[j] = augment_ratio(actions[j], ps, pt);
    }
  }
  return actions;
}

/// Replays `actions` through a fresh session of `env`, rebuilding states with
/// the target featurization and re-scoring the episode. Actions the target
/// budget cannot afford are projected like any other proposal.
inline EpisodeTrace replay_actions(const std::vector<double>& actions, const Environment& env,
                                   std::size_t trial_index = 0) {
  EnvironmentSession session(env);
  if (actions.size() != env.scenario().layers.size()) throw ShapeError("replay: action count mismatch");
  EpisodeTrace out;
  out.scenario_id = env.scenario().scenario_id;
  out.trial_index = trial_index;
  for (const double a : actions) {
    const StateVector s = session.state();
    const auto r = session.step(std::clamp(a, kMinAction, 1.0));
    out.per_layer.push_back({s, r.applied_action, a});
  }
  out.accuracy = session.evaluate();
  return out;
}

inline EpisodeTrace augment_cross_model(const EpisodeTrace& trace, const ScenarioSpec& source,
                                        const Environment& target) {
  return replay_actions(augment_cross_model_actions(trace.actions(), source, target.scenario()), target,
                        trace.trial_index);
}

/// Same network at a different ratio: only the ratio remap applies.
inline EpisodeTrace augment_same_model(const EpisodeTrace& trace, const ScenarioSpec& source,
                                       const Environment& target) {
  auto actions = trace.actions();
  const double ps = source.target_preservation, pt = target.scenario().target_preservation;
  if (ps != pt) {
    if (ps == 1.0) throw AugmentationInfeasible("source ratio 1 cannot be remapped");
    for (auto& a : actions) a = augment_ratio(a, ps, pt);
  }
  return replay_actions(actions, target, trace.trial_index);
}

/// Picks the augmentation path for a historical trace: ratio-only when the
/// two scenarios share their layer geometry, cross-model otherwise.
inline EpisodeTrace augment_trace(const EpisodeTrace& trace, const ScenarioSpec& source, const Environment& target) {
  return detail::same_geometry(source, target.scenario()) ? augment_same_model(trace, source, target)
                                                          : augment_cross_model(trace, source, target);
}

struct SeedReport {
  std::size_t inserted = 0;  // transitions
  std::size_t skipped = 0;   // traces rejected as infeasible
};

/// Augments every historical trace for the target, expands it into
/// transitions and pushes them in an order shuffled by `rng`.
inline SeedReport seed_buffer(const std::vector<const HistoricalRecord*>& records, const Environment& target,
                              ReplayBuffer& buffer, Rng& rng) {
  SeedReport report;
  std::vector<Transition> pool;
  for (const auto* r : records) {
    for (const auto& t : r->traces) {
      try {
        const auto augmented = augment_trace(t, r->scenario, target);
        for (const auto& tr : to_transitions(augmented)) pool.push_back(tr);
      } catch (const AugmentationInfeasible&) {
        ++report.skipped;
      }
    }
  }
  rng.shuffle(pool.begin(), pool.end());
  for (const auto& t : pool) buffer.push(t);
  report.inserted = pool.size();
  return report;
}

// ---------------------------------------------------------------------------
// Superiority test and source selection

inline constexpr std::size_t kSuperiorityWindow = 21;
inline constexpr std::size_t kSuperiorityMinTrials = 30;

enum class VerdictReason { significant, max_trial_tiebreak, undecided };

inline std::string_view to_string(VerdictReason r) {
  switch (r) {
    case VerdictReason::significant: return "significant";
    case VerdictReason::max_trial_tiebreak: return "max-trial-tiebreak";
    case VerdictReason::undecided: return "undecided";
  }
  return "undecided";
}

struct SuperiorityVerdict {
  std::optional<std::string> winner;
  std::optional<std::size_t> decisive_trial;  // trials observed when the gap became significant
  VerdictReason reason = VerdictReason::undecided;
};

/// Sign of a significant gap after the first `x` trials: +1 when A leads by
/// more than the summed windowed variances, -1 for B, 0 otherwise. Statistics
/// come from the length-x prefix, so only trials already run are used.
inline int superiority_at(const std::vector<double>& a, const std::vector<double>& b, std::size_t x,
                          std::size_t window = kSuperiorityWindow) {
  if (x == 0 || x > a.size() || x > b.size()) throw InvalidArgument("superiority_at: prefix out of range");
  const auto sa = moving_stats({a.begin(), a.begin() + std::ptrdiff_t(x)}, window);
  const auto sb = moving_stats({b.begin(), b.begin() + std::ptrdiff_t(x)}, window);
  const double ma = sa.means.back(), mb = sb.means.back();
  const double spread = sa.vars.back() + sb.vars.back();
  if (ma - mb > spread) return 1;
  if (mb - ma > spread) return -1;
  return 0;
}

inline SuperiorityVerdict superior(const LearningCurve& a, const LearningCurve& b,
                                   std::size_t window = kSuperiorityWindow,
                                   std::size_t min_trials = kSuperiorityMinTrials, const std::string& id_a = "A",
                                   const std::string& id_b = "B") {
  if (a.size() < min_trials || b.size() < min_trials) {
    throw InsufficientData("superiority test needs at least " + std::to_string(min_trials) + " trials per curve");
  }
  if (window == 0 || window % 2 == 0) throw InvalidArgument("superiority window must be odd");
  const std::size_t len = std::min(a.size(), b.size());
  for (std::size_t x = std::max<std::size_t>(min_trials, 1); x <= len; ++x) {
    const int s = superiority_at(a.rewards, b.rewards, x, window);
    if (s != 0) return {s > 0 ? id_a : id_b, x, VerdictReason::significant};
  }
  return {};
}

/// One candidate's training session, advanced a trial at a time; returns the
/// trial's accuracy.
using TrialSession = std::function<double()>;
using SessionFactory = std::function<TrialSession(const HistoricalRecord&)>;

/// Default sessions: a fresh agent transferred from the record and trained on
/// `target` for up to `max_trials`. Every candidate uses the same seed.
inline SessionFactory transfer_session_factory(const Environment& target, AgentConfig config, std::uint64_t seed,
                                               std::size_t max_trials) {
  return [&target, config, seed, max_trials](const HistoricalRecord& record) -> TrialSession {
    struct State {
      DdpgAgent agent;
      ReplayBuffer buffer;
      std::unique_ptr<Trainer> trainer;
    };
    auto st = std::make_shared<State>(State{DdpgAgent::create(config, seed), ReplayBuffer(config.buffer_capacity), {}});
    vanilla_transfer(record, st->agent);
    st->trainer = std::make_unique<Trainer>(st->agent, target, st->buffer, max_trials, seed);
    return [st]() { return st->trainer->step().raw_accuracy; };
  };
}

struct CandidateReport {
  std::string record_id;
  int rank = 0;  // 0 when p_source <= p_target, 1 otherwise
  std::vector<double> rewards;
  std::vector<double> ema;
  std::optional<std::size_t> stopped_at;  // trials run when dominated
  std::optional<std::string> stopped_by;
};

enum class SelectionReason { single_candidate, significant, max_trial_tiebreak };

inline std::string_view to_string(SelectionReason r) {
  switch (r) {
    case SelectionReason::single_candidate: return "single-candidate";
    case SelectionReason::significant: return "significant";
    case SelectionReason::max_trial_tiebreak: return "max-trial-tiebreak";
  }
  return "significant";
}

struct SourceSelection {
  std::size_t chosen = 0;  // index into the candidate list
  std::string chosen_id;
  SelectionReason reason = SelectionReason::single_candidate;
  std::size_t trials_run = 0;
  std::vector<CandidateReport> candidates;  // in candidate-list order
};

struct SelectionOptions {
  std::size_t max_trials = 200;
  std::size_t window = kSuperiorityWindow;
  std::size_t min_trials = kSuperiorityMinTrials;
  bool tie_accuracy_at_max = true;  // false: tie goes straight to ranking and id
  bool concurrent = true;
};

/// Runs one session per candidate in lockstep. From `min_trials` on, every
/// surviving pair is tested after each trial and any candidate dominated by
/// another survivor is stopped. Survivors at `max_trials` are ordered by final
/// EMA accuracy, then by the ratio pre-filter rank, then by record id.
inline SourceSelection select_source(const std::vector<const HistoricalRecord*>& candidates,
                                     const ScenarioSpec& target, const SessionFactory& factory,
                                     const SelectionOptions& opts = {}) {
  if (candidates.empty()) throw InvalidArgument("select_source: no candidates");
  if (opts.max_trials < opts.min_trials) throw InvalidArgument("select_source: max_trials below min_trials");
  SourceSelection out;
  for (const auto* c : candidates) {
    CandidateReport r;
    r.record_id = c->id;
    r.rank = c->scenario.target_preservation > target.target_preservation ? 1 : 0;
    out.candidates.push_back(std::move(r));
  }
  if (candidates.size() == 1) {
    out.chosen_id = candidates[0]->id;
    return out;
  }

  std::vector<TrialSession> sessions;
  for (const auto* c : candidates) sessions.push_back(factory(*c));
  std::vector<std::size_t> alive(candidates.size());
  for (std::size_t i = 0; i < alive.size(); ++i) alive[i] = i;

  for (std::size_t t = 1; t <= opts.max_trials && alive.size() > 1; ++t) {
    std::vector<double> acc(alive.size());
    if (opts.concurrent) {
      std::vector<std::future<double>> pending;
      for (const std::size_t i : alive) pending.push_back(std::async(std::launch::async, sessions[i]));
      for (std::size_t j = 0; j < alive.size(); ++j) acc[j] = pending[j].get();
    } else {
      for (std::size_t j = 0; j < alive.size(); ++j) acc[j] = sessions[alive[j]]();
    }
    for (std::size_t j = 0; j < alive.size(); ++j) {
      auto& r = out.candidates[alive[j]];
      r.rewards.push_back(acc[j]);
      r.ema.push_back(r.ema.empty() ? acc[j] : 0.5 * r.ema.back() + 0.5 * acc[j]);
    }
    out.trials_run = t;
    if (t < opts.min_trials) continue;

    std::vector<std::optional<std::size_t>> beaten_by(alive.size());
    for (std::size_t x = 0; x < alive.size(); ++x) {
      for (std::size_t y = x + 1; y < alive.size(); ++y) {
        const int s = superiority_at(out.candidates[alive[x]].rewards, out.candidates[alive[y]].rewards, t, opts.window);
        if (s > 0 && !beaten_by[y]) beaten_by[y] = alive[x];
        if (s < 0 && !beaten_by[x]) beaten_by[x] = alive[y];
      }
    }
    std::vector<std::size_t> next;
    for (std::size_t j = 0; j < alive.size(); ++j) {
      if (beaten_by[j]) {
        auto& r = out.candidates[alive[j]];
        r.stopped_at = t;
        r.stopped_by = candidates[*beaten_by[j]]->id;
      } else {
        next.push_back(alive[j]);
      }
    }
    alive = std::move(next);
  }

  if (alive.size() == 1) {
    out.chosen = alive.front();
    out.reason = SelectionReason::significant;
  } else {
    auto better = [&](std::size_t a, std::size_t b) {
      const auto& ra = out.candidates[a];
      const auto& rb = out.candidates[b];
      if (opts.tie_accuracy_at_max && ra.ema.back() != rb.ema.back()) return ra.ema.back() > rb.ema.back();
      if (ra.rank != rb.rank) return ra.rank < rb.rank;
      return ra.record_id < rb.record_id;
    };
    out.chosen = *std::min_element(alive.begin(), alive.end(), better);
    out.reason = SelectionReason::max_trial_tiebreak;
  }
  out.chosen_id = candidates[out.chosen]->id;
  return out;
}

}  // namespace autoprune
