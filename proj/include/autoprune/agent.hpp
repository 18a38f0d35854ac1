#pragma once

// DDPG actor-critic over per-layer pruning states, its replay buffer, and the
// episode and training loops that drive it against an Environment.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "autoprune/core.hpp"
#include "autoprune/env.hpp"
#include "autoprune/errors.hpp"
#include "autoprune/netlib.hpp"
#include "autoprune/rng.hpp"

namespace autoprune {

/// Upper bound of the actor output when it predicts the ratio-invariant
/// quantity a_k / p instead of a_k.
inline constexpr double kInvariantCeiling = 2.5;

/// Converts a predicted invariant f(s) into a layer action for target ratio p.
inline double wrap_invariant(double invariant, double p) {
  return std::clamp(invariant * p, kMinAction, 1.0);
}

struct NoiseSchedule {
  double initial_std = 0.5;
  double final_std = 0.05;
  double anneal_fraction = 0.6;
  std::size_t horizon = 1;  // total trials of the run

  /// Linear anneal from initial_std to final_std over the first
  /// anneal_fraction * horizon trials, constant afterwards.
  double stddev(std::size_t trial) const {
    const double span = anneal_fraction * double(std::max<std::size_t>(horizon, 1));
    const double t = span > 0.0 ? std::min(1.0, double(trial) / span) : 1.0;
    return initial_std + (final_std - initial_std) * t;
  }
};

struct AgentConfig {
  int hidden_width = 64;
  double actor_lr = 1e-4;
  double critic_lr = 1e-3;
  double tau = 0.01;
  double discount = 1.0;
  std::size_t batch_size = 64;
  std::size_t buffer_capacity = 2000;
  std::size_t updates_per_transition = 1;
  NoiseSchedule noise;
  bool invariant_mode = false;
  double invariant_ceiling = kInvariantCeiling;
};

inline std::vector<int> actor_layer_sizes(int hidden) { return {int(StateVector::kDim), hidden, hidden, 1}; }
inline std::vector<int> critic_layer_sizes(int hidden) { return {int(StateVector::kDim) + 1, hidden, hidden, 1}; }

struct UpdateResult {
  double critic_loss = 0.0;
  double actor_objective = 0.0;
};

/// Losses and raw gradients of one update, before any parameter changes.
struct UpdateGradients {
  double critic_loss = 0.0;
  double actor_objective = 0.0;
  MlpGradients critic;  // d(critic_loss)/d(critic params)
  MlpGradients actor;   // d(-actor_objective)/d(actor params)
};

class DdpgAgent {
 public:
  MlpParams actor;
  MlpParams critic;
  MlpParams target_actor;
  MlpParams target_critic;
  AdamState actor_opt;
  AdamState critic_opt;
  AgentConfig config;

  /// Freshly initialized agent; weights come from the "init" stream of
  /// `seed`, exploration noise and replay sampling from their own streams.
  static DdpgAgent create(const AgentConfig& config, std::uint64_t seed) {
    DdpgAgent a;
    a.config = config;
    Rng init(seed, "init");
    a.actor = MlpParams::random(actor_layer_sizes(config.hidden_width), Activation::sigmoid, init);
    a.critic = MlpParams::random(critic_layer_sizes(config.hidden_width), Activation::identity, init);
    a.target_actor = a.actor;
    a.target_critic = a.critic;
    a.actor_opt = AdamState::for_params(a.actor, config.actor_lr);
    a.critic_opt = AdamState::for_params(a.critic, config.critic_lr);
    a.noise_rng_ = Rng(seed, "agent-noise");
    a.replay_rng_ = Rng(seed, "replay");
    return a;
  }

  bool invariant_mode() const { return config.invariant_mode; }
  double discount() const { return config.discount; }

  /// Target preservation of the scenario being trained; scales invariant outputs.
  void set_preservation(double p) { preservation_ = p; }
  double preservation() const { return preservation_; }

  Rng& noise_rng() { return noise_rng_; }
  Rng& replay_rng() { return replay_rng_; }

  /// Raw actor output in (0, 1).
  double policy_output(const StateVector& state) const {
    Eigen::VectorXd x(StateVector::kDim);
    for (std::size_t i = 0; i < StateVector::kDim; ++i) x(Eigen::Index(i)) = state[i];
    const double u = mlp_forward(actor, x)(0);
    if (!std::isfinite(u)) throw NumericError("actor produced a non-finite output");
    return u;
  }

  /// Deterministic action before exploration noise.
  double greedy_action(const StateVector& state) const {
    const double u = policy_output(state);
    if (config.invariant_mode) return wrap_invariant(config.invariant_ceiling * u, preservation_);
    return std::clamp(u, 1e-6, 1.0);
  }

  /// Maps an applied action back into the actor's output space, which is the
  /// critic's action input.
  double to_critic_action(double action) const {
    if (!config.invariant_mode) return action;
    return std::clamp(action / (config.invariant_ceiling * preservation_), 0.0, 1.0);
  }

  /// Policy action; with exploration, truncated-normal noise of the scheduled
  /// width is added and the result kept in (0, 1].
  double act(const StateVector& state, bool explore, std::size_t trial) {
    const double base = greedy_action(state);
    if (!explore) return base;
    const double noisy = noise_rng_.truncated_normal(base, config.noise.stddev(trial), 0.0, 1.0);
    return std::clamp(noisy, 1e-6, 1.0);
  }

  UpdateGradients compute_gradients(const std::vector<Transition>& batch) const {
    if (batch.empty()) throw InvalidArgument("update: empty batch");
    const auto b = Eigen::Index(batch.size());
    const auto dim = Eigen::Index(StateVector::kDim);
    Eigen::MatrixXd states(dim, b), next_states(dim, b), critic_in(dim + 1, b);
    Eigen::RowVectorXd rewards(b), live(b);
    for (Eigen::Index j = 0; j < b; ++j) {
      const auto& t = batch[std::size_t(j)];
      for (Eigen::Index i = 0; i < dim; ++i) {
        states(i, j) = t.state[std::size_t(i)];
        next_states(i, j) = t.next_state[std::size_t(i)];
      }
      rewards(j) = t.reward;
      live(j) = t.terminal ? 0.0 : 1.0;
    }
    critic_in.topRows(dim) = states;
    for (Eigen::Index j = 0; j < b; ++j) critic_in(dim, j) = to_critic_action(batch[std::size_t(j)].action);

    // Bellman targets from the target networks.
    Eigen::MatrixXd next_in(dim + 1, b);
    next_in.topRows(dim) = next_states;
    next_in.bottomRows(1) = mlp_forward(target_actor, next_states);
    const Eigen::RowVectorXd next_q = mlp_forward(target_critic, next_in);
    const Eigen::RowVectorXd y = rewards + config.discount * live.cwiseProduct(next_q);

    UpdateGradients out;
    const auto critic_cache = mlp_forward_cached(critic, critic_in);
    const Eigen::RowVectorXd err = critic_cache.output().row(0) - y;
    out.critic_loss = err.squaredNorm() / double(b);
    out.critic = mlp_backward(critic, critic_cache, Eigen::MatrixXd((2.0 / double(b)) * err)).param_grads;

    // Actor ascends Q(s, mu(s)); gradients here are of the negated objective.
    const auto actor_cache = mlp_forward_cached(actor, states);
    Eigen::MatrixXd policy_in(dim + 1, b);
    policy_in.topRows(dim) = states;
    policy_in.bottomRows(1) = actor_cache.output();
    const auto q_cache = mlp_forward_cached(critic, policy_in);
    out.actor_objective = q_cache.output().mean();
    const Eigen::MatrixXd dq = Eigen::MatrixXd::Constant(1, b, -1.0 / double(b));
    const auto through_critic = mlp_backward(critic, q_cache, dq);
    out.actor = mlp_backward(actor, actor_cache, through_critic.input_grad.bottomRows(1)).param_grads;

    if (!std::isfinite(out.critic_loss) || !std::isfinite(out.actor_objective)) {
      throw NumericError("update: non-finite loss");
    }
    return out;
  }

  /// One critic regression step, one actor ascent step, then target tracking.
  UpdateResult update(const std::vector<Transition>& batch) {
    const auto g = compute_gradients(batch);
    check_finite(g.critic);
    check_finite(g.actor);
    adam_step(critic, g.critic, critic_opt);
    adam_step(actor, g.actor, actor_opt);
    target_actor = soft_update(target_actor, actor, config.tau);
    target_critic = soft_update(target_critic, critic, config.tau);
    return {g.critic_loss, g.actor_objective};
  }

  /// Zeroes both optimizers' moments and step counters.
  void reset_optimizers() {
    actor_opt = AdamState::for_params(actor, config.actor_lr);
    critic_opt = AdamState::for_params(critic, config.critic_lr);
  }

 private:
  double preservation_ = 1.0;
  Rng noise_rng_;
  Rng replay_rng_;
};

// ---------------------------------------------------------------------------
// Replay buffer

/// Probability in [0, 1] that a finished episode's transitions are stored.
using AcceptancePolicy = std::function<double(const EpisodeTrace&, std::size_t trial)>;

struct AcceptDecision {
  double probability = 1.0;
  bool accepted = true;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 2000) : capacity_(capacity) {
    if (capacity == 0) throw InvalidArgument("replay buffer capacity must be >= 1");
    ring_.reserve(capacity);
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return ring_.size(); }
  bool empty() const { return ring_.empty(); }

  std::optional<AcceptancePolicy> acceptance_policy;

  /// FIFO insert: the oldest entry is overwritten once full.
  void push(const Transition& t) {
    if (ring_.size() < capacity_) {
      ring_.push_back(t);
    } else {
      ring_[head_] = t;
      head_ = (head_ + 1) % capacity_;
    }
  }

  /// Entries from oldest to newest.
  std::vector<Transition> entries() const {
    std::vector<Transition> out;
    out.reserve(ring_.size());
    for (std::size_t i = 0; i < ring_.size(); ++i) out.push_back(ring_[(head_ + i) % ring_.size()]);
    return out;
  }

  /// Uniform sampling with replacement over the current contents.
  std::vector<Transition> sample(std::size_t n, Rng& rng) const {
    if (ring_.empty()) throw InvalidArgument("sample from an empty replay buffer");
    std::vector<Transition> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(ring_[rng.index(ring_.size())]);
    return out;
  }

  /// Applies the acceptance policy to a whole episode and stores its
  /// transitions when accepted. No random draw happens at probability 1.
  AcceptDecision offer_episode(const EpisodeTrace& trace, std::size_t trial, Rng& rng) {
    AcceptDecision d;
    if (acceptance_policy) d.probability = std::clamp((*acceptance_policy)(trace, trial), 0.0, 1.0);
    if (d.probability < 1.0) d.accepted = rng.uniform() < d.probability;
    if (d.accepted) {
      for (const auto& t : to_transitions(trace)) push(t);
    }
    return d;
  }

 private:
  std::size_t capacity_;
  std::vector<Transition> ring_;
  std::size_t head_ = 0;
};

// ---------------------------------------------------------------------------
// Episodes and training

/// Supplies the raw action for layer `layer` instead of the agent.
using ActionOverride = std::function<double(const StateVector& state, std::size_t layer)>;

inline EpisodeTrace run_episode(DdpgAgent& agent, EnvironmentSession& session, bool explore, std::size_t trial,
                                const ActionOverride* override_action = nullptr, Rng* observation_rng = nullptr) {
  if (session.cursor() != 0) throw ProtocolError("run_episode requires a fresh session");
  EpisodeTrace trace;
  trace.scenario_id = session.scenario().scenario_id;
  trace.trial_index = trial;
  StateVector state = session.state();
  while (!session.done()) {
    const std::size_t layer = session.cursor();
    const double raw = override_action && *override_action ? (*override_action)(state, layer)
                                                           : agent.act(state, explore, trial);
    const auto r = session.step(raw);
    trace.per_layer.push_back({state, r.applied_action, raw});
    state = r.next_state;
  }
  trace.accuracy = observation_rng ? session.environment().observe(session.chosen_actions(), *observation_rng)
                                   : session.evaluate();
  return trace;
}

/// One row of the per-trial CSV log.
struct TrialRow {
  std::size_t trial_index = 0;
  double raw_accuracy = 0.0;
  double ema_accuracy = 0.0;
  std::size_t buffer_size = 0;
  double noise_std = 0.0;
  std::string action_source = "agent";
  double accept_probability = 1.0;
  bool accepted = true;
  std::string chosen_history_id;
  std::optional<double> similarity_s;
  std::optional<double> metric_m;
};

struct TrainHooks {
  /// Trials for which `override_action` replaces the agent.
  std::function<bool(std::size_t trial)> use_override;
  /// Built per trial; called for every layer of an overridden episode.
  std::function<ActionOverride(std::size_t trial)> make_override;
  /// Acceptance for overridden trials; agent trials always accept.
  AcceptancePolicy override_acceptance;
  /// Skip gradient updates during overridden trials.
  bool defer_updates_during_override = false;
  /// Lets the caller fill assistant-specific columns.
  std::function<void(TrialRow&)> annotate_row;
  std::function<void(const TrialRow&)> on_trial;
};

struct TrainResult {
  LearningCurve curve;
  std::vector<EpisodeTrace> traces;
  std::vector<TrialRow> rows;
};

/// Seeded streams owned by a training run, separate from the agent's own.
struct TrainStreams {
  Rng observation;
  Rng accept;

  explicit TrainStreams(std::uint64_t seed) : observation(seed, "env"), accept(seed, "accept") {}
};

/// Trial-at-a-time training loop. Each step runs one exploring episode,
/// offers it to the buffer, and once the buffer holds a full batch performs
/// one update per layer transition. The agent, environment and buffer must
/// outlive the trainer.
class Trainer {
 public:
  Trainer(DdpgAgent& agent, const Environment& env, ReplayBuffer& buffer, std::size_t trials, std::uint64_t seed,
          TrainHooks hooks = {})
      : agent_(&agent), env_(&env), buffer_(&buffer), trials_(trials), streams_(seed), hooks_(std::move(hooks)) {
    if (trials < 1) throw InvalidArgument("train: trials must be >= 1");
    agent.set_preservation(env.scenario().target_preservation);
    agent.config.noise.horizon = trials;
  }

  std::size_t trials() const { return trials_; }
  std::size_t completed() const { return result_.rows.size(); }
  bool finished() const { return completed() >= trials_; }
  const TrainResult& result() const { return result_; }
  TrainResult take_result() { return std::move(result_); }

  const TrialRow& step() {
    if (finished()) throw ProtocolError("trainer already ran all trials");
    DdpgAgent& agent = *agent_;
    ReplayBuffer& buffer = *buffer_;
    const std::size_t trial = completed();
    const bool overridden = hooks_.use_override && hooks_.use_override(trial);
    EnvironmentSession session(*env_);
    EpisodeTrace trace;
    AcceptDecision decision;
    if (overridden) {
      const ActionOverride provider = hooks_.make_override(trial);
      trace = run_episode(agent, session, true, trial, &provider, &streams_.observation);
      const auto saved = buffer.acceptance_policy;
      buffer.acceptance_policy = hooks_.override_acceptance
                                     ? std::optional<AcceptancePolicy>(hooks_.override_acceptance)
                                     : std::nullopt;
      decision = buffer.offer_episode(trace, trial, streams_.accept);
      buffer.acceptance_policy = saved;
    } else {
      trace = run_episode(agent, session, true, trial, nullptr, &streams_.observation);
      decision = buffer.offer_episode(trace, trial, streams_.accept);
    }

    const bool do_updates = !(overridden && hooks_.defer_updates_during_override);
    if (do_updates && buffer.size() >= agent.config.batch_size) {
      const std::size_t updates = env_->scenario().layers.size() * agent.config.updates_per_transition;
      for (std::size_t u = 0; u < updates; ++u) agent.update(buffer.sample(agent.config.batch_size, agent.replay_rng()));
    }

    ema_ = trial == 0 ? trace.accuracy : 0.5 * ema_ + 0.5 * trace.accuracy;
    TrialRow row;
    row.trial_index = trial;
    row.raw_accuracy = trace.accuracy;
    row.ema_accuracy = ema_;
    row.buffer_size = buffer.size();
    row.noise_std = agent.config.noise.stddev(trial);
    row.action_source = overridden ? "assistant" : "agent";
    row.accept_probability = decision.probability;
    row.accepted = decision.accepted;
    if (hooks_.annotate_row) hooks_.annotate_row(row);
    if (hooks_.on_trial) hooks_.on_trial(row);

    result_.curve.rewards.push_back(trace.accuracy);
    result_.traces.push_back(std::move(trace));
    result_.rows.push_back(std::move(row));
    return result_.rows.back();
  }

 private:
  DdpgAgent* agent_;
  const Environment* env_;
  ReplayBuffer* buffer_;
  std::size_t trials_;
  TrainStreams streams_;
  TrainHooks hooks_;
  TrainResult result_;
  double ema_ = 0.0;
};

inline TrainResult train(DdpgAgent& agent, const Environment& env, ReplayBuffer& buffer, std::size_t trials,
                         std::uint64_t seed, const TrainHooks& hooks = {}) {
  Trainer trainer(agent, env, buffer, trials, seed, hooks);
  while (!trainer.finished()) trainer.step();
  return trainer.take_result();
}

/// Per-layer actions of a noise-free rollout and their accuracy.
inline EpisodeTrace greedy_rollout(DdpgAgent& agent, const Environment& env) {
  agent.set_preservation(env.scenario().target_preservation);
  EnvironmentSession session(env);
  return run_episode(agent, session, false, 0);
}

}  // namespace autoprune
