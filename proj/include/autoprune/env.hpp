#pragma once

// Pruning environments. An episode visits layers in order; each step clamps
// the proposed preservation ratio into the range that keeps the overall flops
// budget reachable, and the finished action vector is scored by either a
// closed-form synthetic accuracy model or a least-squares channel
// reconstruction model.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "autoprune/core.hpp"
#include "autoprune/errors.hpp"
#include "autoprune/rng.hpp"

namespace autoprune {

struct ActionBounds {
  double lo = kMinAction;
  double hi = 1.0;
};

/// Range of admissible actions for layer `history.size()` given the actions
/// already fixed for earlier layers. `hi` is the largest ratio that still lets
/// every later layer sit at kMinAction within the budget.
inline ActionBounds action_bounds(const ScenarioSpec& scenario, const std::vector<double>& history) {
  const std::size_t k = history.size();
  if (k >= scenario.layers.size()) throw ProtocolError("action_bounds: episode already complete");
  const double total = scenario.total_flops();
  double used = 0.0;
  for (std::size_t j = 0; j < k; ++j) used += history[j] * scenario.layers[j].flops;
  double later = 0.0;
  for (std::size_t j = k + 1; j < scenario.layers.size(); ++j) later += scenario.layers[j].flops;

  const double budget = scenario.target_preservation * total;
  const double room = budget - used - kMinAction * later;
  const double fk = scenario.layers[k].flops;
  const double slack = 1e-9 * std::max(1.0, total);
  if (room < kMinAction * fk - slack) {
    throw InfeasibleError("scenario '" + scenario.scenario_id + "': flops budget cannot be met from layer " +
                              std::to_string(k),
                          k);
  }
  ActionBounds b;
  b.hi = fk > 0.0 ? std::clamp(room / fk, kMinAction, 1.0) : 1.0;
  return b;
}

// ---------------------------------------------------------------------------
// Synthetic accuracy model

struct SyntheticNetModel {
  double base_accuracy = 0.9;
  std::vector<double> layer_importance;
  double criticality_penalty = 0.0;
  double curvature = 2.0;
  std::vector<bool> critical;  // per layer; filled from the scenario when empty

  void validate(std::size_t layers) const {
    if (!(base_accuracy > 0.0 && base_accuracy <= 1.0)) throw InvalidArgument("base_accuracy must lie in (0, 1]");
    if (layer_importance.size() != layers || critical.size() != layers) {
      throw ShapeError("synthetic model: per-layer vectors must match the layer count");
    }
    for (double w : layer_importance)
      if (!(w >= 0.0)) throw InvalidArgument("layer importance must be >= 0");
    if (!(criticality_penalty >= 0.0)) throw InvalidArgument("criticality_penalty must be >= 0");
    if (!(curvature >= 1.0)) throw InvalidArgument("curvature must be >= 1");
  }

  /// Unclamped score: base minus the separable per-layer deficits.
  double score(const std::vector<double>& actions) const {
    double acc = base_accuracy;
    for (std::size_t k = 0; k < actions.size(); ++k) acc -= layer_deficit(k, actions[k]);
    return acc;
  }

  double layer_deficit(std::size_t k, double action) const {
    const double gap = 1.0 - action;
    double d = layer_importance[k] * std::pow(gap, curvature);
    if (k < critical.size() && critical[k]) d += criticality_penalty * gap;
    return d;
  }
};

inline double evaluate_synthetic(const SyntheticNetModel& model, const std::vector<double>& actions) {
  if (actions.size() != model.layer_importance.size()) {
    throw ShapeError("evaluate_synthetic: expected " + std::to_string(model.layer_importance.size()) +
                     " actions, got " + std::to_string(actions.size()));
  }
  for (double a : actions)
    if (!(a > 0.0 && a <= 1.0)) throw InvalidArgument("evaluate_synthetic: actions must lie in (0, 1]");
  return std::clamp(model.score(actions), 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Linear reconstruction model

struct LinearReconLayer {
  Eigen::MatrixXd weight;       // out x in
  Eigen::MatrixXd calibration;  // n x in

  int in_channels() const { return int(weight.cols()); }

  void validate() const {
    if (weight.cols() != calibration.cols()) throw ShapeError("recon layer: weight/calibration width mismatch");
    if (calibration.rows() < calibration.cols()) {
      throw InvalidArgument("recon layer: need at least as many calibration rows as input channels");
    }
    if (!weight.allFinite() || !calibration.allFinite()) throw NumericError("recon layer: non-finite matrix");
  }

  /// Squared Frobenius norm of the layer's output on the calibration set.
  double signal_energy() const { return (calibration * weight.transpose()).squaredNorm(); }
};

struct LinearReconModel {
  std::vector<LinearReconLayer> layers;
  double l1_strength = 0.0;  // first penalty tried before bisection

  /// Gaussian weights and calibration inputs for every layer of `scenario`.
  static LinearReconModel generate(const ScenarioSpec& scenario, std::uint64_t seed, int calibration_samples,
                                   double l1_strength = 0.0) {
    Rng rng(seed, "recon-model");
    LinearReconModel m;
    m.l1_strength = l1_strength;
    for (const auto& l : scenario.layers) {
      LinearReconLayer layer;
      const int n = std::max(calibration_samples, l.in_channels);
      layer.weight.resize(l.out_channels, l.in_channels);
      layer.calibration.resize(n, l.in_channels);
      const double scale = 1.0 / std::sqrt(double(l.in_channels));
      for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
        for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = scale * rng.normal();
      for (Eigen::Index r = 0; r < layer.calibration.rows(); ++r)
        for (Eigen::Index c = 0; c < layer.calibration.cols(); ++c) layer.calibration(r, c) = rng.normal();
      m.layers.push_back(std::move(layer));
    }
    return m;
  }

  void validate(const ScenarioSpec& scenario) const {
    if (layers.size() != scenario.layers.size()) throw ShapeError("recon model: layer count mismatch");
    for (std::size_t k = 0; k < layers.size(); ++k) {
      layers[k].validate();
      if (layers[k].in_channels() != scenario.layers[k].in_channels) {
        throw ShapeError("recon model: layer " + std::to_string(k) + " input width disagrees with the scenario");
      }
    }
    if (!(l1_strength >= 0.0)) throw InvalidArgument("l1_strength must be >= 0");
  }
};

struct ChannelSelection {
  std::vector<std::size_t> kept;  // ascending channel indices
  double reconstruction_error = 0.0;  // Frobenius norm of the residual
  double lambda = 0.0;                // penalty that produced the support
  bool exact_support = true;          // false when the top-|beta| fallback picked the set
  bool min_norm_fallback = false;     // re-fit system was rank deficient
  std::size_t swaps = 0;              // exchanges made after the l1 stage
};

namespace detail {

// Lasso over channel gates beta in Gram form:
//   minimize 0.5 * ||y - Z beta||^2 + lambda * ||beta||_1
// where column c of Z is vec(X_c W_c^T), so G = Z^T Z = (X^T X) .* (W^T W)
// and Z^T y = G * 1 for y = vec(X W^T).
inline void lasso_coordinate_descent(const Eigen::MatrixXd& gram, const Eigen::VectorXd& corr, double lambda,
                                     Eigen::VectorXd& beta) {
  const Eigen::Index n = gram.rows();
  for (int sweep = 0; sweep < 2000; ++sweep) {
    double max_change = 0.0;
    for (Eigen::Index c = 0; c < n; ++c) {
      const double gcc = gram(c, c);
      if (gcc <= 0.0) {
        beta(c) = 0.0;
        continue;
      }
      const double rho = corr(c) - gram.row(c).dot(beta) + gcc * beta(c);
      double next = 0.0;
      if (rho > lambda) next = (rho - lambda) / gcc;
      else if (rho < -lambda) next = (rho + lambda) / gcc;
      max_change = std::max(max_change, std::abs(next - beta(c)) * std::sqrt(gcc));
      beta(c) = next;
    }
    if (max_change < 1e-12 * std::max(1.0, std::sqrt(gram.diagonal().maxCoeff()))) break;
  }
}

inline std::size_t support_size(const Eigen::VectorXd& beta) {
  std::size_t n = 0;
  for (Eigen::Index i = 0; i < beta.size(); ++i) n += beta(i) != 0.0;
  return n;
}

// Best-improvement single exchanges on the least-squares fit of the kept set.
// With A = X^T X and M = A W^T W A, the output energy explained by a kept set
// S is tr(A_SS^{-1} M_SS); each exchange is scored from the factorization of
// S without one member, bordered by the incoming channel.
inline std::size_t swap_polish(const Eigen::MatrixXd& a, const Eigen::MatrixXd& m, std::vector<std::size_t>& kept) {
  const auto in = std::size_t(a.rows());
  auto sub = [](const Eigen::MatrixXd& x, const std::vector<std::size_t>& r, const std::vector<std::size_t>& c) {
    Eigen::MatrixXd out(Eigen::Index(r.size()), Eigen::Index(c.size()));
    for (std::size_t i = 0; i < r.size(); ++i)
      for (std::size_t j = 0; j < c.size(); ++j) out(Eigen::Index(i), Eigen::Index(j)) = x(Eigen::Index(r[i]), Eigen::Index(c[j]));
    return out;
  };
  auto explained = [&](const std::vector<std::size_t>& s) {
    if (s.empty()) return 0.0;
    return Eigen::MatrixXd(Eigen::LDLT<Eigen::MatrixXd>(sub(a, s, s)).solve(sub(m, s, s))).trace();
  };

  std::size_t swaps = 0;
  double current = explained(kept);
  for (std::size_t pass = 0; pass < 4 * in; ++pass) {
    std::vector<char> in_set(in, 0);
    for (auto c : kept) in_set[c] = 1;
    std::vector<std::size_t> outside;
    for (std::size_t c = 0; c < in; ++c)
      if (!in_set[c]) outside.push_back(c);
    if (outside.empty()) break;

    double best_gain = 1e-12 * std::max(1.0, std::abs(current));
    std::optional<std::pair<std::size_t, std::size_t>> best;
    for (std::size_t i = 0; i < kept.size(); ++i) {
      std::vector<std::size_t> rest = kept;
      rest.erase(rest.begin() + std::ptrdiff_t(i));
      Eigen::VectorXd num = sub(m, outside, outside).diagonal();
      Eigen::VectorXd den = sub(a, outside, outside).diagonal();
      double base = 0.0;
      if (!rest.empty()) {
        const Eigen::LDLT<Eigen::MatrixXd> ldlt(sub(a, rest, rest));
        const Eigen::MatrixXd mr = sub(m, rest, rest);
        base = Eigen::MatrixXd(ldlt.solve(mr)).trace();
        const Eigen::MatrixXd u = sub(a, rest, outside);
        const Eigen::MatrixXd v = ldlt.solve(u);
        const Eigen::MatrixXd mv = mr * v;
        const Eigen::MatrixXd mc = sub(m, rest, outside);
        for (Eigen::Index j = 0; j < v.cols(); ++j) {
          den(j) -= u.col(j).dot(v.col(j));
          num(j) += v.col(j).dot(mv.col(j)) - 2.0 * v.col(j).dot(mc.col(j));
        }
      }
      for (Eigen::Index j = 0; j < den.size(); ++j) {
        if (!(den(j) > 1e-10 * a(Eigen::Index(outside[std::size_t(j)]), Eigen::Index(outside[std::size_t(j)])))) continue;
        const double gain = base + num(j) / den(j) - current;
        if (gain > best_gain) {
          best_gain = gain;
          best = {i, outside[std::size_t(j)]};
        }
      }
    }
    if (!best) break;
    kept[best->first] = best->second;
    std::sort(kept.begin(), kept.end());
    current = explained(kept);
    ++swaps;
  }
  return swaps;
}

}  // namespace detail

/// Residual of reconstructing X W^T from the columns in `kept` after an
/// unpenalized least-squares re-fit of their weights.
inline std::pair<double, bool> refit_error(const LinearReconLayer& layer, const std::vector<std::size_t>& kept) {
  const Eigen::Index in = layer.weight.cols();
  std::vector<Eigen::Index> dropped;
  for (Eigen::Index c = 0, j = 0; c < in; ++c) {
    if (j < Eigen::Index(kept.size()) && Eigen::Index(kept[std::size_t(j)]) == c) ++j;
    else dropped.push_back(c);
  }
  if (dropped.empty()) return {0.0, false};
  const Eigen::Index n = layer.calibration.rows();
  // Output contributed by the dropped channels; the kept channels fit it as
  // well as they can on top of their original weights.
  Eigen::MatrixXd y_drop = Eigen::MatrixXd::Zero(n, layer.weight.rows());
  for (auto c : dropped) y_drop += layer.calibration.col(c) * layer.weight.col(c).transpose();
  if (kept.empty()) return {y_drop.norm(), false};
  Eigen::MatrixXd xs(n, Eigen::Index(kept.size()));
  for (std::size_t j = 0; j < kept.size(); ++j) xs.col(Eigen::Index(j)) = layer.calibration.col(Eigen::Index(kept[j]));
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(xs);
  const bool deficient = cod.rank() < xs.cols();
  const Eigen::MatrixXd correction = cod.solve(y_drop);
  return {(y_drop - xs * correction).norm(), deficient};
}

/// Keeps `keep` input channels of one layer: l1-penalized gate regression with
/// the penalty bisected until exactly `keep` gates are nonzero, single-channel
/// exchanges while they lower the re-fit error, then a least-squares re-fit on
/// the kept channels.
inline ChannelSelection channel_select(const LinearReconLayer& layer, int keep, double initial_lambda = 0.0) {
  const int in = layer.in_channels();
  if (keep < 1 || keep > in) {
    throw InvalidArgument("channel_select: keep must lie in [1, " + std::to_string(in) + "]");
  }
  ChannelSelection out;
  if (keep == in) {
    out.kept.resize(std::size_t(in));
    std::iota(out.kept.begin(), out.kept.end(), std::size_t{0});
    return out;
  }

  const Eigen::MatrixXd xtx = layer.calibration.transpose() * layer.calibration;
  const Eigen::MatrixXd wtw = layer.weight.transpose() * layer.weight;
  const Eigen::MatrixXd gram = xtx.cwiseProduct(wtw);
  const Eigen::VectorXd corr = gram * Eigen::VectorXd::Ones(in);
  const auto target = std::size_t(keep);

  Eigen::VectorXd beta = Eigen::VectorXd::Ones(in);
  auto solve = [&](double lambda) {
    detail::lasso_coordinate_descent(gram, corr, lambda, beta);
    return detail::support_size(beta);
  };

  std::optional<Eigen::VectorXd> found;
  double found_lambda = 0.0;
  if (initial_lambda > 0.0 && solve(initial_lambda) == target) {
    found = beta;
    found_lambda = initial_lambda;
  }

  // Penalty at which every gate is zero.
  double hi = corr.cwiseAbs().maxCoeff();
  double lo = 0.0;
  beta.setOnes();
  Eigen::VectorXd lo_beta = beta;
  if (!found) {
    if (solve(0.0) <= target) {
      lo_beta = beta;
    } else {
      lo_beta = beta;
      for (int iter = 0; iter < 200 && !found; ++iter) {
        const double mid = 0.5 * (lo + hi);
        const auto nnz = solve(mid);
        if (nnz == target) {
          found = beta;
          found_lambda = mid;
        } else if (nnz > target) {
          lo = mid;
          lo_beta = beta;
        } else {
          hi = mid;
        }
        if (hi - lo <= 1e-15 * std::max(1.0, hi)) break;
      }
    }
  }

  std::vector<std::size_t> order(static_cast<std::size_t>(in));
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (found) {
    out.lambda = found_lambda;
    out.kept.clear();
    for (Eigen::Index c = 0; c < in; ++c)
      if ((*found)(c) != 0.0) out.kept.push_back(std::size_t(c));
  } else {
    // No penalty yields exactly `keep` gates; rank the last over-full
    // solution by the magnitude of each channel's gated contribution.
    out.exact_support = false;
    out.lambda = lo;
    auto magnitude = [&](std::size_t c) {
      return std::abs(lo_beta(Eigen::Index(c))) * std::sqrt(gram(Eigen::Index(c), Eigen::Index(c)));
    };
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return magnitude(a) > magnitude(b); });
    out.kept.assign(order.begin(), order.begin() + keep);
    std::sort(out.kept.begin(), out.kept.end());
  }
  out.swaps = detail::swap_polish(xtx, xtx * wtw * xtx, out.kept);
  const auto [err, deficient] = refit_error(layer, out.kept);
  out.reconstruction_error = err;
  out.min_norm_fallback = deficient;
  return out;
}

/// Channels kept for a preservation ratio: round-half-up, at least one.
inline int channels_for_action(double action, int in_channels) {
  const int m = int(std::floor(action * in_channels + 0.5));
  return std::clamp(m, 1, in_channels);
}

/// Memoizes channel_select per (layer, keep); safe to share across sessions.
class ReconCache {
 public:
  const ChannelSelection& get(const LinearReconModel& model, std::size_t layer, int keep) {
    {
      std::lock_guard lock(mutex_);
      auto it = cache_.find({layer, keep});
      if (it != cache_.end()) return it->second;
    }
    auto sel = channel_select(model.layers[layer], keep, model.l1_strength);
    std::lock_guard lock(mutex_);
    return cache_.try_emplace({layer, keep}, std::move(sel)).first->second;
  }

 private:
  std::mutex mutex_;
  std::map<std::pair<std::size_t, int>, ChannelSelection> cache_;
};

inline double evaluate_recon(const LinearReconModel& model, const std::vector<double>& actions,
                             ReconCache* cache = nullptr) {
  if (actions.size() != model.layers.size()) throw ShapeError("evaluate_recon: action count mismatch");
  double error = 0.0, energy = 0.0;
  for (std::size_t k = 0; k < actions.size(); ++k) {
    if (!(actions[k] > 0.0 && actions[k] <= 1.0)) throw InvalidArgument("evaluate_recon: actions must lie in (0, 1]");
    const auto& layer = model.layers[k];
    const int keep = channels_for_action(actions[k], layer.in_channels());
    energy += layer.signal_energy();
    if (keep == layer.in_channels()) continue;
    const double e = cache ? cache->get(model, k, keep).reconstruction_error
                           : channel_select(layer, keep, model.l1_strength).reconstruction_error;
    error += e * e;
  }
  if (energy <= 0.0) return 1.0;
  return std::clamp(1.0 - error / energy, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Environment and episodes

/// A scenario bound to its accuracy model. Immutable after construction apart
/// from the internal channel-selection memo.
class Environment {
 public:
  using Model = std::variant<SyntheticNetModel, LinearReconModel>;

  Environment(ScenarioSpec scenario, Model model, double observation_noise = 0.0)
      : scenario_(std::move(scenario)),
        model_(std::move(model)),
        noise_(observation_noise),
        cache_(std::make_shared<ReconCache>()) {
    scenario_.validate();
    if (!(scenario_.total_flops() > 0.0)) {
      throw InvalidScenario("scenario '" + scenario_.scenario_id + "' has zero total flops");
    }
    if (auto* s = std::get_if<SyntheticNetModel>(&model_)) {
      if (s->critical.empty()) {
        for (const auto& l : scenario_.layers) s->critical.push_back(l.critical);
      }
      s->validate(scenario_.layers.size());
    } else {
      std::get<LinearReconModel>(model_).validate(scenario_);
    }
    if (!(noise_ >= 0.0)) throw InvalidArgument("observation noise must be >= 0");
  }

  const ScenarioSpec& scenario() const { return scenario_; }
  const Model& model() const { return model_; }
  double observation_noise() const { return noise_; }

  /// Deterministic accuracy of a complete action vector.
  double evaluate(const std::vector<double>& actions) const {
    if (const auto* s = std::get_if<SyntheticNetModel>(&model_)) return evaluate_synthetic(*s, actions);
    return evaluate_recon(std::get<LinearReconModel>(model_), actions, cache_.get());
  }

  /// Accuracy with optional Gaussian observation noise drawn from `rng`.
  double observe(const std::vector<double>& actions, Rng& rng) const {
    const double acc = evaluate(actions);
    if (noise_ <= 0.0) return acc;
    return std::clamp(acc + rng.normal(0.0, noise_), 0.0, 1.0);
  }

 private:
  ScenarioSpec scenario_;
  Model model_;
  double noise_ = 0.0;
  std::shared_ptr<ReconCache> cache_;
};

struct StepResult {
  double applied_action = 1.0;
  StateVector next_state;
  bool done = false;
};

/// One layer-by-layer rollout over an Environment, which must outlive it.
class EnvironmentSession {
 public:
  explicit EnvironmentSession(const Environment& env) : env_(&env) {}

  const ScenarioSpec& scenario() const { return env_->scenario(); }
  const Environment& environment() const { return *env_; }
  std::size_t cursor() const { return chosen_.size(); }
  bool done() const { return chosen_.size() == scenario().layers.size(); }
  const std::vector<double>& chosen_actions() const { return chosen_; }

  ActionBounds bounds() const { return action_bounds(scenario(), chosen_); }

  /// Observation for the current layer; the all-zero sentinel once done.
  StateVector state() const {
    if (done()) return StateVector{};
    const auto& layers = scenario().layers;
    const std::size_t k = cursor();
    double reduced = 0.0;
    for (std::size_t j = 0; j < k; ++j) reduced += (1.0 - chosen_[j]) * layers[j].flops;
    double remaining = 0.0;
    for (std::size_t j = k + 1; j < layers.size(); ++j) remaining += layers[j].flops;
    const double prev = k == 0 ? 1.0 : chosen_[k - 1];
    return build_state(layers[k], scenario(), reduced, remaining, prev);
  }

  StepResult step(double raw_action) {
    if (done()) throw ProtocolError("step called on a finished episode");
    if (!(raw_action > 0.0 && raw_action <= 1.0)) {
      throw InvalidArgument("step: raw action must lie in (0, 1]");
    }
    const auto b = bounds();
    double applied = raw_action;
    if (applied < b.lo) applied = b.lo;
    if (applied > b.hi + 1e-12) applied = b.hi;
    chosen_.push_back(applied);
    return {applied, state(), done()};
  }

  double evaluate() const {
    if (!done()) throw ProtocolError("evaluate called before the episode finished");
    return env_->evaluate(chosen_);
  }

 private:
  const Environment* env_;
  std::vector<double> chosen_;
};

// ---------------------------------------------------------------------------
// Grid optimum for the synthetic model

struct GridPolicy {
  std::vector<double> actions;
  double accuracy = 0.0;
};

/// Evenly spaced action grid {1/points, 2/points, ..., 1}.
inline std::vector<double> action_grid(int points) {
  std::vector<double> g;
  for (int i = 1; i <= points; ++i) g.push_back(double(i) / points);
  return g;
}

/// Best budget-feasible policy whose actions all lie on `grid`, found by
/// depth-first branch and bound on the separable synthetic deficit.
inline GridPolicy grid_optimum(const ScenarioSpec& scenario, const SyntheticNetModel& model,
                               const std::vector<double>& grid) {
  const std::size_t n = scenario.layers.size();
  const double budget = scenario.target_preservation * scenario.total_flops() + 1e-9;
  double min_grid = *std::min_element(grid.begin(), grid.end());
  std::vector<double> suffix_min(n + 1, 0.0);
  for (std::size_t k = n; k-- > 0;) suffix_min[k] = suffix_min[k + 1] + min_grid * scenario.layers[k].flops;

  std::vector<double> sorted = grid;
  std::sort(sorted.rbegin(), sorted.rend());
  GridPolicy best;
  double best_score = -std::numeric_limits<double>::infinity();
  std::vector<double> current(n);

  std::function<void(std::size_t, double, double)> dfs = [&](std::size_t k, double used, double deficit) {
    if (model.base_accuracy - deficit <= best_score) return;
    if (k == n) {
      best_score = model.base_accuracy - deficit;
      best.actions = current;
      return;
    }
    for (double a : sorted) {
      const double next_used = used + a * scenario.layers[k].flops;
      if (next_used + suffix_min[k + 1] > budget) continue;
      current[k] = a;
      dfs(k + 1, next_used, deficit + model.layer_deficit(k, a));
    }
  };
  dfs(0, 0.0, 0.0);
  if (best.actions.empty()) {
    throw InfeasibleError("grid_optimum: no grid policy meets the budget", 0);
  }
  best.accuracy = std::clamp(best_score, 0.0, 1.0);
  return best;
}

}  // namespace autoprune
