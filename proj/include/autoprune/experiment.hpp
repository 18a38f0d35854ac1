#pragma once

// Experiment configs, the end-to-end run pipeline (source choice, transfer,
// buffer seeding, assisted or plain training, persistence) and the
// convergence report over trial CSVs.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "autoprune/agent.hpp"
#include "autoprune/assistant.hpp"
#include "autoprune/core.hpp"
#include "autoprune/env.hpp"
#include "autoprune/errors.hpp"
#include "autoprune/io.hpp"
#include "autoprune/library.hpp"
#include "autoprune/transfer.hpp"

namespace autoprune {

enum class RunMode { scratch, vanilla_transfer, augmented_transfer, assistant };

inline std::string_view to_string(RunMode m) {
  switch (m) {
    case RunMode::scratch: return "scratch";
    case RunMode::vanilla_transfer: return "vanilla-transfer";
    case RunMode::augmented_transfer: return "augmented-transfer";
    case RunMode::assistant: return "assistant";
  }
  return "scratch";
}

inline RunMode run_mode_from_string(std::string_view s) {
  if (s == "scratch") return RunMode::scratch;
  if (s == "vanilla-transfer") return RunMode::vanilla_transfer;
  if (s == "augmented-transfer") return RunMode::augmented_transfer;
  if (s == "assistant") return RunMode::assistant;
  throw ConfigError("unknown mode '" + std::string(s) + "'");
}

struct TransferOptions {
  std::size_t selection_trials = 60;
  std::size_t window = kSuperiorityWindow;
  std::size_t min_trials = kSuperiorityMinTrials;
};

struct ExperimentConfig {
  ScenarioSpec scenario;
  json environment = json::object();
  RunMode mode = RunMode::scratch;
  std::vector<std::string> source_ids;
  bool auto_source = false;
  std::size_t trials = 200;
  std::uint64_t seed = 0;
  AgentConfig agent;
  AssistantConfig assistant;
  HistoryIndex::BuildOptions history;
  TransferOptions transfer;
  std::string output_dir = "out";
  std::string library = "library";
  std::string model_tag;

  bool uses_invariant_actor() const {
    return agent.invariant_mode || mode == RunMode::augmented_transfer || mode == RunMode::assistant;
  }

  void validate() const {
    scenario.validate();
    if (trials < 1) throw ConfigError("trials must be >= 1");
    if (mode != RunMode::scratch && source_ids.empty() && !auto_source) {
      throw ConfigError("mode '" + std::string(to_string(mode)) + "' needs source ids or \"auto\"");
    }
    assistant.validate();
  }
};

inline AgentConfig agent_config_from_json(const json& j, AgentConfig c = {}) {
  c.hidden_width = detail::get_or(j, "hidden_width", c.hidden_width);
  c.actor_lr = detail::get_or(j, "actor_lr", c.actor_lr);
  c.critic_lr = detail::get_or(j, "critic_lr", c.critic_lr);
  c.tau = detail::get_or(j, "tau", c.tau);
  c.discount = detail::get_or(j, "discount", c.discount);
  c.batch_size = detail::get_or(j, "batch_size", c.batch_size);
  c.buffer_capacity = detail::get_or(j, "buffer_capacity", c.buffer_capacity);
  c.updates_per_transition = detail::get_or(j, "updates_per_transition", c.updates_per_transition);
  c.invariant_mode = detail::get_or(j, "invariant_mode", c.invariant_mode);
  c.invariant_ceiling = detail::get_or(j, "invariant_ceiling", c.invariant_ceiling);
  if (j.contains("noise")) {
    const auto& n = j.at("noise");
    c.noise.initial_std = detail::get_or(n, "initial_std", c.noise.initial_std);
    c.noise.final_std = detail::get_or(n, "final_std", c.noise.final_std);
    c.noise.anneal_fraction = detail::get_or(n, "anneal_fraction", c.noise.anneal_fraction);
  }
  return c;
}

inline AssistantConfig assistant_config_from_json(const json& j, AssistantConfig c = {}) {
  c.sigma = detail::get_or(j, "sigma", c.sigma);
  c.omega = detail::get_or(j, "omega", c.omega);
  c.top_n = detail::get_or(j, "top_n", c.top_n);
  c.switch_trial = detail::get_or(j, "switch_trial", c.switch_trial);
  c.explore_phase_fraction = detail::get_or(j, "explore_phase_fraction", c.explore_phase_fraction);
  c.noise_amplitude0 = detail::get_or(j, "noise_amplitude0", c.noise_amplitude0);
  c.accept_top_fraction = detail::get_or(j, "accept_top_fraction", c.accept_top_fraction);
  c.accept_decay = detail::get_or(j, "accept_decay", c.accept_decay);
  c.batch_window = detail::get_or(j, "batch_window", c.batch_window);
  c.defer_updates = detail::get_or(j, "defer_updates", c.defer_updates);
  return c;
}

inline ExperimentConfig experiment_config_from_json(const json& j) {
  ExperimentConfig c;
  try {
    c.scenario = scenario_from_json(detail::require(j, "scenario", "config"));
    c.environment = detail::get_or<json>(j, "environment", json::object());
    c.mode = run_mode_from_string(detail::get_or<std::string>(j, "mode", "scratch"));
    if (j.contains("sources")) {
      const auto& s = j.at("sources");
      if (s.is_string() && s.get<std::string>() == "auto") {
        c.auto_source = true;
      } else {
        c.source_ids = s.get<std::vector<std::string>>();
      }
    }
    c.trials = detail::get_or<std::size_t>(j, "trials", c.trials);
    c.seed = detail::get_or<std::uint64_t>(j, "seed", c.seed);
    if (j.contains("agent")) c.agent = agent_config_from_json(j.at("agent"));
    if (j.contains("assistant")) {
      const auto& a = j.at("assistant");
      c.assistant = assistant_config_from_json(a);
      c.history.augment = detail::get_or(a, "augment_history", c.history.augment);
      c.history.best_traces = detail::get_or(a, "best_traces", c.history.best_traces);
    }
    if (j.contains("transfer")) {
      const auto& t = j.at("transfer");
      c.transfer.selection_trials = detail::get_or(t, "selection_trials", c.transfer.selection_trials);
      c.transfer.window = detail::get_or(t, "window", c.transfer.window);
      c.transfer.min_trials = detail::get_or(t, "min_trials", c.transfer.min_trials);
    }
    c.output_dir = detail::get_or<std::string>(j, "output_dir", c.output_dir);
    c.library = detail::get_or<std::string>(j, "library", c.library);
    c.model_tag = detail::get_or<std::string>(j, "model_tag", c.scenario.scenario_id);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  return experiment_config_from_json(read_json_file(path));
}

// ---------------------------------------------------------------------------
// Source selection report

inline std::string selection_csv(const SourceSelection& sel) {
  std::string out = "record_id,rank,trial_index,raw_accuracy,ema_accuracy,stopped_at,stopped_by,chosen\n";
  for (std::size_t c = 0; c < sel.candidates.size(); ++c) {
    const auto& r = sel.candidates[c];
    for (std::size_t t = 0; t < r.rewards.size(); ++t) {
      out += r.record_id + ',' + std::to_string(r.rank) + ',' + std::to_string(t) + ',' + format_double(r.rewards[t]) +
             ',' + format_double(r.ema[t]) + ',' + (r.stopped_at ? std::to_string(*r.stopped_at) : "") + ',' +
             r.stopped_by.value_or("") + ',' + (c == sel.chosen ? "1" : "0") + '\n';
    }
  }
  return out;
}

/// Library records usable as weight sources for `config`.
inline std::vector<HistoricalRecord> transfer_candidates(const ExperimentConfig& config, const ModelLibrary& lib) {
  std::vector<HistoricalRecord> out;
  for (auto& r : lib.load_all()) {
    if (r.invariant_mode == config.uses_invariant_actor()) out.push_back(std::move(r));
  }
  return out;
}

inline SourceSelection run_source_selection(const ExperimentConfig& config, const Environment& env,
                                            const std::vector<HistoricalRecord>& candidates) {
  std::vector<const HistoricalRecord*> ptrs;
  for (const auto& r : candidates) ptrs.push_back(&r);
  AgentConfig agent_cfg = config.agent;
  agent_cfg.invariant_mode = config.uses_invariant_actor();
  SelectionOptions opts;
  opts.max_trials = std::max(config.transfer.selection_trials, config.transfer.min_trials);
  opts.window = config.transfer.window;
  opts.min_trials = config.transfer.min_trials;
  return select_source(ptrs, env.scenario(),
                       transfer_session_factory(env, agent_cfg, config.seed, opts.max_trials), opts);
}

// ---------------------------------------------------------------------------
// Run

struct RunSummary {
  std::string record_id;
  std::vector<std::string> sources;
  std::optional<SourceSelection> selection;
  TrainResult result;
  EpisodeTrace policy;
  SeedReport seeded;
};

/// Executes one experiment and writes curve.csv, policy.json (and
/// selection.csv when the source was chosen automatically) into the output
/// directory, then adds the run to the library as a new record.
inline RunSummary run(const ExperimentConfig& config, std::ostream* log = &std::cerr) {
  config.validate();
  const Environment env = environment_from_json(config.environment, config.scenario);
  action_bounds(env.scenario(), {});  // reports an infeasible budget before any training
  ModelLibrary lib(config.library);

  AgentConfig agent_cfg = config.agent;
  agent_cfg.invariant_mode = config.uses_invariant_actor();
  RunSummary out;

  std::vector<HistoricalRecord> sources;
  if (config.mode != RunMode::scratch) {
    if (config.auto_source) {
      auto candidates = transfer_candidates(config, lib);
      if (candidates.empty()) {
        throw LibraryError(std::string("no library record with invariant_mode=") +
                           (agent_cfg.invariant_mode ? "true" : "false") + " to select from");
      }
      out.selection = run_source_selection(config, env, candidates);
      sources.push_back(std::move(candidates[out.selection->chosen]));
    } else {
      for (const auto& id : config.source_ids) sources.push_back(lib.load(id));
    }
    for (const auto& s : sources) out.sources.push_back(s.id);
  }

  DdpgAgent agent = DdpgAgent::create(agent_cfg, config.seed);
  if (!sources.empty()) vanilla_transfer(sources.front(), agent);
  ReplayBuffer buffer(agent_cfg.buffer_capacity);
  std::vector<const HistoricalRecord*> source_ptrs;
  for (const auto& s : sources) source_ptrs.push_back(&s);

  if (config.mode == RunMode::augmented_transfer || config.mode == RunMode::assistant) {
    Rng shuffle(config.seed, "shuffle");
    out.seeded = seed_buffer(source_ptrs, env, buffer, shuffle);
  }
  if (config.mode == RunMode::assistant) {
    const auto index = HistoryIndex::build(source_ptrs, env, config.history);
    out.result = assisted_train(agent, env, buffer, index, config.assistant, config.trials, config.seed, log);
  } else {
    out.result = train(agent, env, buffer, config.trials, config.seed);
  }
  out.policy = greedy_rollout(agent, env);

  const fs::path dir(config.output_dir);
  fs::create_directories(dir);
  write_text_file((dir / "curve.csv").string(), trial_csv(out.result.rows));
  json policy{{"scenario_id", env.scenario().scenario_id},
              {"actions", out.policy.actions()},
              {"accuracy", out.policy.accuracy},
              {"realized_preservation", realized_preservation(env.scenario(), out.policy.actions())}};
  write_text_file((dir / "policy.json").string(), policy.dump(1) + "\n");
  if (out.selection) write_text_file((dir / "selection.csv").string(), selection_csv(*out.selection));

  out.record_id = lib.unique_id(config.scenario.scenario_id + "-" + std::string(to_string(config.mode)) + "-s" +
                                std::to_string(config.seed));
  lib.insert(make_record(out.record_id, config.model_tag, env.scenario(), agent, out.result, record_timestamp()));
  return out;
}

// ---------------------------------------------------------------------------
// Report

struct CurveSummary {
  std::string name;
  std::vector<double> ema;
  std::optional<std::size_t> convergence_trial;  // 1-based trial count
  double final_smoothed = 0.0;
  double best_smoothed = 0.0;
  std::optional<double> speedup;  // baseline trials / this run's trials
};

struct ReportTable {
  double threshold = 0.0;
  std::vector<CurveSummary> runs;
};

/// Trials needed for `ema` to first reach `threshold`, counted from 1.
inline std::optional<std::size_t> convergence_trial(const std::vector<double>& ema, double threshold) {
  for (std::size_t i = 0; i < ema.size(); ++i) {
    if (ema[i] >= threshold) return i + 1;
  }
  return std::nullopt;
}

inline constexpr double kDefaultThresholdFraction = 0.98;

/// Compares raw-accuracy curves; the first is the baseline. Without an
/// explicit threshold, 98% of the best smoothed accuracy across all runs.
inline ReportTable report_curves(const std::vector<std::pair<std::string, std::vector<double>>>& curves,
                                 std::optional<double> threshold = std::nullopt) {
  ReportTable table;
  double best = 0.0;
  for (const auto& [name, raw] : curves) {
    CurveSummary s;
    s.name = name;
    s.ema = ema_smooth(raw, 0.5);
    if (!s.ema.empty()) {
      s.final_smoothed = s.ema.back();
      s.best_smoothed = *std::max_element(s.ema.begin(), s.ema.end());
    }
    best = std::max(best, s.best_smoothed);
    table.runs.push_back(std::move(s));
  }
  table.threshold = threshold.value_or(kDefaultThresholdFraction * best);
  for (auto& s : table.runs) s.convergence_trial = convergence_trial(s.ema, table.threshold);
  if (!table.runs.empty() && table.runs.front().convergence_trial) {
    const double base = double(*table.runs.front().convergence_trial);
    for (auto& s : table.runs) {
      if (s.convergence_trial) s.speedup = base / double(*s.convergence_trial);
    }
  }
  return table;
}

/// Raw accuracies from a trial CSV.
inline std::vector<double> read_curve_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("'" + path + "' is empty");
  const auto header = split_csv_line(line);
  const auto col = std::find(header.begin(), header.end(), "raw_accuracy");
  if (col == header.end()) throw ConfigError("'" + path + "' has no raw_accuracy column");
  const auto idx = std::size_t(col - header.begin());
  std::vector<double> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() <= idx) throw ConfigError("'" + path + "': short row");
    try {
      out.push_back(std::stod(fields[idx]));
    } catch (const std::exception&) {
      throw ConfigError("'" + path + "': bad accuracy '" + fields[idx] + "'");
    }
  }
  return out;
}

inline ReportTable report(const std::vector<std::string>& csv_paths, std::optional<double> threshold = std::nullopt) {
  std::vector<std::pair<std::string, std::vector<double>>> curves;
  for (const auto& p : csv_paths) curves.emplace_back(p, read_curve_csv(p));
  return report_curves(curves, threshold);
}

inline std::string report_csv(const ReportTable& t) {
  std::string out = "run,threshold,convergence_trial,final_smoothed_accuracy,best_smoothed_accuracy,speedup\n";
  for (const auto& s : t.runs) {
    out += s.name + ',' + format_double(t.threshold) + ',' +
           (s.convergence_trial ? std::to_string(*s.convergence_trial) : "no-converge") + ',' +
           format_double(s.final_smoothed) + ',' + format_double(s.best_smoothed) + ',' +
           (s.speedup ? format_double(*s.speedup) : "") + '\n';
  }
  return out;
}

}  // namespace autoprune
