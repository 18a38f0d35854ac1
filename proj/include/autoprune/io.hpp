#pragma once

// JSON trees for scenarios, environments, traces and library metadata, plus
// CSV formatting of per-trial logs.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>

#include "autoprune/agent.hpp"
#include "autoprune/assistant.hpp"
#include "autoprune/core.hpp"
#include "autoprune/env.hpp"
#include "autoprune/errors.hpp"
#include "autoprune/transfer.hpp"

namespace autoprune {

using json = nlohmann::json;

namespace detail {

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  return j.at(key).get<T>();
}

inline const json& require(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError(where + ": missing field '" + key + "'");
  return j.at(key);
}

}  // namespace detail

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("'" + path + "': " + e.what());
  }
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path + "'");
  out << text;
  if (!out) throw Error("short write to '" + path + "'");
}

// ---------------------------------------------------------------------------
// Scenario

inline json to_json(const LayerDescriptor& l) {
  return json{{"index", l.index},
              {"kind", std::string(to_string(l.kind))},
              {"in_channels", l.in_channels},
              {"out_channels", l.out_channels},
              {"kernel_size", l.kernel_size},
              {"stride", l.stride},
              {"feature_height", l.feature_height},
              {"feature_width", l.feature_width},
              {"flops", l.flops},
              {"critical", l.critical}};
}

inline LayerDescriptor layer_from_json(const json& j, std::size_t position) {
  const std::string where = "layer " + std::to_string(position);
  try {
    const auto kind = layer_kind_from_string(detail::get_or<std::string>(j, "kind", "standard"));
    std::optional<double> flops;
    if (j.contains("flops") && !j.at("flops").is_null()) flops = j.at("flops").get<double>();
    std::optional<bool> critical;
    if (j.contains("critical") && !j.at("critical").is_null()) critical = j.at("critical").get<bool>();
    return LayerDescriptor::make(detail::get_or<std::size_t>(j, "index", position), kind,
                                 detail::require(j, "in_channels", where).get<int>(),
                                 detail::require(j, "out_channels", where).get<int>(),
                                 detail::get_or<int>(j, "kernel_size", 1), detail::get_or<int>(j, "stride", 1),
                                 detail::require(j, "feature_height", where).get<int>(),
                                 detail::require(j, "feature_width", where).get<int>(), flops, critical);
  } catch (const json::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

inline json to_json(const ScenarioSpec& s) {
  json layers = json::array();
  for (const auto& l : s.layers) layers.push_back(to_json(l));
  return json{{"scenario_id", s.scenario_id},
              {"target_preservation", s.target_preservation},
              {"dataset_tag", s.dataset_tag},
              {"environment_kind", std::string(to_string(s.environment_kind))},
              {"layers", layers}};
}

inline ScenarioSpec scenario_from_json(const json& j) {
  ScenarioSpec s;
  try {
    s.scenario_id = detail::require(j, "scenario_id", "scenario").get<std::string>();
    s.target_preservation = detail::require(j, "target_preservation", "scenario").get<double>();
    s.dataset_tag = detail::get_or<std::string>(j, "dataset_tag", "");
    s.environment_kind = environment_kind_from_string(detail::get_or<std::string>(j, "environment_kind", "synthetic"));
    const auto& layers = detail::require(j, "layers", "scenario");
    for (std::size_t i = 0; i < layers.size(); ++i) s.layers.push_back(layer_from_json(layers.at(i), i));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("scenario: ") + e.what());
  }
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------
// Environment models

inline json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty() || !j.at(0).is_array()) throw ConfigError(where + ": expected a non-empty 2-D array");
  const auto rows = Eigen::Index(j.size());
  const auto cols = Eigen::Index(j.at(0).size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j.at(std::size_t(r));
    if (Eigen::Index(row.size()) != cols) throw ConfigError(where + ": ragged matrix");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row.at(std::size_t(c)).get<double>();
  }
  return m;
}

/// Environment description: `{"synthetic": {...}}` or `{"linear_recon": {...}}`
/// with optional "observation_noise". Synthetic fields default to a model
/// with uniform importance; recon layers are inline or generated from a seed.
inline Environment environment_from_json(const json& j, const ScenarioSpec& scenario) {
  const double noise = detail::get_or<double>(j, "observation_noise", 0.0);
  try {
    if (scenario.environment_kind == EnvironmentKind::synthetic) {
      const json m = j.contains("synthetic") ? j.at("synthetic") : json::object();
      SyntheticNetModel model;
      model.base_accuracy = detail::get_or<double>(m, "base_accuracy", 0.9);
      model.criticality_penalty = detail::get_or<double>(m, "criticality_penalty", 0.0);
      model.curvature = detail::get_or<double>(m, "curvature", 2.0);
      model.layer_importance = m.contains("layer_importance")
                                   ? m.at("layer_importance").get<std::vector<double>>()
                                   : std::vector<double>(scenario.layers.size(), 0.1);
      return Environment(scenario, model, noise);
    }
    const json m = j.contains("linear_recon") ? j.at("linear_recon") : json::object();
    const double l1 = detail::get_or<double>(m, "l1_strength", 0.0);
    if (m.contains("layers")) {
      LinearReconModel model;
      model.l1_strength = l1;
      for (std::size_t k = 0; k < m.at("layers").size(); ++k) {
        const auto& lj = m.at("layers").at(k);
        const std::string where = "linear_recon layer " + std::to_string(k);
        LinearReconLayer layer;
        layer.weight = matrix_from_json(detail::require(lj, "weight", where), where + " weight");
        layer.calibration = matrix_from_json(detail::require(lj, "calibration", where), where + " calibration");
        model.layers.push_back(std::move(layer));
      }
      return Environment(scenario, model, noise);
    }
    const auto seed = detail::get_or<std::uint64_t>(m, "seed", 0);
    const int samples = detail::get_or<int>(m, "calibration_samples", 64);
    return Environment(scenario, LinearReconModel::generate(scenario, seed, samples, l1), noise);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("environment: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Traces and records

inline json to_json(const EpisodeTrace& t) {
  json steps = json::array();
  for (const auto& s : t.per_layer) {
    steps.push_back(json{{"state", s.state.values()}, {"action", s.action}, {"proposed_action", s.proposed_action}});
  }
  return json{{"scenario_id", t.scenario_id}, {"trial_index", t.trial_index}, {"accuracy", t.accuracy},
              {"per_layer", steps}};
}

inline EpisodeTrace trace_from_json(const json& j) {
  EpisodeTrace t;
  t.scenario_id = j.at("scenario_id").get<std::string>();
  t.trial_index = j.at("trial_index").get<std::size_t>();
  t.accuracy = j.at("accuracy").get<double>();
  for (const auto& s : j.at("per_layer")) {
    LayerStep step;
    const auto values = s.at("state").get<std::vector<double>>();
    if (values.size() != StateVector::kDim) throw ShapeError("trace state has the wrong dimension");
    std::array<double, StateVector::kDim> arr{};
    std::copy(values.begin(), values.end(), arr.begin());
    step.state = StateVector(arr);
    step.action = s.at("action").get<double>();
    step.proposed_action = detail::get_or<double>(s, "proposed_action", step.action);
    t.per_layer.push_back(step);
  }
  return t;
}

inline constexpr int kRecordFormat = 1;

/// Everything in a record except the two parameter blobs.
inline json record_meta_to_json(const HistoricalRecord& r) {
  json traces = json::array();
  for (const auto& t : r.traces) traces.push_back(to_json(t));
  return json{{"format", kRecordFormat},
              {"id", r.id},
              {"model_tag", r.model_tag},
              {"scenario", to_json(r.scenario)},
              {"invariant_mode", r.invariant_mode},
              {"created_at", r.created_at},
              {"final_curve", json{{"rewards", r.final_curve.rewards}}},
              {"traces", traces}};
}

inline HistoricalRecord record_meta_from_json(const json& j) {
  HistoricalRecord r;
  try {
    if (detail::get_or<int>(j, "format", 0) != kRecordFormat) throw LibraryError("unsupported record format");
    r.id = j.at("id").get<std::string>();
    r.model_tag = detail::get_or<std::string>(j, "model_tag", "");
    r.scenario = scenario_from_json(j.at("scenario"));
    r.invariant_mode = j.at("invariant_mode").get<bool>();
    r.created_at = j.at("created_at").get<std::int64_t>();
    r.final_curve.rewards = j.at("final_curve").at("rewards").get<std::vector<double>>();
    for (const auto& t : j.at("traces")) r.traces.push_back(trace_from_json(t));
  } catch (const json::exception& e) {
    throw LibraryError(std::string("record metadata: ") + e.what());
  }
  return r;
}

// ---------------------------------------------------------------------------
// CSV

/// Shortest round-trip decimal form of `v`.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  if (res.ec != std::errc{}) throw Error("cannot format number");
  return std::string(buf, res.ptr);
}

inline constexpr const char* kTrialCsvHeader =
    "trial_index,raw_accuracy,ema_accuracy,buffer_size,noise_std,action_source,"
    "accept_probability,accepted,chosen_history_id,similarity_S,metric_M";

inline std::string trial_csv(const std::vector<TrialRow>& rows) {
  std::string out = kTrialCsvHeader;
  out += '\n';
  for (const auto& r : rows) {
    out += std::to_string(r.trial_index) + ',' + format_double(r.raw_accuracy) + ',' + format_double(r.ema_accuracy) +
           ',' + std::to_string(r.buffer_size) + ',' + format_double(r.noise_std) + ',' + r.action_source + ',' +
           format_double(r.accept_probability) + ',' + (r.accepted ? "1" : "0") + ',' + r.chosen_history_id + ',' +
           (r.similarity_s ? format_double(*r.similarity_s) : "") + ',' +
           (r.metric_m ? format_double(*r.metric_m) : "") + '\n';
  }
  return out;
}

/// Splits one CSV line on commas (the trial log never quotes fields).
inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace autoprune
