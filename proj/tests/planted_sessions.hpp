#pragma once

// Source-selection sessions with a planted accuracy plateau per record.

#include <map>
#include <memory>
#include <string>

#include "autoprune/transfer.hpp"

namespace autoprune::testing {

/// Each session starts at `start` and rises linearly to its record's plateau
/// over `ramp` trials, plus N(0, noise^2) per trial.
inline SessionFactory planted_factory(std::map<std::string, double> plateaus, std::uint64_t seed, double noise = 0.02,
                                      double start = 0.3, std::size_t ramp = 10) {
  return [=](const HistoricalRecord& r) -> TrialSession {
    const double plateau = plateaus.at(r.id);
    auto rng = std::make_shared<Rng>(seed, "planted-" + r.id);
    auto t = std::make_shared<std::size_t>(0);
    return [=]() {
      const double frac = ramp == 0 ? 1.0 : std::min(1.0, double((*t)++) / double(ramp));
      return start + (plateau - start) * frac + rng->normal(0.0, noise);
    };
  };
}

inline HistoricalRecord bare_record(const std::string& id, const ScenarioSpec& scenario) {
  HistoricalRecord r;
  r.id = id;
  r.scenario = scenario;
  return r;
}

}  // namespace autoprune::testing
