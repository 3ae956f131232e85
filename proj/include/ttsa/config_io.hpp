#pragma once

#include <filesystem>

#include "json.hpp"

#include "ttsa/harness.hpp"

namespace ttsa {

/// Explicit form of a config: the schedule is always written out in full.
nlohmann::json config_to_json(const ExperimentConfig& config);

/// Parses a config document. The "schedule" object is either explicit
/// ({alpha, beta, a, b, k0} or {constant: true, alpha, beta}) or derived from
/// the rate planner via {"plan": "auto", ...}:
///   state/time noise: a from the plan, b = 1; alpha, beta default to the
///   minimal feasible pair and k0 to alpha^(1/a);
///   quadratic noise:  constant steps from the exponential plan with
///   {"omega", "beta_cap"} (omega defaults to the ratio threshold).
/// Throws ConfigError naming the offending field.
ExperimentConfig config_from_json(const nlohmann::json& doc);

ExperimentConfig load_config(const std::filesystem::path& path);

nlohmann::json noise_to_json(const NoiseSpec& noise);
NoiseSpec noise_from_json(const nlohmann::json& doc);

}  // namespace ttsa
