#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ttsa/core.hpp"
#include "ttsa/noise.hpp"
#include "ttsa/problem_spec.hpp"

namespace ttsa {

inline constexpr int kSummarySchemaVersion = 1;
inline constexpr int kDefaultPerDecade = 20;

struct ExperimentConfig {
    std::string problem = "sgd-pr";
    std::size_t dim = 5;  // SGD-PR only; SBO is scalar
    NoiseSpec noise;
    StepSchedule schedule;
    /// Free-form note on where the schedule came from, echoed into outputs.
    std::string schedule_origin = "explicit";
    std::uint64_t iterations = 1000;
    std::uint32_t replicates = 1;
    std::uint64_t master_seed = 1;
    /// Empty means default_checkpoints(iterations, per_decade).
    std::vector<std::uint64_t> checkpoints;
    int per_decade = kDefaultPerDecade;
    /// A single value is broadcast to every coordinate.
    Vector x0{1.0};
    Vector y0{1.0};

    /// Throws ConfigError on any broken invariant.
    void validate() const;
    std::vector<std::uint64_t> resolved_checkpoints() const;
    bool operator==(const ExperimentConfig&) const = default;
};

/// The noise actually injected: psi scales are zeroed when the problem's slow
/// update is noise-free.
NoiseSpec effective_noise(const NoiseSpec& noise, const ProblemSpec& problem);

/// round(10^(j / per_decade)) for j = 0, 1, ... up to `iterations`, deduplicated,
/// with 0 prepended and `iterations` appended.
std::vector<std::uint64_t> default_checkpoints(std::uint64_t iterations, int per_decade);

struct TrajectoryRecord {
    std::uint32_t replicate_id = 0;
    /// Checkpoints reached before any divergence, with their V values.
    std::vector<std::uint64_t> k;
    std::vector<double> V;
    bool diverged = false;
    std::uint64_t diverged_at = 0;
};

/// Iterates the coupled update with the replicate's own noise stream and records
/// V at each checkpoint. Divergence (non-finite or norm above kDivergenceBound)
/// ends the run and leaves a partial record.
TrajectoryRecord run_trajectory(const ExperimentConfig& config, const ProblemSpec& problem,
                                std::uint32_t replicate_id);
TrajectoryRecord run_trajectory(const ExperimentConfig& config, std::uint32_t replicate_id);

struct CheckpointStats {
    std::uint64_t k = 0;
    double mean_V = 0.0;
    double stderr_V = 0.0;
    std::uint32_t n_alive = 0;
    bool operator==(const CheckpointStats&) const = default;
};

struct EnsembleSummary {
    ExperimentConfig config;
    std::vector<CheckpointStats> checkpoints;
    std::uint32_t diverged = 0;
    double wall_time_s = 0.0;
    std::string version;
    bool operator==(const EnsembleSummary&) const = default;
};

struct RunOptions {
    /// 0 picks std::thread::hardware_concurrency().
    unsigned threads = 0;
};

/// Sum in a fixed pairwise tree over the given order.
double pairwise_sum(std::span<const double> values);

/// Aggregates finished trajectories (in any order) into per-checkpoint moments.
/// Records are reduced in replicate_id order, so the result does not depend on
/// how they were produced.
EnsembleSummary summarize(const ExperimentConfig& config, std::vector<TrajectoryRecord> records);

/// Runs every replicate and summarizes. Throws DivergenceError if all diverge.
EnsembleSummary run_ensemble(const ExperimentConfig& config, const RunOptions& options = {});

/// Writes `<path>` (JSON) and the companion CSV with the same stem.
void persist(const EnsembleSummary& summary, const std::filesystem::path& json_path);

/// CSV body `k,mean_V,stderr_V,n_alive` with 17 significant digits.
std::string summary_csv(const EnsembleSummary& summary);

/// Reads a summary JSON (or a bare CSV, which yields checkpoints only).
/// Throws IoError, SchemaError.
EnsembleSummary load_summary(const std::filesystem::path& path);

std::filesystem::path csv_path_for(const std::filesystem::path& json_path);

}  // namespace ttsa
