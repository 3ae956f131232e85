#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "json.hpp"

#include "ttsa/core.hpp"
#include "ttsa/harness.hpp"
#include "ttsa/noise.hpp"
#include "ttsa/problem_spec.hpp"

namespace ttsa {

struct FitResult {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    double residual_mse = 0.0;
    double k_min = 0.0;
    double k_max = 0.0;
    std::size_t n_points = 0;
};

enum class FitKind { loglog, semilog };

/// Least squares of log(V) on log(k) (loglog) or on k (semilog) over the points
/// with k in [k_min, k_max]. Points with V <= 0 (and k <= 0 for loglog) are
/// dropped with a warning. Throws InsufficientDataError below two points.
FitResult fit_series(std::span<const double> k, std::span<const double> v, double k_min,
                     double k_max, FitKind kind);

/// Decay exponent estimate is -slope.
FitResult fit_loglog(const EnsembleSummary& summary, double k_min, double k_max);
/// Contraction estimate is -slope.
FitResult fit_semilog(const EnsembleSummary& summary, double k_min, double k_max);

nlohmann::json to_json(const FitResult& fit);

struct Lemma3StateResult {
    double V_k = 0.0;
    double lhs_mean = 0.0;    // Monte-Carlo mean of V_{k+1}
    double lhs_stderr = 0.0;  // its standard error; 0 without noise
    double rhs = 0.0;
    double margin = 0.0;      // rhs - lhs_mean
    /// margin / lhs_stderr, or the raw margin when lhs_stderr == 0.
    double margin_se = 0.0;
};

struct Lemma3Report {
    double C = 0.0;  // C(alpha_0, beta_0)
    double ratio_bound = 0.0;
    bool noise_free = false;
    std::vector<Lemma3StateResult> states;
    double min_margin_se() const;
    double min_margin() const;
};

/// Compares the Monte-Carlo mean of V_{k+1} from each state against the
/// one-step Lyapunov bound. V_{k+1} is formed with the step-k ratio
/// beta_k / alpha_k. The noise variances are the exact targets at each state.
/// Throws PreconditionError when alpha_k / beta_k is below the required ratio.
Lemma3Report check_lemma3_bound(const ProblemSpec& problem, const NoiseSpec& noise,
                                const StepSchedule& sched, std::uint64_t k,
                                const std::vector<IterateState>& states, std::size_t mc_samples,
                                std::uint64_t master_seed, unsigned threads = 1);

/// Largest |fd - analytic| / max(1, |analytic|) over every derivative check,
/// point and coordinate, using central differences with step h.
double grad_check(const ProblemSpec& problem, const std::vector<IterateState>& points, double h);

}  // namespace ttsa
