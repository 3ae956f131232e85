#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ttsa/core.hpp"
#include "ttsa/noise.hpp"

namespace ttsa {

/// Step exponent a and predicted decay exponent t of E[V_k] = O(k^-t).
struct RatePair {
    double a;
    double t;
};

/// Smallest admissible distance of a from 1/2 when 1/(2a-1) is formed.
inline constexpr double kExponentGuard = 1e-9;

/// min of the four lines
///   ((1+d11)x - d11)/D11,  x/D12,  (2-d21)(1-x)/D21,  2(1-x)/D22,   Dij = 1 - dij.
/// Throws DomainError if any delta is outside [0, 1).
double m_envelope(double x, const DeltaMatrix& delta);

/// Exact maximizer of m over (1/2, 1]: the max sits where an increasing line
/// crosses a decreasing one, so only those four intersections are evaluated.
/// Ties (within 1e-15) go to the smallest a.
RatePair solve_rate_state(const DeltaMatrix& delta);

/// Closed form for d11 == d12, d21 == d22:
///   a = (D11 + D22) / (D11 + 2 D22),  t = (1 + D22) / (D11 + 2 D22).
RatePair rate_state_closed_form(double delta11, double delta22);

struct TimeRate {
    RatePair rates;
    bool feasible;
    std::vector<std::string> violations;
    /// max deviation among -1+2a, -1+a+t-gamma1, -3+4a+t-gamma2.
    double identity_residual;
};

/// a = (2 - gamma1 + gamma2)/3, t = (2 + 2 gamma1 + gamma2)/3.
TimeRate solve_rate_time(double gamma1, double gamma2);

/// C(alpha0, beta0) of the one-step Lyapunov bound.
double lemma3_constant(const AssumptionConstants& consts, double alpha0, double beta0);

/// Lower bound on alpha/beta (and alpha_k/beta_k) shared by every theorem:
///   (4/mu_f)(2 L_l L_g + (2/mu_g) L_l^2 L_g^2 (L_l+1)^2) v 2c v mu_g/mu_f v 1.
double ratio_threshold(const AssumptionConstants& consts);

/// c (2/mu_f L_f^2 + 2/mu_f L_f^2 L_l^2 + 2 L_l^2) + 1, the psi weight after
/// bounding beta^2 by beta^3/alpha^2.
double psi_weight(const AssumptionConstants& consts);

/// Coefficients of E|xi|^2 and E|psi|^2 in the one-step Lyapunov bound.
double lemma3_xi_coefficient(const AssumptionConstants& consts, double alpha_k, double beta_k);
double lemma3_psi_coefficient(const AssumptionConstants& consts, double alpha_k, double beta_k);

enum class PlanMode { strict, practical };

std::string to_string(PlanMode mode);

struct PlanOptions {
    PlanMode mode = PlanMode::strict;
    /// Practical mode only; defaults to alpha^(1/a), which keeps alpha_0 <= 1.
    std::optional<double> k0;
};

/// Every constant the plans compute; fields that a mode does not use stay empty.
struct PlanConstants {
    double c = 0.0;
    double omega_min = 0.0;
    std::optional<double> lemma3_C;  // C(alpha_0, beta_0) at the planned schedule
    std::optional<double> C_ab;
    std::optional<double> C1;        // C_1(M)
    std::optional<double> C2;        // C_2(M) or C_2'
    std::optional<double> k0_min;
    std::optional<double> beta_min;  // (2/mu_g)(2a + t)
    std::optional<double> B1;
    std::optional<double> B2;
    std::optional<double> D1;
    std::optional<double> D2;
    std::optional<double> D3;
    std::optional<double> omega;
    std::optional<double> q;         // contraction factor e^-eps before clamping
};

struct RatePlan {
    std::string regime;  // "state", "quadratic" or "time"
    PlanMode mode = PlanMode::strict;
    std::optional<RatePair> rates;
    std::optional<double> epsilon;
    StepSchedule schedule;
    double M = 0.0;
    std::optional<double> V0;
    PlanConstants constants;
    bool feasible = false;
    std::vector<std::string> violations;
};

/// Fixed-point iteration limits for M.
inline constexpr int kMaxFixedPointIterations = 200;
inline constexpr double kFixedPointTolerance = 1e-12;

/// Polynomial rate under state-dependent noise. `noise` must be of state kind.
RatePlan theorem1_plan(const AssumptionConstants& consts, const NoiseSpec& noise, double alpha,
                       double beta, double V0, const PlanOptions& options = {});

/// Exponential rate under quadratic noise with constant steps alpha = omega beta.
/// beta* minimizes q(beta) = 1 + D1 beta + D2 beta^2 + D3 beta^3 on (0, beta_cap].
RatePlan theorem2_plan(const AssumptionConstants& consts, const GammaMatrix& gamma, double omega,
                       double beta_cap);

/// Polynomial rate under time-dependent noise.
RatePlan theorem3_plan(const AssumptionConstants& consts, const TimeNoise& noise, double alpha,
                       double beta, double V0, const PlanOptions& options = {});

/// beta = (2/mu_g)(2a + t) and alpha = ratio_threshold * beta.
StepPair minimal_feasible_steps(const AssumptionConstants& consts, const RatePair& rates);

}  // namespace ttsa
