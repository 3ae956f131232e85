#pragma once

#include <cstdint>
#include <span>

#include "ttsa/problem_spec.hpp"

namespace ttsa {

/// Iterates whose norm exceeds this are treated as diverged.
inline constexpr double kDivergenceBound = 1e12;

struct StepPair {
    double alpha_k;
    double beta_k;
};

/// alpha_k = alpha / (k+1+k0)^a, beta_k = beta / (k+1+k0)^b.
///
/// a == b == 0 is the constant-step variant (alpha_k = alpha, beta_k = beta).
/// Otherwise a must lie in (1/2, 1] and b >= 0.
struct StepSchedule {
    double alpha = 1.0;
    double beta = 1.0;
    double a = 2.0 / 3.0;
    double b = 1.0;
    double k0 = 0.0;

    static StepSchedule constant(double alpha, double beta);

    bool is_constant() const noexcept { return a == 0.0 && b == 0.0; }
    void validate() const;

    bool operator==(const StepSchedule&) const = default;
};

StepPair step_sizes(std::uint64_t k, const StepSchedule& sched);

struct IterateState {
    std::uint64_t k = 0;
    Vector x;
    Vector y;

    bool operator==(const IterateState&) const = default;
};

/// One application of the coupled update
///   x' = x - alpha_k (f(x, y) + xi),  y' = y - beta_k (g(x, y) + psi).
/// Throws DivergenceError when the result is not finite.
IterateState step(const IterateState& state, const ProblemSpec& problem,
                  std::span<const double> xi, std::span<const double> psi,
                  const StepSchedule& sched);

/// Allocation-free variant of `step` for long trajectories. Holds scratch
/// buffers sized for one problem; not shareable between threads.
class Stepper {
public:
    explicit Stepper(const ProblemSpec& problem);

    void advance(IterateState& state, std::span<const double> xi, std::span<const double> psi,
                 const StepSchedule& sched);

private:
    const ProblemSpec* problem_;
    Vector fx_;
    Vector gy_;
};

struct Residuals {
    Vector x_hat;
    Vector y_hat;

    double x_sq() const noexcept;
    double y_sq() const noexcept;
};

/// x_hat = x - lambda(y), y_hat = y - y*. Throws ConfigError if the problem has
/// no lambda map or no fixed point.
Residuals residuals(const IterateState& state, const ProblemSpec& problem);

struct LyapunovValue {
    double v;
    double c;
};

/// c = 4 L_g^2 / (mu_f mu_g).
double coupling_constant(const AssumptionConstants& consts);

/// V = c (beta_k / alpha_k) |x_hat|^2 + |y_hat|^2. For the constant-step
/// schedule the ratio is beta / alpha.
LyapunovValue lyapunov(const Residuals& res, const StepSchedule& sched, std::uint64_t k,
                       const AssumptionConstants& consts);

/// Same functional from squared residual norms.
double lyapunov_value(double x_sq, double y_sq, const StepSchedule& sched, std::uint64_t k,
                      double c);

double squared_norm(std::span<const double> v) noexcept;

}  // namespace ttsa
