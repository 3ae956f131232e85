#include "ttsa/core.hpp"

#include <cmath>
#include <string>

#include "ttsa/error.hpp"

namespace ttsa {

void AssumptionConstants::validate() const {
    if (!(L_lambda >= 0.0)) throw ConfigError("L_lambda must be >= 0");
    if (!(L_f > 0.0) || !(mu_f > 0.0) || !(L_g > 0.0) || !(mu_g > 0.0))
        throw ConfigError("L_f, mu_f, L_g, mu_g must be positive");
    if (mu_f > L_f) throw ConfigError("mu_f exceeds L_f");
    if (mu_g > L_g) throw ConfigError("mu_g exceeds L_g");
}

Vector ProblemSpec::eval_f(std::span<const double> x, std::span<const double> y) const {
    Vector out(d1);
    f(x, y, out);
    return out;
}

Vector ProblemSpec::eval_g(std::span<const double> x, std::span<const double> y) const {
    Vector out(d2);
    g(x, y, out);
    return out;
}

Vector ProblemSpec::eval_lambda(std::span<const double> y) const {
    if (!lambda_map) throw ConfigError("problem '" + id + "' has no analytic lambda map");
    Vector out(d1);
    lambda_map(y, out);
    return out;
}

StepSchedule StepSchedule::constant(double alpha, double beta) {
    StepSchedule s;
    s.alpha = alpha;
    s.beta = beta;
    s.a = 0.0;
    s.b = 0.0;
    s.k0 = 0.0;
    return s;
}

void StepSchedule::validate() const {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("schedule alpha must be positive");
    if (!(beta > 0.0) || !std::isfinite(beta)) throw ConfigError("schedule beta must be positive");
    if (!(k0 >= 0.0) || !std::isfinite(k0)) throw ConfigError("schedule k0 must be nonnegative");
    if (is_constant()) return;
    if (!(a > 0.5 && a <= 1.0)) throw ConfigError("schedule exponent a must lie in (1/2, 1]");
    if (!(b >= 0.0) || !std::isfinite(b)) throw ConfigError("schedule exponent b must be >= 0");
}

StepPair step_sizes(std::uint64_t k, const StepSchedule& sched) {
    if (sched.is_constant()) return {sched.alpha, sched.beta};
    const double shift = static_cast<double>(k) + 1.0 + sched.k0;
    return {sched.alpha / std::pow(shift, sched.a), sched.beta / std::pow(shift, sched.b)};
}

namespace {

void check_dims(const IterateState& state, const ProblemSpec& problem, std::span<const double> xi,
                std::span<const double> psi) {
    if (state.x.size() != problem.d1 || state.y.size() != problem.d2)
        throw ConfigError("iterate dimensions do not match problem '" + problem.id + "'");
    if (xi.size() != problem.d1 || psi.size() != problem.d2)
        throw ConfigError("noise dimensions do not match problem '" + problem.id + "'");
}

void check_finite(const IterateState& state) {
    for (double v : state.x)
        if (!std::isfinite(v))
            throw DivergenceError("non-finite fast iterate at iteration " + std::to_string(state.k),
                                  state.k);
    for (double v : state.y)
        if (!std::isfinite(v))
            throw DivergenceError("non-finite slow iterate at iteration " + std::to_string(state.k),
                                  state.k);
}

}  // namespace

Stepper::Stepper(const ProblemSpec& problem)
    : problem_(&problem), fx_(problem.d1), gy_(problem.d2) {}

void Stepper::advance(IterateState& state, std::span<const double> xi,
                      std::span<const double> psi, const StepSchedule& sched) {
    const auto [alpha_k, beta_k] = step_sizes(state.k, sched);
    // Both drifts are evaluated at the old (x, y) before either is updated.
    problem_->f(state.x, state.y, fx_);
    problem_->g(state.x, state.y, gy_);
    for (std::size_t i = 0; i < fx_.size(); ++i) state.x[i] -= alpha_k * (fx_[i] + xi[i]);
    for (std::size_t i = 0; i < gy_.size(); ++i) state.y[i] -= beta_k * (gy_[i] + psi[i]);
    ++state.k;
}

IterateState step(const IterateState& state, const ProblemSpec& problem,
                  std::span<const double> xi, std::span<const double> psi,
                  const StepSchedule& sched) {
    check_dims(state, problem, xi, psi);
    IterateState next = state;
    Stepper stepper(problem);
    stepper.advance(next, xi, psi, sched);
    check_finite(next);
    return next;
}

double squared_norm(std::span<const double> v) noexcept {
    double s = 0.0;
    for (double e : v) s += e * e;
    return s;
}

double Residuals::x_sq() const noexcept { return squared_norm(x_hat); }
double Residuals::y_sq() const noexcept { return squared_norm(y_hat); }

Residuals residuals(const IterateState& state, const ProblemSpec& problem) {
    if (!problem.fixed_point)
        throw ConfigError("problem '" + problem.id + "' has no cached fixed point y*");
    Residuals r;
    r.x_hat = problem.eval_lambda(state.y);
    for (std::size_t i = 0; i < r.x_hat.size(); ++i) r.x_hat[i] = state.x[i] - r.x_hat[i];
    const Vector& y_star = problem.fixed_point->y;
    r.y_hat.resize(state.y.size());
    for (std::size_t i = 0; i < state.y.size(); ++i) r.y_hat[i] = state.y[i] - y_star[i];
    return r;
}

double coupling_constant(const AssumptionConstants& consts) {
    return 4.0 * consts.L_g * consts.L_g / (consts.mu_f * consts.mu_g);
}

double lyapunov_value(double x_sq, double y_sq, const StepSchedule& sched, std::uint64_t k,
                      double c) {
    const auto [alpha_k, beta_k] = step_sizes(k, sched);
    return c * (beta_k / alpha_k) * x_sq + y_sq;
}

LyapunovValue lyapunov(const Residuals& res, const StepSchedule& sched, std::uint64_t k,
                       const AssumptionConstants& consts) {
    const double c = coupling_constant(consts);
    return {lyapunov_value(res.x_sq(), res.y_sq(), sched, k, c), c};
}

}  // namespace ttsa
