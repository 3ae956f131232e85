#include "ttsa/rate_planner.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

#include "ttsa/error.hpp"

namespace ttsa {

namespace {

struct Line {
    double slope;
    double intercept;
    double at(double x) const { return slope * x + intercept; }
};

void require_state_deltas(const DeltaMatrix& d) {
    for (double v : {d.d11, d.d12, d.d21, d.d22})
        if (!(v >= 0.0 && v < 1.0))
            throw DomainError("delta_ij must lie in [0, 1); use the exponential regime for delta == 1");
}

std::array<Line, 2> increasing_lines(const DeltaMatrix& d) {
    const double D11 = 1.0 - d.d11, D12 = 1.0 - d.d12;
    return {Line{(1.0 + d.d11) / D11, -d.d11 / D11}, Line{1.0 / D12, 0.0}};
}

std::array<Line, 2> decreasing_lines(const DeltaMatrix& d) {
    const double D21 = 1.0 - d.d21, D22 = 1.0 - d.d22;
    const double k3 = (2.0 - d.d21) / D21;
    const double k4 = 2.0 / D22;
    return {Line{-k3, k3}, Line{-k4, k4}};
}

std::string fmt(double v) {
    std::ostringstream s;
    s.precision(6);
    s << v;
    return s.str();
}

}  // namespace

double m_envelope(double x, const DeltaMatrix& delta) {
    require_state_deltas(delta);
    double m = std::numeric_limits<double>::infinity();
    for (const auto& l : increasing_lines(delta)) m = std::min(m, l.at(x));
    for (const auto& l : decreasing_lines(delta)) m = std::min(m, l.at(x));
    return m;
}

RatePair solve_rate_state(const DeltaMatrix& delta) {
    require_state_deltas(delta);
    std::optional<RatePair> best;
    for (const auto& up : increasing_lines(delta)) {
        for (const auto& down : decreasing_lines(delta)) {
            const double x = (down.intercept - up.intercept) / (up.slope - down.slope);
            if (!(x > 0.5 && x <= 1.0)) continue;
            const double value = m_envelope(x, delta);
            if (!best || value > best->t + 1e-15 ||
                (std::abs(value - best->t) <= 1e-15 && x < best->a))
                best = RatePair{x, value};
        }
    }
    if (!best) throw NumericError("no envelope crossing inside (1/2, 1]");
    return *best;
}

RatePair rate_state_closed_form(double delta11, double delta22) {
    if (!(delta11 >= 0.0 && delta11 < 1.0) || !(delta22 >= 0.0 && delta22 < 1.0))
        throw DomainError("closed form needs delta11, delta22 in [0, 1)");
    const double D11 = 1.0 - delta11, D22 = 1.0 - delta22;
    return {(D11 + D22) / (D11 + 2.0 * D22), (1.0 + D22) / (D11 + 2.0 * D22)};
}

TimeRate solve_rate_time(double gamma1, double gamma2) {
    TimeRate out{{(2.0 - gamma1 + gamma2) / 3.0, (2.0 + 2.0 * gamma1 + gamma2) / 3.0}, true, {}, 0.0};
    const auto [a, t] = out.rates;
    if (!(gamma1 >= 0.0) || !(gamma2 >= 0.0))
        out.violations.push_back("gamma1, gamma2 must be >= 0");
    const double gap = gamma1 - gamma2;
    if (!(gap >= -1.0 && gap < 0.5))
        out.violations.push_back("gamma-gap: gamma1 - gamma2 = " + fmt(gap) + " not in [-1, 1/2)");
    if (!(a > 0.5 && a <= 1.0))
        out.violations.push_back("step exponent a = " + fmt(a) + " not in (1/2, 1]");
    out.feasible = out.violations.empty();
    const double lhs = -1.0 + 2.0 * a;
    out.identity_residual = std::max(std::abs(lhs - (-1.0 + a + t - gamma1)),
                                     std::abs(lhs - (-3.0 + 4.0 * a + t - gamma2)));
    return out;
}

double lemma3_constant(const AssumptionConstants& k, double alpha0, double beta0) {
    const double c = coupling_constant(k);
    const double r = beta0 / alpha0;
    const double Ll = k.L_lambda, Lf = k.L_f, Lg = k.L_g;
    const double Ll1sq = (Ll + 1.0) * (Ll + 1.0);
    return Lf * Lf                                                      //
           + 4.0 * Ll * Ll * Lg * Lg * r * r                            //
           + 2.0 * Lf * Ll * Lg * r                                     //
           + 2.0 / k.mu_g * Lf * Lf * Ll * Ll * Lg * Lg * Ll1sq * beta0  //
           + 1.0 / c * Lg * Lg * (Ll + 2.0) * r                         //
           + c * 4.0 * Ll * Ll * Lg * Lg * Ll1sq * r * r * r            //
           + Lg * Lg * (2.0 * Ll * Ll + Ll + 3.0) * r * r;
}

double ratio_threshold(const AssumptionConstants& k) {
    const double c = coupling_constant(k);
    const double Ll = k.L_lambda, Lg = k.L_g;
    const double coupling =
        4.0 / k.mu_f * (2.0 * Ll * Lg + 2.0 / k.mu_g * Ll * Ll * Lg * Lg * (Ll + 1.0) * (Ll + 1.0));
    return std::max({coupling, 2.0 * c, k.mu_g / k.mu_f, 1.0});
}

double psi_weight(const AssumptionConstants& k) {
    const double c = coupling_constant(k);
    const double Lf2 = k.L_f * k.L_f, Ll2 = k.L_lambda * k.L_lambda;
    return c * (2.0 / k.mu_f * Lf2 + 2.0 / k.mu_f * Lf2 * Ll2 + 2.0 * Ll2) + 1.0;
}

double lemma3_xi_coefficient(const AssumptionConstants& k, double alpha_k, double beta_k) {
    return coupling_constant(k) * 2.0 * alpha_k * beta_k;
}

double lemma3_psi_coefficient(const AssumptionConstants& k, double alpha_k, double beta_k) {
    const double c = coupling_constant(k);
    const double Lf2 = k.L_f * k.L_f, Ll2 = k.L_lambda * k.L_lambda;
    const double b3 = beta_k * beta_k * beta_k;
    return c * (2.0 / k.mu_f * Lf2 * b3 / (alpha_k * alpha_k) + 2.0 / k.mu_f * Lf2 * Ll2 * b3 +
                2.0 * Ll2 * b3 / alpha_k) +
           beta_k * beta_k;
}

std::string to_string(PlanMode mode) { return mode == PlanMode::strict ? "strict" : "practical"; }

StepPair minimal_feasible_steps(const AssumptionConstants& consts, const RatePair& rates) {
    const double beta = 2.0 / consts.mu_g * (2.0 * rates.a + rates.t);
    return {ratio_threshold(consts) * beta, beta};
}

namespace {

// Shared skeleton of the two polynomial-rate plans: schedule checks, C_ab,
// k0 bounds, C(alpha_0, beta_0) and the M condition. `c2_of` maps M to C_2(M)
// (or returns the constant C_2').
void fill_polynomial_plan(RatePlan& plan, const AssumptionConstants& consts, double alpha,
                          double beta, double V0, const PlanOptions& options,
                          const std::function<double(double)>& c2_of, bool c2_depends_on_M) {
    if (!(alpha > 0.0) || !(beta > 0.0)) throw ConfigError("alpha and beta must be positive");
    if (!(V0 >= 0.0)) throw ConfigError("V0 must be nonnegative");
    consts.validate();

    const auto [a, t] = *plan.rates;
    if (!(a >= 0.5 + kExponentGuard))
        throw DomainError("step exponent a too close to 1/2 for the k0 bounds");
    auto& k = plan.constants;
    k.c = coupling_constant(consts);
    k.omega_min = ratio_threshold(consts);
    k.beta_min = 2.0 / consts.mu_g * (2.0 * a + t);
    k.C_ab = lemma3_constant(consts, alpha, beta);

    if (beta < *k.beta_min)
        plan.violations.push_back("beta = " + fmt(beta) + " below (2/mu_g)(2a+t) = " + fmt(*k.beta_min));
    if (alpha / beta < k.omega_min)
        plan.violations.push_back("alpha/beta = " + fmt(alpha / beta) + " below ratio threshold " +
                                  fmt(k.omega_min));

    const double inv = 1.0 / (2.0 * a - 1.0);
    k.k0_min = std::max({std::pow(alpha, 1.0 / a), std::pow(alpha * alpha / beta, inv),
                         1.0 / (std::pow(2.0, 1.0 / t) - 1.0),
                         1.0 / (std::pow(2.0, 1.0 / (2.0 * a)) - 1.0),
                         std::pow(6.0 * *k.C_ab * alpha * alpha, inv)});
    const double k0 = options.k0.value_or(options.mode == PlanMode::strict
                                              ? *k.k0_min
                                              : std::pow(alpha, 1.0 / a));
    if (!std::isfinite(*k.k0_min))
        plan.violations.push_back("k0 bound overflows double precision");
    else if (k0 < *k.k0_min)
        plan.violations.push_back("k0 = " + fmt(k0) + " below theorem bound " + fmt(*k.k0_min));
    if (!std::isfinite(k0)) throw ConfigError("k0 must be finite");

    plan.schedule = StepSchedule{alpha, beta, a, 1.0, k0};
    plan.V0 = V0;

    const double alpha0 = alpha / std::pow(1.0 + k0, a);
    const double beta0 = beta / (1.0 + k0);
    k.lemma3_C = lemma3_constant(consts, alpha0, beta0);
    if (*k.C_ab < *k.lemma3_C) plan.violations.push_back("C(alpha, beta) below C(alpha_0, beta_0)");

    const double floor_term = 3.0 * std::pow(k0, t) * V0;
    double M = std::max(floor_term, 3.0 / a * c2_of(0.0));
    if (c2_depends_on_M) {
        double prev = std::max(floor_term, 1.0);
        bool converged = false;
        for (int it = 0; it < kMaxFixedPointIterations; ++it) {
            M = std::max(floor_term, 3.0 / a * c2_of(prev));
            if (std::abs(M - prev) <= kFixedPointTolerance * std::max(std::abs(M), 1e-300)) {
                converged = true;
                break;
            }
            prev = M;
        }
        if (!converged) {
            std::ostringstream msg;
            msg.precision(17);
            msg << "M fixed point did not converge in " << kMaxFixedPointIterations
                << " iterations (last iterates " << prev << ", " << M << ")";
            throw NumericError(msg.str());
        }
    }
    plan.M = M;
    k.C2 = c2_of(M);
    k.C1 = *k.C_ab * alpha * alpha * 2.0 * M;
    plan.feasible = plan.violations.empty();
}

}  // namespace

RatePlan theorem1_plan(const AssumptionConstants& consts, const NoiseSpec& noise, double alpha,
                       double beta, double V0, const PlanOptions& options) {
    if (noise.kind != NoiseKind::state) throw ConfigError("theorem1_plan needs state-kind noise");
    noise.validate();
    RatePlan plan;
    plan.regime = "state";
    plan.mode = options.mode;
    plan.rates = solve_rate_state(noise.delta);

    const double c = coupling_constant(consts);
    const double K = psi_weight(consts);
    const auto& G = noise.gamma;
    const auto& d = noise.delta;
    auto c2_of = [=](double M) {
        const double fast = 1.0 / c * alpha / beta * 2.0 * M;  // bound on E|x_hat|^2 scale
        const double slow = 2.0 * M;
        const double xi_w = c * 2.0 * alpha * beta;
        const double psi_w = beta * beta * beta / (alpha * alpha) * K;
        return xi_w * G.g11 * std::pow(fast, d.d11) + xi_w * G.g12 * std::pow(slow, d.d12) +
               psi_w * G.g21 * std::pow(fast, d.d21) + psi_w * G.g22 * std::pow(slow, d.d22);
    };
    fill_polynomial_plan(plan, consts, alpha, beta, V0, options, c2_of, true);
    return plan;
}

RatePlan theorem3_plan(const AssumptionConstants& consts, const TimeNoise& noise, double alpha,
                       double beta, double V0, const PlanOptions& options) {
    RatePlan plan;
    plan.regime = "time";
    plan.mode = options.mode;
    const TimeRate rate = solve_rate_time(noise.gamma1, noise.gamma2);
    plan.rates = rate.rates;
    if (!rate.feasible) {
        plan.violations = rate.violations;
        plan.feasible = false;
        plan.constants.c = coupling_constant(consts);
        plan.constants.omega_min = ratio_threshold(consts);
        plan.M = std::numeric_limits<double>::quiet_NaN();
        plan.schedule = StepSchedule{alpha, beta, rate.rates.a, 1.0, options.k0.value_or(0.0)};
        return plan;
    }
    const double c = coupling_constant(consts);
    const double C2p = c * 2.0 * alpha * beta * noise.scale_xi +
                       beta * beta * beta / (alpha * alpha) * psi_weight(consts) * noise.scale_psi;
    fill_polynomial_plan(plan, consts, alpha, beta, V0, options, [C2p](double) { return C2p; },
                         false);
    return plan;
}

RatePlan theorem2_plan(const AssumptionConstants& consts, const GammaMatrix& G, double omega,
                       double beta_cap) {
    if (!(omega > 0.0)) throw ConfigError("omega must be positive");
    if (!(beta_cap > 0.0)) throw ConfigError("beta_cap must be positive");
    consts.validate();
    NoiseSpec::quadratic(G).validate();

    RatePlan plan;
    plan.regime = "quadratic";
    auto& k = plan.constants;
    const double c = coupling_constant(consts);
    const double Ll = consts.L_lambda, Lf = consts.L_f, Lg = consts.L_g;
    const double Ll1sq = (Ll + 1.0) * (Ll + 1.0);
    k.c = c;
    k.omega_min = ratio_threshold(consts);
    k.omega = omega;
    k.B1 = Lf * Lf + 4.0 * Ll * Ll * Lg * Lg + 2.0 * Lf * Ll * Lg + 1.0 / c * Lg * Lg * (Ll + 2.0) +
           c * 4.0 * Ll * Ll * Lg * Lg * Ll1sq + Lg * Lg * (2.0 * Ll * Ll + Ll + 3.0);
    k.B2 = 2.0 / consts.mu_g * Lf * Lf * Ll * Ll * Lg * Lg * Ll1sq;

    const double psi_scale = G.g21 / c * omega + G.g22;
    const double xi_scale = G.g11 / c * omega + G.g12;
    k.D1 = -0.5 * consts.mu_g + c * 2.0 / consts.mu_f * Lf * Lf / (omega * omega) * psi_scale;
    k.D2 = *k.B1 * omega * omega + c * 2.0 * omega * xi_scale +
           (c * 2.0 * Ll * Ll / omega + 1.0) * psi_scale;
    k.D3 = *k.B2 * omega * omega + c * 2.0 / consts.mu_f * Lf * Lf * Ll * Ll * psi_scale;

    if (omega < k.omega_min)
        plan.violations.push_back("omega = " + fmt(omega) + " below ratio threshold " +
                                  fmt(k.omega_min));
    if (*k.D1 > -0.25 * consts.mu_g)
        plan.violations.push_back("omega too small: D1(omega) = " + fmt(*k.D1) + " > -mu_g/4");

    const double D1 = *k.D1, D2 = *k.D2, D3 = *k.D3;
    auto q = [=](double b) { return 1.0 + D1 * b + D2 * b * b + D3 * b * b * b; };
    // Stationary point of q: positive root of 3 D3 b^2 + 2 D2 b + D1 = 0, written
    // in the cancellation-free form; degenerates to -D1/(2 D2) when D3 = 0.
    double beta_star = beta_cap;
    if (D1 < 0.0 && (D2 > 0.0 || D3 > 0.0)) {
        const double root = -D1 / (D2 + std::sqrt(D2 * D2 - 3.0 * D1 * D3));
        beta_star = std::min(root, beta_cap);
    } else if (D1 >= 0.0) {
        beta_star = std::min(beta_cap, 1e-300);
    }
    const double q_star = q(beta_star);
    k.q = q_star;
    if (!(q_star < 1.0)) plan.violations.push_back("no beta in (0, beta_cap] with q(beta) < 1");

    plan.schedule = StepSchedule::constant(omega * beta_star, beta_star);
    plan.epsilon = -std::log(std::max(q_star, 1e-30));
    plan.M = 1.0;
    plan.feasible = plan.violations.empty();
    return plan;
}

}  // namespace ttsa
