#include "ttsa/analysis.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

#include "ttsa/error.hpp"
#include "ttsa/log.hpp"
#include "ttsa/rate_planner.hpp"

namespace ttsa {

FitResult fit_series(std::span<const double> k, std::span<const double> v, double k_min,
                     double k_max, FitKind kind) {
    if (k.size() != v.size()) throw InsufficientDataError("k and V have different lengths");
    std::vector<double> xs, ys;
    std::size_t dropped = 0;
    for (std::size_t i = 0; i < k.size(); ++i) {
        if (k[i] < k_min || k[i] > k_max) continue;
        if (!(v[i] > 0.0) || (kind == FitKind::loglog && !(k[i] > 0.0))) {
            ++dropped;
            continue;
        }
        xs.push_back(kind == FitKind::loglog ? std::log(k[i]) : k[i]);
        ys.push_back(std::log(v[i]));
    }
    if (dropped > 0)
        warn(std::to_string(dropped) + " point(s) in the fit window excluded (nonpositive value)");
    if (xs.size() < 2)
        throw InsufficientDataError("fit window [" + std::to_string(k_min) + ", " +
                                    std::to_string(k_max) + "] holds " +
                                    std::to_string(xs.size()) + " usable point(s), need 2");

    const auto n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    if (!(sxx > 0.0)) throw InsufficientDataError("fit window has no spread in k");

    FitResult r;
    r.slope = sxy / sxx;
    r.intercept = my - r.slope * mx;
    double ss_res = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double e = ys[i] - (r.intercept + r.slope * xs[i]);
        ss_res += e * e;
    }
    r.residual_mse = ss_res / n;
    // syy at rounding level means a flat series, for which R^2 is undefined.
    if (syy <= 1e-24 * std::max(1.0, my * my) * n) {
        warn("flat series in fit window: r_squared reported as 0");
        r.r_squared = 0.0;
    } else {
        r.r_squared = std::clamp(1.0 - ss_res / syy, 0.0, 1.0);
    }
    r.k_min = k_min;
    r.k_max = k_max;
    r.n_points = xs.size();
    return r;
}

namespace {

FitResult fit_summary(const EnsembleSummary& s, double k_min, double k_max, FitKind kind) {
    std::vector<double> k, v;
    for (const auto& c : s.checkpoints) {
        k.push_back(static_cast<double>(c.k));
        v.push_back(c.mean_V);
    }
    return fit_series(k, v, k_min, k_max, kind);
}

}  // namespace

FitResult fit_loglog(const EnsembleSummary& s, double k_min, double k_max) {
    return fit_summary(s, k_min, k_max, FitKind::loglog);
}

FitResult fit_semilog(const EnsembleSummary& s, double k_min, double k_max) {
    return fit_summary(s, k_min, k_max, FitKind::semilog);
}

nlohmann::json to_json(const FitResult& f) {
    return {{"slope", f.slope},
            {"intercept", f.intercept},
            {"r_squared", f.r_squared},
            {"residual_mse", f.residual_mse},
            {"window", {f.k_min, f.k_max}},
            {"n_points", f.n_points}};
}

double Lemma3Report::min_margin_se() const {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& s : states) m = std::min(m, s.margin_se);
    return m;
}

double Lemma3Report::min_margin() const {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& s : states) m = std::min(m, s.margin);
    return m;
}

Lemma3Report check_lemma3_bound(const ProblemSpec& problem, const NoiseSpec& noise_in,
                                const StepSchedule& sched, std::uint64_t k,
                                const std::vector<IterateState>& states, std::size_t mc_samples,
                                std::uint64_t master_seed, unsigned threads) {
    sched.validate();
    noise_in.validate();
    if (!problem.fixed_point) throw ConfigError("problem '" + problem.id + "' has no fixed point");
    const auto& consts = problem.consts;
    const NoiseSpec noise = effective_noise(noise_in, problem);

    const auto [alpha0, beta0] = step_sizes(0, sched);
    const auto [alpha_k, beta_k] = step_sizes(k, sched);
    const auto [alpha_n, beta_n] = step_sizes(k + 1, sched);
    if (alpha_n > alpha_k || beta_n > beta_k)
        throw PreconditionError("step sizes must be nonincreasing");

    Lemma3Report report;
    report.ratio_bound = std::max(ratio_threshold(consts), alpha0 / beta0);
    if (alpha_k / beta_k < report.ratio_bound)
        throw PreconditionError("alpha_k/beta_k = " + std::to_string(alpha_k / beta_k) +
                                " is below the ratio bound max(4/mu_f(...), 2c, mu_g/mu_f, "
                                "alpha_0/beta_0) = " +
                                std::to_string(report.ratio_bound));
    report.C = lemma3_constant(consts, alpha0, beta0);
    report.noise_free = noise.kind == NoiseKind::none;
    const double c = coupling_constant(consts);
    const double ratio_k = beta_k / alpha_k;
    const double xi_coef = lemma3_xi_coefficient(consts, alpha_k, beta_k);
    const double psi_coef = lemma3_psi_coefficient(consts, alpha_k, beta_k);
    const std::size_t samples = report.noise_free ? 1 : mc_samples;
    if (samples < 2 && !report.noise_free)
        throw PreconditionError("Monte-Carlo check needs at least 2 samples");

    report.states.resize(states.size());
    auto evaluate = [&](std::size_t idx) {
        IterateState s = states[idx];
        s.k = k;
        const Residuals res = residuals(s, problem);
        const double V = c * ratio_k * res.x_sq() + res.y_sq();
        const NoiseVariances var = target_variances(noise, res, k, sched.k0);

        const RngStream rng(master_seed, static_cast<std::uint32_t>(idx));
        Stepper stepper(problem);
        Vector xi(problem.d1), psi(problem.d2);
        std::vector<double> values(samples);
        for (std::size_t m = 0; m < samples; ++m) {
            IterateState next = s;
            sample_into(var, m, rng, xi, psi);
            stepper.advance(next, xi, psi, sched);
            const Residuals r1 = residuals(next, problem);
            values[m] = c * ratio_k * r1.x_sq() + r1.y_sq();
        }
        Lemma3StateResult out;
        out.V_k = V;
        const auto n = static_cast<double>(samples);
        out.lhs_mean = pairwise_sum(values) / n;
        if (samples > 1) {
            for (double& v : values) v = (v - out.lhs_mean) * (v - out.lhs_mean);
            out.lhs_stderr = std::sqrt(pairwise_sum(values) / (n - 1.0) / n);
        }
        out.rhs = (1.0 - 0.5 * consts.mu_g * beta_k) * V + report.C * alpha_k * alpha_k * V +
                  xi_coef * var.s_xi + psi_coef * var.s_psi;
        out.margin = out.rhs - out.lhs_mean;
        out.margin_se = out.lhs_stderr > 0.0 ? out.margin / out.lhs_stderr : out.margin;
        report.states[idx] = out;
    };

    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(states.size())));
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < states.size();) evaluate(i);
    };
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    }
    return report;
}

double grad_check(const ProblemSpec& problem, const std::vector<IterateState>& points, double h) {
    if (!(h > 0.0)) throw ConfigError("grad_check step h must be positive");
    double worst = 0.0;
    for (const auto& check : problem.derivative_checks) {
        for (const auto& p : points) {
            Vector x = p.x, y = p.y;
            Vector& z = check.wrt == Variable::x ? x : y;
            Vector grad(z.size());
            check.derivative(x, y, grad);
            for (std::size_t i = 0; i < z.size(); ++i) {
                const double orig = z[i];
                z[i] = orig + h;
                const double up = check.primitive(x, y);
                z[i] = orig - h;
                const double down = check.primitive(x, y);
                z[i] = orig;
                const double fd = (up - down) / (2.0 * h);
                worst = std::max(worst, std::abs(fd - grad[i]) / std::max(1.0, std::abs(grad[i])));
            }
        }
    }
    return worst;
}

}  // namespace ttsa
