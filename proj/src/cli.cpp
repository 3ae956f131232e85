#include "ttsa/cli.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <random>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"

#include "ttsa/analysis.hpp"
#include "ttsa/config_io.hpp"
#include "ttsa/error.hpp"
#include "ttsa/harness.hpp"
#include "ttsa/problems.hpp"
#include "ttsa/rate_planner.hpp"
#include "ttsa/version.hpp"

namespace ttsa {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitInfeasible = 2;

class UsageError : public Error {
public:
    explicit UsageError(const std::string& msg) : Error(msg) {}
};

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json plan_json(const RatePlan& p) {
    const auto& k = p.constants;
    json constants{{"c", k.c},           {"omega_min", k.omega_min},  {"lemma3_C", opt_json(k.lemma3_C)},
                   {"C_ab", opt_json(k.C_ab)}, {"C1", opt_json(k.C1)}, {"C2", opt_json(k.C2)},
                   {"k0_min", opt_json(k.k0_min)}, {"beta_min", opt_json(k.beta_min)},
                   {"B1", opt_json(k.B1)},   {"B2", opt_json(k.B2)},   {"D1", opt_json(k.D1)},
                   {"D2", opt_json(k.D2)},   {"D3", opt_json(k.D3)},   {"omega", opt_json(k.omega)},
                   {"q", opt_json(k.q)}};
    json out{{"regime", p.regime},
             {"mode", to_string(p.mode)},
             {"feasible", p.feasible},
             {"violations", p.violations},
             {"schedule",
              {{"alpha", p.schedule.alpha},
               {"beta", p.schedule.beta},
               {"a", p.schedule.a},
               {"b", p.schedule.b},
               {"k0", p.schedule.k0}}},
             {"M", std::isfinite(p.M) ? json(p.M) : json(nullptr)},
             {"V0", opt_json(p.V0)},
             {"constants", constants}};
    if (p.rates) out["rates"] = {{"a", p.rates->a}, {"t", p.rates->t}};
    if (p.epsilon) out["epsilon"] = *p.epsilon;
    return out;
}

void write_json(const fs::path& path, const json& doc) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << doc.dump(2) << '\n';
}

std::string num(double v, int precision = 6) {
    std::ostringstream s;
    s << std::setprecision(precision) << v;
    return s.str();
}

unsigned default_threads() {
    if (const char* env = std::getenv("TTSA_THREADS")) {
        try {
            const long v = std::stol(env);
            if (v > 0) return static_cast<unsigned>(v);
        } catch (const std::exception&) {
        }
        throw UsageError("TTSA_THREADS must be a positive integer, got '" + std::string(env) + "'");
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

// --- plan -----------------------------------------------------------------

struct PlanArgs {
    std::string mode;
    std::string problem = "sgd-pr";
    std::optional<double> delta, d11, d12, d21, d22;
    std::optional<double> gamma, g11, g12, g21, g22;
    std::optional<double> gamma1, gamma2, scale_xi, scale_psi;
    std::optional<double> alpha, beta, k0, V0;
    std::optional<double> omega, beta_cap;
    std::string plan_mode = "strict";
    std::string out_dir;
};

void add_plan(CLI::App& app, PlanArgs& a) {
    app.add_option("--mode", a.mode, "Noise regime")
        ->required()
        ->check(CLI::IsMember({"state", "quadratic", "time"}));
    app.add_option("--problem", a.problem, "Problem supplying the constants")
        ->check(CLI::IsMember({"sgd-pr", "sbo"}));
    app.add_option("--delta", a.delta, "Uniform delta_ij (state)");
    app.add_option("--delta11", a.d11);
    app.add_option("--delta12", a.d12);
    app.add_option("--delta21", a.d21);
    app.add_option("--delta22", a.d22);
    app.add_option("--gamma", a.gamma, "Uniform Gamma_ij (state, quadratic); default 0.02 / 0.1");
    app.add_option("--gamma11", a.g11);
    app.add_option("--gamma12", a.g12);
    app.add_option("--gamma21", a.g21);
    app.add_option("--gamma22", a.g22);
    app.add_option("--gamma1", a.gamma1, "Fast noise decay exponent (time)");
    app.add_option("--gamma2", a.gamma2, "Slow noise decay exponent (time)");
    app.add_option("--scale-xi", a.scale_xi, "Gamma'_11 (time); default 0.02");
    app.add_option("--scale-psi", a.scale_psi, "Gamma'_22 (time); default 0.02");
    app.add_option("--alpha", a.alpha);
    app.add_option("--beta", a.beta);
    app.add_option("--k0", a.k0);
    app.add_option("--V0", a.V0, "Initial Lyapunov value; default from (x0, y0) = (1, 1)");
    app.add_option("--omega", a.omega, "alpha/beta for the quadratic regime");
    app.add_option("--beta-cap", a.beta_cap, "Upper limit on beta (quadratic); default 1");
    app.add_option("--plan-mode", a.plan_mode)->check(CLI::IsMember({"strict", "practical"}));
    app.add_option("--out", a.out_dir, "Directory for plan.json");
}

double default_V0(const ProblemSpec& problem, double alpha, double beta) {
    IterateState s{0, Vector(problem.d1, 1.0), Vector(problem.d2, 1.0)};
    const Residuals r = residuals(s, problem);
    return coupling_constant(problem.consts) * beta / alpha * r.x_sq() + r.y_sq();
}

int cmd_plan(const PlanArgs& a, std::ostream& out) {
    const bool any_delta = a.delta || a.d11 || a.d12 || a.d21 || a.d22;
    const bool any_gamma = a.gamma || a.g11 || a.g12 || a.g21 || a.g22;
    const bool any_time = a.gamma1 || a.gamma2 || a.scale_xi || a.scale_psi;
    if (a.mode != "state" && any_delta)
        throw UsageError("--delta* only applies to --mode state");
    if (a.mode == "time" && any_gamma)
        throw UsageError("--gamma/--gamma_ij do not apply to --mode time (use --gamma1/--gamma2)");
    if (a.mode != "time" && any_time)
        throw UsageError("--gamma1/--gamma2/--scale-* only apply to --mode time");
    if (a.mode != "quadratic" && (a.omega || a.beta_cap))
        throw UsageError("--omega/--beta-cap only apply to --mode quadratic");
    if (a.mode == "quadratic" && (a.alpha || a.beta || a.k0 || a.V0))
        throw UsageError("--mode quadratic takes --omega and --beta-cap, not alpha/beta/k0/V0");

    const ProblemSpec problem = make_problem(a.problem);
    const auto& consts = problem.consts;
    PlanOptions options;
    options.mode = a.plan_mode == "strict" ? PlanMode::strict : PlanMode::practical;
    options.k0 = a.k0;

    auto gamma_matrix = [&](double fallback) {
        const double u = a.gamma.value_or(fallback);
        GammaMatrix g{a.g11.value_or(u), a.g12.value_or(u), a.g21.value_or(u), a.g22.value_or(u)};
        return effective_noise(NoiseSpec::quadratic(g), problem).gamma;
    };

    RatePlan plan;
    if (a.mode == "state") {
        const double u = a.delta.value_or(0.0);
        const DeltaMatrix d{a.d11.value_or(u), a.d12.value_or(u), a.d21.value_or(u), a.d22.value_or(u)};
        NoiseSpec noise = NoiseSpec::state(gamma_matrix(0.02), d);
        noise.validate();
        const StepPair minimal = minimal_feasible_steps(consts, solve_rate_state(d));
        const double alpha = a.alpha.value_or(minimal.alpha_k);
        const double beta = a.beta.value_or(minimal.beta_k);
        plan = theorem1_plan(consts, noise, alpha, beta,
                             a.V0.value_or(default_V0(problem, alpha, beta)), options);
    } else if (a.mode == "time") {
        TimeNoise tn{a.scale_xi.value_or(0.02), a.scale_psi.value_or(0.02), a.gamma1.value_or(0.0),
                     a.gamma2.value_or(0.0)};
        if (!problem.slow_noise) tn.scale_psi = 0.0;
        const TimeRate tr = solve_rate_time(tn.gamma1, tn.gamma2);
        const StepPair minimal = minimal_feasible_steps(consts, tr.rates);
        const double alpha = a.alpha.value_or(minimal.alpha_k);
        const double beta = a.beta.value_or(minimal.beta_k);
        plan = theorem3_plan(consts, tn, alpha, beta,
                             a.V0.value_or(default_V0(problem, alpha, beta)), options);
    } else {
        plan = theorem2_plan(consts, gamma_matrix(0.1), a.omega.value_or(ratio_threshold(consts)),
                             a.beta_cap.value_or(1.0));
    }

    out << "regime: " << plan.regime << " (" << to_string(plan.mode) << ", problem "
        << problem.id << ")\n";
    if (plan.rates)
        out << std::fixed << std::setprecision(4) << "a=" << plan.rates->a
            << " t=" << plan.rates->t << std::defaultfloat << '\n';
    if (plan.epsilon)
        out << "beta*=" << num(plan.schedule.beta) << " alpha=" << num(plan.schedule.alpha)
            << " epsilon=" << num(*plan.epsilon) << '\n';
    out << "schedule: alpha=" << num(plan.schedule.alpha) << " beta=" << num(plan.schedule.beta)
        << " a=" << num(plan.schedule.a) << " b=" << num(plan.schedule.b)
        << " k0=" << num(plan.schedule.k0) << '\n';
    const auto& k = plan.constants;
    out << "constants: c=" << num(k.c) << " omega_min=" << num(k.omega_min);
    auto show = [&](const char* name, const std::optional<double>& v) {
        if (v) out << ' ' << name << '=' << num(*v);
    };
    show("C(alpha0,beta0)", k.lemma3_C);
    show("C_ab", k.C_ab);
    show("k0_min", k.k0_min);
    show("beta_min", k.beta_min);
    show("C1", k.C1);
    show("C2", k.C2);
    show("B1", k.B1);
    show("B2", k.B2);
    show("D1", k.D1);
    show("D2", k.D2);
    show("D3", k.D3);
    show("q", k.q);
    if (plan.regime != "quadratic" && std::isfinite(plan.M)) out << " M=" << num(plan.M);
    out << '\n';
    out << "feasible: " << (plan.feasible ? "yes" : "no") << '\n';
    for (const auto& v : plan.violations) out << "  violation: " << v << '\n';

    json doc = plan_json(plan);
    doc["problem"] = problem.id;
    doc["version"] = kVersion;
    if (!a.out_dir.empty()) write_json(fs::path(a.out_dir) / "plan.json", doc);

    // Practical plans report violations of the theorem's sufficient conditions
    // but still succeed when the rate exponents themselves exist.
    if (plan.feasible) return kExitOk;
    if (plan.mode == PlanMode::practical && plan.rates && plan.rates->a > 0.5 &&
        plan.rates->a <= 1.0 && std::isfinite(plan.M))
        return kExitOk;
    return kExitInfeasible;
}

// --- run ------------------------------------------------------------------

struct RunArgs {
    std::string config;
    std::string out_dir = "out";
    std::optional<std::uint64_t> seed;
    std::optional<std::uint64_t> iterations;
    std::optional<std::uint32_t> replicates;
    std::optional<unsigned> threads;
};

void add_run(CLI::App& app, RunArgs& a) {
    app.add_option("config", a.config, "Experiment config (JSON)")->required();
    app.add_option("--out", a.out_dir, "Output directory");
    app.add_option("--seed", a.seed, "Master seed override");
    app.add_option("--iterations", a.iterations);
    app.add_option("--replicates", a.replicates);
    app.add_option("--threads", a.threads, "Worker threads (default $TTSA_THREADS or all cores)")
        ->check(CLI::PositiveNumber);
}

int cmd_run(const RunArgs& a, std::ostream& out) {
    ExperimentConfig cfg;
    try {
        cfg = load_config(a.config);
        if (a.seed) cfg.master_seed = *a.seed;
        if (a.replicates) cfg.replicates = *a.replicates;
        if (a.iterations) {
            cfg.iterations = *a.iterations;
            // Explicit checkpoints beyond the new horizon are dropped.
            std::erase_if(cfg.checkpoints, [&](std::uint64_t k) { return k > cfg.iterations; });
        }
        cfg.validate();
    } catch (const ConfigError& e) {
        throw UsageError(e.what());
    }
    const unsigned threads = a.threads ? *a.threads : default_threads();
    const EnsembleSummary summary = run_ensemble(cfg, {threads});
    const fs::path json_path = fs::path(a.out_dir) / (fs::path(a.config).stem().string() + ".json");
    persist(summary, json_path);
    out << "final mean_V=" << num(summary.checkpoints.back().mean_V, 10) << " wall_time="
        << num(summary.wall_time_s, 4) << "s diverged=" << summary.diverged << " -> "
        << json_path.string() << '\n';
    return kExitOk;
}

// --- fit ------------------------------------------------------------------

struct FitArgs {
    std::string summary;
    std::string kind = "loglog";
    std::optional<double> k_min, k_max;
    std::string out_dir;
};

void add_fit(CLI::App& app, FitArgs& a) {
    app.add_option("summary", a.summary, "Summary JSON or CSV")->required();
    app.add_option("--kind", a.kind)->check(CLI::IsMember({"loglog", "semilog"}));
    app.add_option("--kmin", a.k_min, "Window start (default 1e5 for loglog, 0 for semilog)");
    app.add_option("--kmax", a.k_max, "Window end (default last checkpoint)");
    app.add_option("--out", a.out_dir, "Directory for fit.json");
}

int cmd_fit(const FitArgs& a, std::ostream& out, std::ostream& err) {
    const EnsembleSummary s = load_summary(a.summary);
    if (s.checkpoints.empty()) {
        err << "error: summary has no checkpoints\n";
        return kExitInfeasible;
    }
    const bool loglog = a.kind == "loglog";
    const double k_min = a.k_min.value_or(loglog ? 1e5 : 0.0);
    const double k_max = a.k_max.value_or(static_cast<double>(s.checkpoints.back().k));
    FitResult fit;
    try {
        fit = loglog ? fit_loglog(s, k_min, k_max) : fit_semilog(s, k_min, k_max);
    } catch (const InsufficientDataError& e) {
        err << "error: " << e.what() << '\n';
        return kExitInfeasible;
    }
    json doc = to_json(fit);
    doc["kind"] = a.kind;
    doc[loglog ? "decay_exponent" : "contraction_rate"] = -fit.slope;
    doc["source"] = a.summary;
    doc["config"] = config_to_json(s.config);
    doc["version"] = kVersion;
    out << json{{"kind", a.kind},
                {loglog ? "decay_exponent" : "contraction_rate", -fit.slope},
                {"fit", to_json(fit)}}
               .dump(2)
        << '\n';
    if (!a.out_dir.empty()) write_json(fs::path(a.out_dir) / "fit.json", doc);
    return kExitOk;
}

// --- verify ---------------------------------------------------------------

struct VerifyArgs {
    std::string problem = "sgd-pr";
    std::size_t dim = 5;
    double box = 2.0;
    std::size_t n = 1000;
    std::size_t grad_points = 1000;
    double h = 1e-6;
    double grad_tol = 1e-5;
    std::uint64_t seed = 1;
    bool report_only = false;
    std::string out_dir;
};

void add_verify(CLI::App& app, VerifyArgs& a) {
    app.add_option("--problem", a.problem)->check(CLI::IsMember({"sgd-pr", "sbo"}));
    app.add_option("--dim", a.dim, "SGD-PR dimension");
    app.add_option("--box", a.box, "Sample pairs in [-box, box]^d")->check(CLI::PositiveNumber);
    app.add_option("--n", a.n, "Number of sampled pairs");
    app.add_option("--grad-points", a.grad_points);
    app.add_option("--fd-step", a.h, "Finite-difference step")->check(CLI::PositiveNumber);
    app.add_option("--grad-tol", a.grad_tol, "Maximum relative gradient error");
    app.add_option("--seed", a.seed);
    app.add_flag("--report-only", a.report_only, "Exit 0 even when a check fails");
    app.add_option("--out", a.out_dir, "Directory for verify.json");
}

int cmd_verify(const VerifyArgs& a, std::ostream& out) {
    const ProblemSpec problem = make_problem(a.problem, a.dim);
    const VerificationReport report = verify_constants(problem, a.box, a.n, a.seed);

    std::mt19937_64 gen(a.seed);
    std::uniform_real_distribution<double> unif(-a.box, a.box);
    std::vector<IterateState> points(a.grad_points);
    for (auto& p : points) {
        p.x.resize(problem.d1);
        p.y.resize(problem.d2);
        for (double& v : p.x) v = unif(gen);
        for (double& v : p.y) v = unif(gen);
    }
    const double grad_err = grad_check(problem, points, a.h);
    const bool grad_ok = grad_err <= a.grad_tol;

    out << "problem " << problem.id << ": " << report.samples << " pairs in [-" << a.box << ", "
        << a.box << "]\n";
    json checks = json::array();
    for (const auto& c : report.checks) {
        out << "  " << std::left << std::setw(6) << c.name << (c.passed ? "pass" : "FAIL")
            << "  constant=" << num(c.paper_constant) << " worst ratio=" << num(c.worst_ratio)
            << '\n';
        for (const auto& w : c.witnesses) out << "    witness: " << w << '\n';
        checks.push_back({{"name", c.name},
                          {"constant", c.paper_constant},
                          {"worst_ratio", c.worst_ratio},
                          {"passed", c.passed},
                          {"witnesses", c.witnesses}});
    }
    out << "  grad  " << (grad_ok ? "pass" : "FAIL") << "  max relative error=" << num(grad_err)
        << " (tol " << num(a.grad_tol) << ", h " << num(a.h) << ", " << points.size()
        << " points)\n";
    const bool ok = report.passed() && grad_ok;
    out << (ok ? "all checks passed" : "some checks failed") << '\n';
    if (!a.out_dir.empty())
        write_json(fs::path(a.out_dir) / "verify.json",
                   {{"problem", problem.id},
                    {"box", a.box},
                    {"samples", report.samples},
                    {"seed", a.seed},
                    {"checks", checks},
                    {"grad_check", {{"max_rel_error", grad_err}, {"h", a.h}, {"passed", grad_ok}}},
                    {"passed", ok},
                    {"version", kVersion}});
    return ok || a.report_only ? kExitOk : kExitInfeasible;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Two-time-scale stochastic approximation lab", "ttsa"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kVersion));

    PlanArgs plan_args;
    RunArgs run_args;
    FitArgs fit_args;
    VerifyArgs verify_args;
    auto* plan = app.add_subcommand("plan", "Plan step sizes and predicted rates");
    auto* run = app.add_subcommand("run", "Run a Monte-Carlo ensemble from a config");
    auto* fit = app.add_subcommand("fit", "Fit a decay law to a summary");
    auto* verify = app.add_subcommand("verify", "Check assumption constants and gradients");
    add_plan(*plan, plan_args);
    add_run(*run, run_args);
    add_fit(*fit, fit_args);
    add_verify(*verify, verify_args);

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << '\n';
        return kExitUsage;
    }

    try {
        if (plan->parsed()) return cmd_plan(plan_args, out);
        if (run->parsed()) return cmd_run(run_args, out);
        if (fit->parsed()) return cmd_fit(fit_args, out, err);
        if (verify->parsed()) return cmd_verify(verify_args, out);
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const ConfigError& e) {
        err << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitInfeasible;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitInfeasible;
    }
    return kExitUsage;
}

}  // namespace ttsa
