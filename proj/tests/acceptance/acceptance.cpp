// Acceptance checks. Each criterion prints one PASS/FAIL line with the measured values.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "ttsa/analysis.hpp"
#include "ttsa/cli.hpp"
#include "ttsa/config_io.hpp"
#include "ttsa/error.hpp"
#include "ttsa/harness.hpp"
#include "ttsa/log.hpp"
#include "ttsa/noise.hpp"
#include "ttsa/problems.hpp"
#include "ttsa/rate_planner.hpp"

using namespace ttsa;
namespace fs = std::filesystem;

namespace {

const fs::path kDesk = fs::path(TTSA_SOURCE_DIR) / "configs" / "desk";
const fs::path kOut = "acceptance_out";

struct Outcome {
    bool pass;
    std::string detail;
};

std::string fmt(double v, int prec = 4) {
    std::ostringstream s;
    s.precision(prec);
    s << v;
    return s.str();
}

unsigned threads() { return std::max(1u, std::thread::hardware_concurrency()); }

std::vector<IterateState> random_states(std::size_t n, std::size_t d1, std::size_t d2, double box,
                                        std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> u(-box, box);
    std::vector<IterateState> out(n);
    for (auto& s : out) {
        s.x.resize(d1);
        s.y.resize(d2);
        for (double& v : s.x) v = u(gen);
        for (double& v : s.y) v = u(gen);
    }
    return out;
}

EnsembleSummary run_config(const std::string& name) {
    const auto cfg = load_config(kDesk / (name + ".json"));
    auto summary = run_ensemble(cfg, {threads()});
    fs::create_directories(kOut);
    persist(summary, kOut / (name + ".json"));
    return summary;
}

// Corollary 1 with delta11 = delta12 and delta21 = delta22.
std::pair<double, double> corollary1(double d1, double d2) {
    const double D11 = 1.0 - d1, D22 = 1.0 - d2;
    return {(D11 + D22) / (D11 + 2.0 * D22), (1.0 + D22) / (D11 + 2.0 * D22)};
}

Outcome criterion1() {
    double worst = 0.0;
    for (int i = 0; i < 10; ++i) {
        for (int j = 0; j < 10; ++j) {
            const double d1 = i / 10.0, d2 = j / 10.0;
            const auto got = solve_rate_state({d1, d1, d2, d2});
            const auto [a, t] = corollary1(d1, d2);
            worst = std::max({worst, std::abs(got.a - a), std::abs(got.t - t)});
        }
    }
    const auto zero = solve_rate_state(DeltaMatrix::uniform(0.0));
    const double zero_err = std::max(std::abs(zero.a - 2.0 / 3.0), std::abs(zero.t - 2.0 / 3.0));
    return {worst <= 1e-9 && zero_err <= 1e-9,
            "max |error| on 10x10 grid " + fmt(worst, 3) + ", at delta=0 (a,t)=(" +
                fmt(zero.a, 10) + ", " + fmt(zero.t, 10) + ")"};
}

Outcome criterion2() {
    std::mt19937_64 gen(2024);
    std::uniform_real_distribution<double> g2(0.0, 6.0), gap(-1.0, 0.5);
    double worst = 0.0;
    int tested = 0, rejected = 0;
    while (tested < 1000) {
        const double gamma2 = g2(gen);
        const double gamma1 = gamma2 + gap(gen);
        if (gamma1 < 0.0) continue;
        const auto r = solve_rate_time(gamma1, gamma2);
        if (!r.feasible) {
            ++rejected;
            continue;
        }
        const double a = r.rates.a, t = r.rates.t;
        const double e1 = -1.0 + 2.0 * a;
        const double e2 = -1.0 + a + t - gamma1;
        const double e3 = -3.0 + 4.0 * a + t - gamma2;
        worst = std::max({worst, std::abs(e1 - e2), std::abs(e1 - e3)});
        ++tested;
    }
    return {worst <= 1e-12 && rejected == 0,
            "1000 random (gamma1, gamma2), max identity gap " + fmt(worst, 3) +
                ", unexpectedly infeasible " + std::to_string(rejected)};
}

struct SlopeCase {
    std::string config;
    double target;
    double tolerance;
};

Outcome slope_checks(const std::vector<SlopeCase>& cases, double k_min, double k_max) {
    bool pass = true;
    std::string detail;
    for (const auto& c : cases) {
        const auto s = run_config(c.config);
        FitResult fit;
        try {
            fit = fit_loglog(s, k_min, k_max);
        } catch (const InsufficientDataError&) {
            std::uint64_t zero_from = 0;
            for (const auto& cp : s.checkpoints)
                if (cp.mean_V > 0.0) zero_from = 0;
                else if (zero_from == 0) zero_from = cp.k;
            pass = false;
            detail += (detail.empty() ? "" : "; ") + c.config +
                      " no positive mean_V in fit window (mean_V exactly 0 from k=" +
                      std::to_string(zero_from) + ") FAIL";
            continue;
        }
        const double t_hat = -fit.slope;
        const bool ok = c.tolerance > 0 ? std::abs(t_hat - c.target) <= c.tolerance : t_hat >= c.target;
        pass = pass && ok && s.diverged == 0;
        detail += (detail.empty() ? "" : "; ") + c.config + " t_hat=" + fmt(t_hat) +
                  (c.tolerance > 0 ? " (t=" + fmt(c.target) + " +/- " + fmt(c.tolerance) + ")"
                                   : " (gate >= " + fmt(c.target) + ")") +
                  " R2=" + fmt(fit.r_squared, 3) + (ok ? "" : " FAIL");
    }
    return {pass, detail};
}

Outcome state_slopes(const std::string& prefix, double tol) {
    std::vector<SlopeCase> cases;
    for (auto [tag, delta] : {std::pair{"0", 0.0}, {"04", 0.4}, {"08", 0.8}})
        cases.push_back({prefix + "_delta" + tag, corollary1(delta, delta).second, tol});
    return slope_checks(cases, 1e5, 1e6);
}

Outcome exponential(const std::string& name, double omega) {
    const auto cfg = load_config(kDesk / (name + ".json"));
    const auto problem = make_problem(cfg.problem, cfg.dim);
    const auto plan =
        theorem2_plan(problem.consts, effective_noise(cfg.noise, problem).gamma, omega, 1.0);
    if (!plan.feasible || !(plan.schedule == cfg.schedule))
        return {false, name + ": config schedule does not match the exponential plan"};
    const double eps = *plan.epsilon;
    const auto s = run_config(name);
    const double V0 = s.checkpoints.front().mean_V;
    double worst_ratio = 0.0;
    for (const auto& cp : s.checkpoints) {
        if (cp.k > 10000) break;
        worst_ratio = std::max(worst_ratio, cp.mean_V / (2.0 * std::exp(-eps * cp.k) * V0));
    }
    const auto fit = fit_semilog(s, 0, 1e4);
    const double eps_hat = -fit.slope;
    return {worst_ratio <= 1.0 && eps_hat > 0.0 && s.diverged == 0,
            name + ": epsilon=" + fmt(eps, 3) + " eps_hat=" + fmt(eps_hat, 3) +
                " max V_k/(2 e^{-eps k} V0)=" + fmt(worst_ratio, 4)};
}

Outcome criterion3() { return state_slopes("sgd_pr", 0.15); }

Outcome criterion4() { return exponential("sgd_pr_quadratic", 64.0); }

Outcome criterion5() {
    std::vector<SlopeCase> cases;
    for (int g = 0; g <= 2; ++g)
        cases.push_back({"sgd_pr_time_gamma" + std::to_string(g), 2.0 / 3.0 + g, 0.2});
    for (int g = 3; g <= 4; ++g) cases.push_back({"sgd_pr_time_gamma" + std::to_string(g), 2.5, 0.0});
    return slope_checks(cases, 1e5, 1e6);
}

Outcome criterion6() {
    const auto slopes = state_slopes("sbo", 0.25);
    const auto exp = exponential("sbo_quadratic", ratio_threshold(make_sbo().consts));
    return {slopes.pass && exp.pass, slopes.detail + "; " + exp.detail};
}

Outcome criterion7() {
    const auto problem = make_sgd_pr(5);
    const StepSchedule sched{1.0, 1.0 / 32.0, 2.0 / 3.0, 1.0, 0.0};
    const std::uint64_t k = 100;
    const auto states = random_states(20, problem.d1, problem.d2, 2.0, 7);
    const auto noisy = check_lemma3_bound(
        problem, NoiseSpec::state(GammaMatrix::uniform(0.02), DeltaMatrix::uniform(0.0)), sched, k,
        states, 100000, 11, threads());
    const auto clean = check_lemma3_bound(problem, NoiseSpec::none(), sched, k, states, 1, 11, 1);
    return {noisy.min_margin_se() >= -3.0 && clean.min_margin() >= -1e-12,
            "min margin " + fmt(noisy.min_margin_se(), 4) + " SE over 20 states; noise-free min margin " +
                fmt(clean.min_margin(), 4)};
}

Outcome criterion8() {
    bool pass = true;
    std::string detail;
    for (const std::string id : {"sgd-pr", "sbo"}) {
        const auto problem = make_problem(id, 5);
        const auto pts = random_states(1000, problem.d1, problem.d2, 2.0, 17);
        const double err = grad_check(problem, pts, 1e-6);
        const auto report = verify_constants(problem, 2.0, 10000, 19);
        std::string failed;
        for (const auto& c : report.checks)
            if (!c.passed) failed += " " + c.name;
        pass = pass && err <= 1e-5 && report.passed();
        detail += (detail.empty() ? "" : "; ") + id + " grad error " + fmt(err, 3) + ", constants " +
                  (report.passed() ? "pass" : "fail:" + failed);
    }
    return {pass, detail};
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

Outcome criterion9() {
    const std::string cfg = (kDesk / "sgd_pr_delta04.json").string();
    std::vector<std::string> csv;
    for (const char* t : {"1", "8"}) {
        const auto dir = kOut / (std::string("threads_") + t);
        fs::remove_all(dir);
        std::vector<std::string> args{"ttsa",           "run", cfg, "--out", dir.string(), "--threads", t,
                                      "--iterations", "200000", "--replicates", "32"};
        std::vector<const char*> argv;
        for (const auto& a : args) argv.push_back(a.c_str());
        std::ostringstream out, err;
        if (run_cli(static_cast<int>(argv.size()), argv.data(), out, err) != 0)
            return {false, "run failed: " + err.str()};
        csv.push_back(read_file(dir / "sgd_pr_delta04.csv"));
    }
    return {!csv[0].empty() && csv[0] == csv[1],
            "threads 1 vs 8: " + std::to_string(csv[0].size()) + " bytes, " +
                (csv[0] == csv[1] ? "identical" : "different")};
}

Outcome criterion10() {
    struct Case {
        std::string name;
        NoiseSpec spec;
    };
    const std::vector<Case> cases{
        {"none", NoiseSpec::none()},
        {"state", NoiseSpec::state(GammaMatrix::uniform(0.02), DeltaMatrix::uniform(0.4))},
        {"quadratic", NoiseSpec::quadratic(GammaMatrix::uniform(0.1))},
        {"time", NoiseSpec::time_decay({0.1, 0.1, 1.0, 1.0})}};
    const double x_sq = 2.5, y_sq = 0.7;
    const std::uint64_t k = 40, draws = 1000000;
    bool pass = true;
    std::string detail;
    for (std::size_t i = 0; i < cases.size(); ++i) {
        const auto& c = cases[i];
        const auto var = target_variances(c.spec, x_sq, y_sq, k, 10.0);
        const RngStream rng(99, static_cast<std::uint32_t>(i));
        Vector xi(5), psi(5);
        double sum_xi = 0.0, sum_psi = 0.0;
        for (std::uint64_t m = 0; m < draws; ++m) {
            sample_into(var, m, rng, xi, psi);
            sum_xi += squared_norm(xi);
            sum_psi += squared_norm(psi);
        }
        const double e_xi = sum_xi / draws, e_psi = sum_psi / draws;
        auto rel = [](double got, double want) {
            return want == 0.0 ? std::abs(got) : std::abs(got / want - 1.0);
        };
        const double err = std::max(rel(e_xi, var.s_xi), rel(e_psi, var.s_psi));
        pass = pass && err <= 0.02;
        detail += (detail.empty() ? "" : "; ") + c.name + " E|xi|^2=" + fmt(e_xi, 5) + " target " +
                  fmt(var.s_xi, 5) + " (max rel error " + fmt(err, 2) + ")";
    }
    return {pass, detail};
}

const std::vector<std::pair<std::string, std::function<Outcome()>>> kCriteria{
    {"rate planner matches closed form", criterion1},
    {"time-noise rate identities", criterion2},
    {"SGD-PR state-noise slopes", criterion3},
    {"SGD-PR exponential regime", criterion4},
    {"SGD-PR time-noise slopes", criterion5},
    {"SBO slopes and exponential regime", criterion6},
    {"one-step Lyapunov bound", criterion7},
    {"operator correctness", criterion8},
    {"thread-count determinism", criterion9},
    {"noise calibration", criterion10},
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ttsa acceptance checks"};
    int only = 0;
    app.add_option("--criterion", only, "Run a single criterion (1-10)")->check(CLI::Range(1, 10));
    CLI11_PARSE(app, argc, argv);

    set_warning_sink([](const std::string&) {});
    int failed = 0;
    for (std::size_t i = 0; i < kCriteria.size(); ++i) {
        if (only != 0 && static_cast<int>(i + 1) != only) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = kCriteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << i + 1 << " (" << kCriteria[i].first
                  << "): " << o.detail << " [" << fmt(secs, 3) << " s]" << std::endl;
        failed += o.pass ? 0 : 1;
    }
    return failed == 0 ? 0 : 1;
}
