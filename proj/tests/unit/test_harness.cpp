#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "ttsa/config_io.hpp"
#include "ttsa/error.hpp"
#include "ttsa/harness.hpp"
#include "ttsa/log.hpp"
#include "ttsa/problems.hpp"

using namespace ttsa;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_config() {
    ExperimentConfig c;
    c.problem = "sgd-pr";
    c.dim = 3;
    c.noise = NoiseSpec::state(GammaMatrix::uniform(0.02), DeltaMatrix::uniform(0.4));
    c.schedule = {128.0, 4.0, 2.0 / 3.0, 1.0, std::pow(128.0, 1.5)};
    c.iterations = 2000;
    c.replicates = 13;
    c.master_seed = 77;
    c.per_decade = 5;
    return c;
}

struct WarningCapture {
    std::vector<std::string> seen;
    WarningSink previous;
    WarningCapture() {
        previous = set_warning_sink([this](const std::string& m) { seen.push_back(m); });
    }
    ~WarningCapture() { set_warning_sink(previous); }
};

fs::path temp_dir(const std::string& name) {
    auto p = fs::temp_directory_path() / ("ttsa_unit_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("default checkpoints") {
    using V = std::vector<std::uint64_t>;
    CHECK(default_checkpoints(10, 1) == V{0, 1, 10});
    CHECK(default_checkpoints(100, 2) == V{0, 1, 3, 10, 31, 100});
    CHECK(default_checkpoints(1, 5) == V{0, 1});
    CHECK(default_checkpoints(0, 5) == V{0});
    const auto cps = default_checkpoints(1000000, 20);
    CHECK(cps.front() == 0);
    CHECK(cps.back() == 1000000);
    CHECK(std::is_sorted(cps.begin(), cps.end()));
    CHECK(std::adjacent_find(cps.begin(), cps.end()) == cps.end());
    CHECK(std::count_if(cps.begin(), cps.end(), [](auto k) { return k >= 100000; }) == 21);
}

TEST_CASE("config validation") {
    auto c = small_config();
    CHECK_NOTHROW(c.validate());
    c.checkpoints = {0, 5, 5};
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.checkpoints = {0, 5, 3000};
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = small_config();
    c.replicates = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("zero iterations records only V0") {
    auto c = small_config();
    c.iterations = 0;
    const auto problem = make_sgd_pr(3);
    const auto rec = run_trajectory(c, problem, 0);
    REQUIRE(rec.V.size() == 1);
    const double x_hat = 1.0 - sgd_pr_root();
    const auto [a0, b0] = step_sizes(0, c.schedule);
    const double expect = 16.0 * (b0 / a0) * 3 * x_hat * x_hat + 3 * x_hat * x_hat;
    CHECK(rec.V[0] == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("noise-free trajectory decreases monotonically after 1e3") {
    auto c = small_config();
    c.noise = NoiseSpec::none();
    c.iterations = 100000;
    c.per_decade = 20;
    const auto rec = run_trajectory(c, 0);
    CHECK_FALSE(rec.diverged);
    for (std::size_t i = 1; i < rec.k.size(); ++i)
        if (rec.k[i - 1] >= 1000) CHECK(rec.V[i] < rec.V[i - 1]);
}

TEST_CASE("trajectories are reproducible per (seed, replicate)") {
    const auto c = small_config();
    const auto a = run_trajectory(c, 4), b = run_trajectory(c, 4), other = run_trajectory(c, 5);
    CHECK(a.V == b.V);
    CHECK(a.V != other.V);
}

TEST_CASE("diverging schedule leaves a flagged partial record") {
    auto c = small_config();
    c.schedule = StepSchedule::constant(5.0, 0.1);
    const auto rec = run_trajectory(c, 0);
    CHECK(rec.diverged);
    CHECK(rec.diverged_at > 0);
    CHECK(rec.V.size() < c.resolved_checkpoints().size());
    CHECK_THROWS_AS(run_ensemble(c, {1}), DivergenceError);
}

TEST_CASE("ensemble is bit-identical across thread counts") {
    const auto c = small_config();
    const auto s1 = run_ensemble(c, {1});
    for (unsigned t : {2u, 8u}) {
        auto st = run_ensemble(c, {t});
        st.wall_time_s = s1.wall_time_s;
        CHECK(st == s1);
        CHECK(summary_csv(st) == summary_csv(s1));
    }
}

TEST_CASE("summary does not depend on record order and reports moments") {
    const auto c = small_config();
    const auto problem = make_sgd_pr(3);
    std::vector<TrajectoryRecord> recs;
    for (std::uint32_t r = 0; r < c.replicates; ++r) recs.push_back(run_trajectory(c, problem, r));
    const auto forward = summarize(c, recs);
    std::reverse(recs.begin(), recs.end());
    CHECK(summarize(c, recs) == forward);

    // Moments at the last checkpoint recomputed naively.
    double m = 0.0;
    for (const auto& r : recs) m += r.V.back();
    m /= recs.size();
    double var = 0.0;
    for (const auto& r : recs) var += (r.V.back() - m) * (r.V.back() - m);
    var /= (recs.size() - 1);
    CHECK(forward.checkpoints.back().mean_V == doctest::Approx(m).epsilon(1e-12));
    CHECK(forward.checkpoints.back().stderr_V ==
          doctest::Approx(std::sqrt(var / recs.size())).epsilon(1e-10));
}

TEST_CASE("diverged replicates are excluded and counted") {
    auto c = small_config();
    c.replicates = 3;
    c.iterations = 10;
    c.per_decade = 1;
    std::vector<TrajectoryRecord> recs{{0, {0, 1, 10}, {3.0, 2.0, 1.0}, false, 0},
                                       {1, {0, 1}, {5.0, 9.0}, true, 4},
                                       {2, {0, 1, 10}, {1.0, 2.0, 3.0}, false, 0}};
    const auto s = summarize(c, recs);
    CHECK(s.diverged == 1);
    for (const auto& cp : s.checkpoints) {
        CHECK(cp.n_alive == 2);
        CHECK(cp.n_alive + s.diverged == c.replicates);
    }
    CHECK(s.checkpoints[0].mean_V == doctest::Approx(2.0));
    CHECK(s.checkpoints[2].mean_V == doctest::Approx(2.0));
    CHECK(s.checkpoints[1].stderr_V == 0.0);
}

TEST_CASE("single replicate: stderr 0 with a warning") {
    auto c = small_config();
    c.replicates = 1;
    WarningCapture w;
    const auto s = run_ensemble(c, {1});
    for (const auto& cp : s.checkpoints) CHECK(cp.stderr_V == 0.0);
    CHECK(s.checkpoints.back().mean_V == run_trajectory(c, 0).V.back());
    CHECK(w.seen.size() == 1);
}

TEST_CASE("pairwise sum is a fixed tree") {
    const std::vector<double> v{1e16, 1.0, -1e16, 1.0};
    CHECK(pairwise_sum(v) == (1e16 + 1.0) + (-1e16 + 1.0));
    CHECK(pairwise_sum(std::vector<double>{}) == 0.0);
}

TEST_CASE("persist and load round-trip") {
    const auto dir = temp_dir("persist");
    auto s = run_ensemble(small_config(), {1});
    persist(s, dir / "s.json");
    CHECK(fs::exists(dir / "s.csv"));
    const auto back = load_summary(dir / "s.json");
    CHECK(back == s);
    const auto csv = load_summary(dir / "s.csv");
    CHECK(csv.checkpoints == s.checkpoints);
}

TEST_CASE("CSV uses 17 significant digits") {
    EnsembleSummary s;
    s.checkpoints = {{0, 0.1, 1.0 / 3.0, 4}};
    CHECK(summary_csv(s) == "k,mean_V,stderr_V,n_alive\n0,0.10000000000000001,0.33333333333333331,4\n");
}

TEST_CASE("load reports schema problems") {
    const auto dir = temp_dir("schema");
    {
        std::ofstream(dir / "bad.csv") << "k,mean_V,n_alive\n0,1,1\n";
    }
    try {
        load_summary(dir / "bad.csv");
        FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
        CHECK(std::string(e.what()).find("stderr_V") != std::string::npos);
    }
    auto s = run_ensemble(small_config(), {1});
    persist(s, dir / "s.json");
    nlohmann::json doc;
    std::ifstream(dir / "s.json") >> doc;

    auto old = doc;
    old["schema_version"] = 0;
    std::ofstream(dir / "old.json") << old.dump();
    CHECK_THROWS_WITH_AS(load_summary(dir / "old.json"), doctest::Contains("schema_version 0"),
                         SchemaError);

    auto missing = doc;
    missing["checkpoints"][2].erase("mean_V");
    std::ofstream(dir / "missing.json") << missing.dump();
    CHECK_THROWS_WITH_AS(load_summary(dir / "missing.json"), doctest::Contains("mean_V"),
                         SchemaError);
    CHECK_THROWS_AS(load_summary(dir / "nope.json"), IoError);
}

TEST_CASE("config JSON round-trip and planned schedules") {
    const auto c = small_config();
    CHECK(config_from_json(config_to_json(c)) == c);

    const auto doc = nlohmann::json::parse(R"({
        "problem": {"id": "sgd-pr", "dim": 5},
        "noise": {"kind": "quadratic", "gamma": 0.1},
        "schedule": {"plan": "auto", "omega": 64},
        "iterations": 100
    })");
    const auto q = config_from_json(doc);
    CHECK(q.schedule.is_constant());
    CHECK(q.schedule.alpha == doctest::Approx(64 * q.schedule.beta));
    CHECK(q.schedule_origin.find("epsilon") != std::string::npos);
    CHECK(config_from_json(config_to_json(q)) == q);

    const auto t = config_from_json(nlohmann::json::parse(R"({
        "problem": "sgd-pr",
        "noise": {"kind": "time", "scale_xi": 0.1, "gamma1": 1, "gamma2": 1},
        "schedule": {"plan": "auto"},
        "iterations": 100
    })"));
    CHECK(t.schedule.a == doctest::Approx(2.0 / 3.0));
    CHECK(t.schedule.beta == doctest::Approx(2 * (4.0 / 3.0 + 5.0 / 3.0)));
    CHECK(t.schedule.k0 == doctest::Approx(std::pow(t.schedule.alpha, 1.5)));
}

TEST_CASE("config errors name the field") {
    CHECK_THROWS_WITH_AS(config_from_json(nlohmann::json::parse(R"({"problem":"sgd-pr","iterations":1,
        "schedule":{"alpha":1,"beta":1,"a":0.7},"replicas":3})")),
                         doctest::Contains("replicas"), ConfigError);
    CHECK_THROWS_WITH_AS(config_from_json(nlohmann::json::parse(R"({"problem":"sgd-pr","iterations":1,
        "schedule":{"alpha":1,"a":0.7}})")),
                         doctest::Contains("beta"), ConfigError);
    CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"problem":"sgd-pr","iterations":1,
        "noise":{"kind":"time","scale_xi":1,"gamma1":2},"schedule":{"plan":"auto"}})")),
                    ConfigError);
}

TEST_CASE("effective noise drops psi for SGD-PR only") {
    const auto n = NoiseSpec::quadratic(GammaMatrix::uniform(0.1));
    CHECK(effective_noise(n, make_sgd_pr()).gamma.g22 == 0.0);
    CHECK(effective_noise(n, make_sbo()).gamma.g22 == 0.1);
}
