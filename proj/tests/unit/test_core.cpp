#include <cmath>
#include <vector>

#include "doctest.h"
#include "ttsa/core.hpp"
#include "ttsa/error.hpp"

using namespace ttsa;

namespace {

// x' = x - alpha (x - 2y), y' = y - beta y on R x R; lambda(y) = 2y, y* = 0.
ProblemSpec linear_toy() {
    ProblemSpec p;
    p.id = "toy";
    p.d1 = 1;
    p.d2 = 1;
    p.f = [](auto x, auto y, auto out) { out[0] = x[0] - 2.0 * y[0]; };
    p.g = [](auto, auto y, auto out) { out[0] = y[0]; };
    p.lambda_map = [](auto y, auto out) { out[0] = 2.0 * y[0]; };
    p.fixed_point = FixedPoint{{0.0}, {0.0}};
    p.consts = {.L_lambda = 2.0, .L_f = 3.0, .mu_f = 1.0, .L_g = 1.0, .mu_g = 1.0};
    return p;
}

}  // namespace

TEST_CASE("step sizes follow the polynomial schedule") {
    StepSchedule s{2.0, 0.5, 0.75, 1.0, 3.0};
    const auto p0 = step_sizes(0, s);
    CHECK(p0.alpha_k == doctest::Approx(2.0 / std::pow(4.0, 0.75)).epsilon(1e-15));
    CHECK(p0.beta_k == doctest::Approx(0.5 / 4.0).epsilon(1e-15));
    const auto p9 = step_sizes(9, s);
    CHECK(p9.alpha_k == doctest::Approx(2.0 / std::pow(13.0, 0.75)).epsilon(1e-15));
    CHECK(p9.beta_k == doctest::Approx(0.5 / 13.0).epsilon(1e-15));
}

TEST_CASE("constant schedule ignores k and k0") {
    auto s = StepSchedule::constant(0.3, 0.01);
    CHECK(s.is_constant());
    for (std::uint64_t k : {0ULL, 7ULL, 1000000ULL}) {
        CHECK(step_sizes(k, s).alpha_k == 0.3);
        CHECK(step_sizes(k, s).beta_k == 0.01);
    }
}

TEST_CASE("schedule validation rejects bad exponents and scales") {
    CHECK_NOTHROW(StepSchedule{}.validate());
    CHECK_THROWS_AS((StepSchedule{1.0, 1.0, 0.5, 1.0, 0.0}.validate()), ConfigError);
    CHECK_THROWS_AS((StepSchedule{1.0, 1.0, 1.2, 1.0, 0.0}.validate()), ConfigError);
    CHECK_THROWS_AS((StepSchedule{-1.0, 1.0, 0.7, 1.0, 0.0}.validate()), ConfigError);
    CHECK_THROWS_AS((StepSchedule{1.0, 1.0, 0.7, 1.0, -2.0}.validate()), ConfigError);
    CHECK_NOTHROW(StepSchedule::constant(1.0, 1.0).validate());
}

TEST_CASE("one step matches the hand-computed coupled update") {
    const auto p = linear_toy();
    const auto s = StepSchedule::constant(0.1, 0.01);
    IterateState st{4, {3.0}, {1.0}};
    const std::vector<double> xi{0.5}, psi{-2.0};
    const auto next = step(st, p, xi, psi, s);
    CHECK(next.k == 5);
    // x' = 3 - 0.1 (3 - 2 + 0.5), y' = 1 - 0.01 (1 - 2)
    CHECK(next.x[0] == doctest::Approx(2.85).epsilon(1e-15));
    CHECK(next.y[0] == doctest::Approx(1.01).epsilon(1e-15));
}

TEST_CASE("both drifts use the pre-update state") {
    ProblemSpec p = linear_toy();
    p.g = [](auto x, auto, auto out) { out[0] = -x[0]; };
    const auto next = step({0, {1.0}, {0.0}}, p, std::vector<double>{0.0},
                           std::vector<double>{0.0}, StepSchedule::constant(1.0, 1.0));
    CHECK(next.x[0] == doctest::Approx(0.0));
    CHECK(next.y[0] == doctest::Approx(1.0));  // uses old x = 1, not the new x = 0
}

TEST_CASE("Stepper agrees with step bit for bit") {
    const auto p = linear_toy();
    StepSchedule s{0.9, 0.2, 0.7, 1.0, 2.0};
    IterateState a{0, {1.5}, {-0.5}}, b = a;
    Stepper stepper(p);
    for (int i = 0; i < 50; ++i) {
        const std::vector<double> xi{0.01 * i}, psi{-0.02 * i};
        a = step(a, p, xi, psi, s);
        stepper.advance(b, xi, psi, s);
        REQUIRE(a == b);
    }
}

TEST_CASE("non-finite iterate raises DivergenceError with the iteration") {
    const auto p = linear_toy();
    const std::vector<double> xi{INFINITY}, psi{0.0};
    try {
        step({11, {1.0}, {1.0}}, p, xi, psi, StepSchedule::constant(1.0, 1.0));
        FAIL("expected DivergenceError");
    } catch (const DivergenceError& e) {
        CHECK(e.iteration() == 12);
    }
}

TEST_CASE("dimension mismatch is a ConfigError") {
    const auto p = linear_toy();
    CHECK_THROWS_AS(step({0, {1.0, 2.0}, {1.0}}, p, std::vector<double>{0.0, 0.0},
                         std::vector<double>{0.0}, StepSchedule{}),
                    ConfigError);
}

TEST_CASE("residuals and Lyapunov value") {
    const auto p = linear_toy();
    const IterateState st{0, {3.0}, {1.0}};
    const auto r = residuals(st, p);
    CHECK(r.x_hat[0] == doctest::Approx(1.0));
    CHECK(r.y_hat[0] == doctest::Approx(1.0));
    CHECK(coupling_constant(p.consts) == doctest::Approx(4.0));
    StepSchedule s{1.0, 0.5, 1.0, 1.0, 1.0};
    // k = 3: alpha_k = 1/5, beta_k = 0.5/5 -> ratio 0.5
    const auto v = lyapunov(r, s, 3, p.consts);
    CHECK(v.c == doctest::Approx(4.0));
    CHECK(v.v == doctest::Approx(4.0 * 0.5 * 1.0 + 1.0));
}

TEST_CASE("residuals need a fixed point") {
    auto p = linear_toy();
    p.fixed_point.reset();
    CHECK_THROWS_AS(residuals({0, {0.0}, {0.0}}, p), ConfigError);
}

TEST_CASE("V is zero exactly at the fixed point and positive elsewhere") {
    const auto p = linear_toy();
    CHECK(lyapunov(residuals({0, {0.0}, {0.0}}, p), StepSchedule{}, 0, p.consts).v == 0.0);
    for (double x = -2; x <= 2; x += 0.5)
        for (double y = -2; y <= 2; y += 0.5)
            if (x != 2 * y || y != 0)
                CHECK(lyapunov(residuals({0, {x}, {y}}, p), StepSchedule{}, 5, p.consts).v > 0.0);
}

TEST_CASE("assumption constants validation") {
    CHECK_NOTHROW(AssumptionConstants{}.validate());
    CHECK_THROWS_AS((AssumptionConstants{0.0, 1.0, 2.0, 1.0, 1.0}.validate()), ConfigError);
    CHECK_THROWS_AS((AssumptionConstants{-1.0, 1.0, 1.0, 1.0, 1.0}.validate()), ConfigError);
    CHECK_THROWS_AS((AssumptionConstants{0.0, 1.0, 0.0, 1.0, 1.0}.validate()), ConfigError);
}
