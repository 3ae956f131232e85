#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ttsa/problem_spec.hpp"

namespace ttsa {

/// Root of 2x + cos x = 0 (about -0.450184).
double sgd_pr_root();

/// SGD with Polyak-Ruppert averaging minimizing sum_i (x_i^2 + sin x_i):
/// f(x, y)_i = 2 x_i + cos x_i, g(x, y) = y - x. The slow update is noise-free.
ProblemSpec make_sgd_pr(std::size_t dim = 5);

struct HTilde {
    double value;
    double derivative;
};

/// sign(z) z^2 / 2 on |z| <= 1, sign(z) (|z| - 1/2) outside; C^1 at |z| = 1.
HTilde htilde2(double z);

/// Scalar bilevel instance with u = x + htilde2(y):
///   F(x, y) = 10 u^2 + 10 sin u,  G(x, y) = u^2 + sin y + y^2.
namespace sbo {

double inner_objective(double x, double y);  // F
double outer_objective(double x, double y);  // G
double grad_x_inner(double x, double y);     // f = dF/dx = 20 u + 10 cos u
double grad_y_outer(double x, double y);     // dG/dy = 2 u h'(y) + cos y + 2 y
double grad_x_outer(double x, double y);     // dG/dx = 2 u
double hess_xx_inner(double x, double y);    // 20 - 10 sin u
double hess_yx_inner(double x, double y);    // (20 - 10 sin u) h'(y)

/// Implicit-gradient slow operator; throws NumericError if d2F/dx2 <= 0.
double slow_operator(double x, double y);

/// Root of 20u + 10 cos u = 0.
double inner_root();

}  // namespace sbo

ProblemSpec make_sbo();

/// Problem by CLI/config id ("sgd-pr" or "sbo").
ProblemSpec make_problem(const std::string& id, std::size_t dim = 5);

struct ConstantCheck {
    std::string name;       // "L_f", "mu_f", "L_g", "mu_g"
    double paper_constant;  // the value assumed by the problem
    double worst_ratio;     // max observed ratio for Lipschitz, min for monotonicity
    bool passed;
    std::vector<std::string> witnesses;  // violating pairs, at most a few
};

struct VerificationReport {
    std::vector<ConstantCheck> checks;
    std::size_t samples = 0;
    bool passed() const;
};

/// Samples n random pairs (x1, y1), (x2, y2) in [-box, box]^(d1+d2) and checks
///   |f1 - f2| <= L_f (|dx| + |dy|),  <dx, f(x1, y) - f(x2, y)> >= mu_f |dx|^2,
///   |g1 - g2| <= L_g (|dx| + |dy|),  <y - y*, g(lambda(y), y)> >= mu_g |y - y*|^2,
/// each with slack 1e-9 (scaled by max(1, |rhs|)).
VerificationReport verify_constants(const ProblemSpec& spec, double box, std::size_t n,
                                    std::uint64_t seed = 1);

/// The same four checks on one explicit pair.
VerificationReport verify_pair(const ProblemSpec& spec, std::span<const double> x1,
                               std::span<const double> y1, std::span<const double> x2,
                               std::span<const double> y2);

}  // namespace ttsa
