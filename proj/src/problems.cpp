#include "ttsa/problems.hpp"

#include <boost/math/tools/roots.hpp>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "ttsa/core.hpp"
#include "ttsa/error.hpp"

namespace ttsa {

namespace {

template <class Fn>
double bisect_root(Fn fn, double lo, double hi) {
    std::uintmax_t max_iter = 200;
    const auto [a, b] =
        boost::math::tools::bisect(fn, lo, hi, boost::math::tools::eps_tolerance<double>(), max_iter);
    return 0.5 * (a + b);
}

}  // namespace

double sgd_pr_root() {
    static const double root = bisect_root([](double x) { return 2.0 * x + std::cos(x); }, -1.0, 0.0);
    return root;
}

ProblemSpec make_sgd_pr(std::size_t dim) {
    if (dim < 1) throw ConfigError("sgd-pr dimension must be >= 1");
    const double root = sgd_pr_root();

    ProblemSpec p;
    p.id = "sgd-pr";
    p.d1 = dim;
    p.d2 = dim;
    p.f = [](std::span<const double> x, std::span<const double>, std::span<double> out) {
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = 2.0 * x[i] + std::cos(x[i]);
    };
    p.g = [](std::span<const double> x, std::span<const double> y, std::span<double> out) {
        for (std::size_t i = 0; i < y.size(); ++i) out[i] = y[i] - x[i];
    };
    p.lambda_map = [root](std::span<const double>, std::span<double> out) {
        std::fill(out.begin(), out.end(), root);
    };
    p.fixed_point = FixedPoint{Vector(dim, root), Vector(dim, root)};
    p.consts = {.L_lambda = 0.0, .L_f = 3.0, .mu_f = 1.0, .L_g = 2.0, .mu_g = 1.0};
    p.slow_noise = false;

    p.derivative_checks.push_back(
        {"f = grad_x F", Variable::x,
         [](std::span<const double> x, std::span<const double>) {
             double s = 0.0;
             for (double v : x) s += v * v + std::sin(v);
             return s;
         },
         [f = p.f](std::span<const double> x, std::span<const double> y, std::span<double> out) {
             f(x, y, out);
         }});
    p.derivative_checks.push_back(
        {"g = grad_y |y - x|^2 / 2", Variable::y,
         [](std::span<const double> x, std::span<const double> y) {
             double s = 0.0;
             for (std::size_t i = 0; i < y.size(); ++i) s += 0.5 * (y[i] - x[i]) * (y[i] - x[i]);
             return s;
         },
         [g = p.g](std::span<const double> x, std::span<const double> y, std::span<double> out) {
             g(x, y, out);
         }});
    return p;
}

HTilde htilde2(double z) {
    const double mag = std::abs(z);
    const double sign = (z > 0.0) - (z < 0.0);
    if (mag <= 1.0) return {sign * z * z / 2.0, mag};
    return {sign * (mag - 0.5), 1.0};
}

namespace sbo {

namespace {
double inner_arg(double x, double y) { return x + htilde2(y).value; }
}  // namespace

double inner_objective(double x, double y) {
    const double u = inner_arg(x, y);
    return 10.0 * u * u + 10.0 * std::sin(u);
}

double outer_objective(double x, double y) {
    const double u = inner_arg(x, y);
    return u * u + std::sin(y) + y * y;
}

double grad_x_inner(double x, double y) {
    const double u = inner_arg(x, y);
    return 20.0 * u + 10.0 * std::cos(u);
}

double grad_y_outer(double x, double y) {
    const auto h = htilde2(y);
    const double u = x + h.value;
    return 2.0 * u * h.derivative + std::cos(y) + 2.0 * y;
}

double grad_x_outer(double x, double y) { return 2.0 * inner_arg(x, y); }

double hess_xx_inner(double x, double y) { return 20.0 - 10.0 * std::sin(inner_arg(x, y)); }

double hess_yx_inner(double x, double y) {
    return (20.0 - 10.0 * std::sin(inner_arg(x, y))) * htilde2(y).derivative;
}

double slow_operator(double x, double y) {
    const double hxx = hess_xx_inner(x, y);
    if (!(hxx > 0.0)) {
        std::ostringstream msg;
        msg << "inner Hessian d2F/dx2 = " << hxx << " is not positive at (" << x << ", " << y << ")";
        throw NumericError(msg.str());
    }
    return grad_y_outer(x, y) - hess_yx_inner(x, y) / hxx * grad_x_outer(x, y);
}

double inner_root() {
    static const double root =
        bisect_root([](double u) { return 20.0 * u + 10.0 * std::cos(u); }, -1.0, 0.0);
    return root;
}

}  // namespace sbo

ProblemSpec make_sbo() {
    const double u_star = sbo::inner_root();

    ProblemSpec p;
    p.id = "sbo";
    p.d1 = 1;
    p.d2 = 1;
    p.f = [](std::span<const double> x, std::span<const double> y, std::span<double> out) {
        out[0] = sbo::grad_x_inner(x[0], y[0]);
    };
    p.g = [](std::span<const double> x, std::span<const double> y, std::span<double> out) {
        out[0] = sbo::slow_operator(x[0], y[0]);
    };
    p.lambda_map = [u_star](std::span<const double> y, std::span<double> out) {
        out[0] = u_star - htilde2(y[0]).value;
    };
    p.consts = {.L_lambda = 3.0, .L_f = 60.0, .mu_f = 10.0, .L_g = 3.0, .mu_g = 1.0};
    p.slow_noise = true;

    // y* solves g(lambda(y), y) = 0; the map is increasing with sign change on [-5, 5].
    const double y_star = bisect_root(
        [u_star](double y) { return sbo::slow_operator(u_star - htilde2(y).value, y); }, -5.0, 5.0);
    p.fixed_point = FixedPoint{Vector{u_star - htilde2(y_star).value}, Vector{y_star}};

    using S = std::span<const double>;
    auto scalar_grad = [](double (*fn)(double, double)) {
        return [fn](S x, S y, std::span<double> out) { out[0] = fn(x[0], y[0]); };
    };
    p.derivative_checks = {
        {"grad_x F", Variable::x, [](S x, S y) { return sbo::inner_objective(x[0], y[0]); },
         scalar_grad(sbo::grad_x_inner)},
        {"grad_y G", Variable::y, [](S x, S y) { return sbo::outer_objective(x[0], y[0]); },
         scalar_grad(sbo::grad_y_outer)},
        {"grad_x G", Variable::x, [](S x, S y) { return sbo::outer_objective(x[0], y[0]); },
         scalar_grad(sbo::grad_x_outer)},
        {"hess_xx F", Variable::x, [](S x, S y) { return sbo::grad_x_inner(x[0], y[0]); },
         scalar_grad(sbo::hess_xx_inner)},
        {"hess_yx F", Variable::y, [](S x, S y) { return sbo::grad_x_inner(x[0], y[0]); },
         scalar_grad(sbo::hess_yx_inner)},
    };
    return p;
}

ProblemSpec make_problem(const std::string& id, std::size_t dim) {
    if (id == "sgd-pr") return make_sgd_pr(dim);
    if (id == "sbo") return make_sbo();
    throw ConfigError("unknown problem '" + id + "' (expected sgd-pr or sbo)");
}

bool VerificationReport::passed() const {
    for (const auto& c : checks)
        if (!c.passed) return false;
    return true;
}

namespace {

constexpr double kSlack = 1e-9;
constexpr std::size_t kMaxWitnesses = 5;

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

Vector diff(std::span<const double> a, std::span<const double> b) {
    Vector d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    return d;
}

std::string describe(std::span<const double> x1, std::span<const double> y1,
                     std::span<const double> x2, std::span<const double> y2) {
    auto vec = [](std::span<const double> v) {
        std::ostringstream s;
        s.precision(17);
        s << '[';
        for (std::size_t i = 0; i < v.size(); ++i) s << (i ? ", " : "") << v[i];
        s << ']';
        return s.str();
    };
    return "(x1=" + vec(x1) + ", y1=" + vec(y1) + ") vs (x2=" + vec(x2) + ", y2=" + vec(y2) + ")";
}

class Verifier {
public:
    explicit Verifier(const ProblemSpec& spec) : spec_(spec) {
        if (!spec.fixed_point) throw ConfigError("verify_constants needs a cached fixed point");
        const auto& c = spec.consts;
        checks_ = {{"L_f", c.L_f, std::numeric_limits<double>::quiet_NaN(), true, {}},
                   {"mu_f", c.mu_f, std::numeric_limits<double>::quiet_NaN(), true, {}},
                   {"L_g", c.L_g, std::numeric_limits<double>::quiet_NaN(), true, {}},
                   {"mu_g", c.mu_g, std::numeric_limits<double>::quiet_NaN(), true, {}}};
    }

    void pair(std::span<const double> x1, std::span<const double> y1, std::span<const double> x2,
              std::span<const double> y2) {
        ++samples_;
        const Vector dx = diff(x1, x2);
        const Vector dy = diff(y1, y2);
        const double nx = std::sqrt(squared_norm(dx));
        const double ny = std::sqrt(squared_norm(dy));

        const Vector f1 = spec_.eval_f(x1, y1);
        const Vector g1 = spec_.eval_g(x1, y1);
        lipschitz(checks_[0], std::sqrt(squared_norm(diff(f1, spec_.eval_f(x2, y2)))), nx + ny,
                  x1, y1, x2, y2);
        lipschitz(checks_[2], std::sqrt(squared_norm(diff(g1, spec_.eval_g(x2, y2)))), nx + ny,
                  x1, y1, x2, y2);
        monotone(checks_[1], dot(dx, diff(f1, spec_.eval_f(x2, y1))), nx * nx, x1, y1, x2, y1);

        for (auto y : {y1, y2}) {
            const Vector y_hat = diff(y, spec_.fixed_point->y);
            const Vector lam = spec_.eval_lambda(y);
            monotone(checks_[3], dot(y_hat, spec_.eval_g(lam, y)), squared_norm(y_hat), lam, y,
                     lam, spec_.fixed_point->y);
        }
    }

    VerificationReport report() const { return {checks_, samples_}; }

private:
    void lipschitz(ConstantCheck& c, double lhs, double dist, std::span<const double> x1,
                   std::span<const double> y1, std::span<const double> x2,
                   std::span<const double> y2) {
        if (dist > 0.0) c.worst_ratio = std::fmax(c.worst_ratio, lhs / dist);
        const double rhs = c.paper_constant * dist;
        if (lhs > rhs + kSlack * std::max(1.0, rhs)) fail(c, x1, y1, x2, y2);
    }

    void monotone(ConstantCheck& c, double lhs, double sq, std::span<const double> x1,
                  std::span<const double> y1, std::span<const double> x2,
                  std::span<const double> y2) {
        if (sq > 0.0) c.worst_ratio = std::fmin(c.worst_ratio, lhs / sq);
        const double rhs = c.paper_constant * sq;
        if (lhs < rhs - kSlack * std::max(1.0, rhs)) fail(c, x1, y1, x2, y2);
    }

    static void fail(ConstantCheck& c, std::span<const double> x1, std::span<const double> y1,
                     std::span<const double> x2, std::span<const double> y2) {
        c.passed = false;
        if (c.witnesses.size() < kMaxWitnesses) c.witnesses.push_back(describe(x1, y1, x2, y2));
    }

    const ProblemSpec& spec_;
    std::vector<ConstantCheck> checks_;
    std::size_t samples_ = 0;
};

}  // namespace

VerificationReport verify_constants(const ProblemSpec& spec, double box, std::size_t n,
                                    std::uint64_t seed) {
    if (!(box > 0.0)) throw ConfigError("verification box half-width must be positive");
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> unif(-box, box);
    auto draw = [&](std::size_t d) {
        Vector v(d);
        for (double& e : v) e = unif(gen);
        return v;
    };
    Verifier verifier(spec);
    for (std::size_t i = 0; i < n; ++i) {
        const Vector x1 = draw(spec.d1), y1 = draw(spec.d2), x2 = draw(spec.d1), y2 = draw(spec.d2);
        verifier.pair(x1, y1, x2, y2);
    }
    return verifier.report();
}

VerificationReport verify_pair(const ProblemSpec& spec, std::span<const double> x1,
                               std::span<const double> y1, std::span<const double> x2,
                               std::span<const double> y2) {
    Verifier verifier(spec);
    verifier.pair(x1, y1, x2, y2);
    return verifier.report();
}

}  // namespace ttsa
