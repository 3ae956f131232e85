#include "ttsa/config_io.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "ttsa/error.hpp"
#include "ttsa/problems.hpp"
#include "ttsa/rate_planner.hpp"

namespace ttsa {

using nlohmann::json;

namespace {

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
    for (const auto& [key, _] : obj.items())
        if (!allowed.count(key)) throw ConfigError(where + ": unknown field '" + key + "'");
}

template <typename T>
T get(const json& obj, const char* name, const std::string& where) {
    if (!obj.contains(name)) throw ConfigError(where + ": missing field '" + name + "'");
    try {
        return obj.at(name).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(where + ": field '" + name + "' has the wrong type");
    }
}

template <typename T>
T get_or(const json& obj, const char* name, T fallback, const std::string& where) {
    return obj.contains(name) ? get<T>(obj, name, where) : fallback;
}

json require_object(const json& doc, const std::string& where) {
    if (!doc.is_object()) throw ConfigError(where + " must be a JSON object");
    return doc;
}

GammaMatrix gamma_from(const json& v, const std::string& where) {
    if (v.is_number()) return GammaMatrix::uniform(v.get<double>());
    require_object(v, where);
    reject_unknown(v, {"g11", "g12", "g21", "g22"}, where);
    return {get<double>(v, "g11", where), get<double>(v, "g12", where),
            get<double>(v, "g21", where), get<double>(v, "g22", where)};
}

DeltaMatrix delta_from(const json& v, const std::string& where) {
    if (v.is_number()) return DeltaMatrix::uniform(v.get<double>());
    require_object(v, where);
    reject_unknown(v, {"d11", "d12", "d21", "d22"}, where);
    return {get<double>(v, "d11", where), get<double>(v, "d12", where),
            get<double>(v, "d21", where), get<double>(v, "d22", where)};
}

Vector vector_from(const json& v, const std::string& where) {
    if (v.is_number()) return {v.get<double>()};
    if (!v.is_array()) throw ConfigError(where + " must be a number or an array");
    Vector out;
    for (const auto& e : v) {
        if (!e.is_number()) throw ConfigError(where + " entries must be numbers");
        out.push_back(e.get<double>());
    }
    return out;
}

std::string describe(const char* label, double v) {
    std::ostringstream s;
    s.precision(6);
    s << label << '=' << v;
    return s.str();
}

std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (const auto& s : items) out += (out.empty() ? "" : "; ") + s;
    return out;
}

void resolve_planned_schedule(ExperimentConfig& cfg, const json& s, const std::string& where) {
    const auto plan_kind = get<std::string>(s, "plan", where);
    if (plan_kind != "auto") throw ConfigError(where + ": plan must be \"auto\"");
    const ProblemSpec problem = make_problem(cfg.problem, cfg.dim);
    const auto& consts = problem.consts;
    const NoiseSpec noise = effective_noise(cfg.noise, problem);

    if (noise.kind == NoiseKind::quadratic) {
        reject_unknown(s, {"plan", "omega", "beta_cap", "origin"}, where);
        const double omega = get_or<double>(s, "omega", ratio_threshold(consts), where);
        const double beta_cap = get_or<double>(s, "beta_cap", 1.0, where);
        const RatePlan plan = theorem2_plan(consts, noise.gamma, omega, beta_cap);
        if (!plan.feasible)
            throw ConfigError(where + ": exponential plan infeasible: " + join(plan.violations));
        cfg.schedule = plan.schedule;
        cfg.schedule_origin = "exponential plan " + describe("omega", omega) + " " +
                              describe("beta_cap", beta_cap) + " " +
                              describe("epsilon", *plan.epsilon);
        return;
    }

    reject_unknown(s, {"plan", "alpha", "beta", "b", "k0", "origin"}, where);
    RatePair rates{};
    std::string label;
    if (noise.kind == NoiseKind::state) {
        rates = solve_rate_state(noise.delta);
        label = "practical state-noise plan";
    } else if (noise.kind == NoiseKind::time) {
        const TimeRate tr = solve_rate_time(noise.time.gamma1, noise.time.gamma2);
        if (!tr.feasible) throw ConfigError(where + ": " + join(tr.violations));
        rates = tr.rates;
        label = "practical time-noise plan";
    } else {
        throw ConfigError(where + ": a planned schedule needs a noise model");
    }
    const StepPair minimal = minimal_feasible_steps(consts, rates);
    StepSchedule sched;
    sched.a = rates.a;
    sched.b = get_or<double>(s, "b", 1.0, where);
    sched.alpha = get_or<double>(s, "alpha", minimal.alpha_k, where);
    sched.beta = get_or<double>(s, "beta", minimal.beta_k, where);
    sched.k0 = get_or<double>(s, "k0", std::pow(sched.alpha, 1.0 / rates.a), where);
    cfg.schedule = sched;
    cfg.schedule_origin = label + " " + describe("a", rates.a) + " " + describe("t", rates.t);
}

}  // namespace

json noise_to_json(const NoiseSpec& n) {
    json out{{"kind", to_string(n.kind)}};
    switch (n.kind) {
        case NoiseKind::none: break;
        case NoiseKind::state:
            out["delta"] = {{"d11", n.delta.d11}, {"d12", n.delta.d12},
                            {"d21", n.delta.d21}, {"d22", n.delta.d22}};
            [[fallthrough]];
        case NoiseKind::quadratic:
            out["gamma"] = {{"g11", n.gamma.g11}, {"g12", n.gamma.g12},
                            {"g21", n.gamma.g21}, {"g22", n.gamma.g22}};
            break;
        case NoiseKind::time:
            out["scale_xi"] = n.time.scale_xi;
            out["scale_psi"] = n.time.scale_psi;
            out["gamma1"] = n.time.gamma1;
            out["gamma2"] = n.time.gamma2;
            break;
    }
    return out;
}

NoiseSpec noise_from_json(const json& doc) {
    const std::string where = "noise";
    require_object(doc, where);
    const NoiseKind kind = noise_kind_from_string(get<std::string>(doc, "kind", where));
    NoiseSpec n;
    switch (kind) {
        case NoiseKind::none:
            reject_unknown(doc, {"kind"}, where);
            n = NoiseSpec::none();
            break;
        case NoiseKind::state:
            reject_unknown(doc, {"kind", "gamma", "delta"}, where);
            if (!doc.contains("gamma") || !doc.contains("delta"))
                throw ConfigError("noise: state kind needs 'gamma' and 'delta'");
            n = NoiseSpec::state(gamma_from(doc["gamma"], "noise.gamma"),
                                 delta_from(doc["delta"], "noise.delta"));
            break;
        case NoiseKind::quadratic:
            reject_unknown(doc, {"kind", "gamma"}, where);
            if (!doc.contains("gamma")) throw ConfigError("noise: quadratic kind needs 'gamma'");
            n = NoiseSpec::quadratic(gamma_from(doc["gamma"], "noise.gamma"));
            break;
        case NoiseKind::time:
            reject_unknown(doc, {"kind", "scale_xi", "scale_psi", "gamma1", "gamma2"}, where);
            n = NoiseSpec::time_decay({get<double>(doc, "scale_xi", where),
                                       get_or<double>(doc, "scale_psi", 0.0, where),
                                       get<double>(doc, "gamma1", where),
                                       get_or<double>(doc, "gamma2", 0.0, where)});
            break;
    }
    n.validate();
    return n;
}

json config_to_json(const ExperimentConfig& c) {
    json sched{{"alpha", c.schedule.alpha}, {"beta", c.schedule.beta}, {"a", c.schedule.a},
               {"b", c.schedule.b},         {"k0", c.schedule.k0},     {"origin", c.schedule_origin}};
    json out{{"problem", {{"id", c.problem}, {"dim", c.dim}}},
             {"noise", noise_to_json(c.noise)},
             {"schedule", sched},
             {"iterations", c.iterations},
             {"replicates", c.replicates},
             {"master_seed", c.master_seed},
             {"init", {{"x0", c.x0}, {"y0", c.y0}}}};
    if (c.checkpoints.empty())
        out["per_decade"] = c.per_decade;
    else
        out["checkpoints"] = c.checkpoints;
    return out;
}

ExperimentConfig config_from_json(const json& doc) {
    require_object(doc, "config");
    reject_unknown(doc,
                   {"description", "problem", "noise", "schedule", "iterations", "replicates",
                    "master_seed", "checkpoints", "per_decade", "init"},
                   "config");
    ExperimentConfig cfg;
    if (!doc.contains("problem")) throw ConfigError("config: missing field 'problem'");
    const json& p = doc["problem"];
    if (p.is_string()) {
        cfg.problem = p.get<std::string>();
    } else {
        require_object(p, "problem");
        reject_unknown(p, {"id", "dim"}, "problem");
        cfg.problem = get<std::string>(p, "id", "problem");
        cfg.dim = get_or<std::size_t>(p, "dim", cfg.dim, "problem");
    }
    if (cfg.problem != "sgd-pr" && cfg.problem != "sbo")
        throw ConfigError("problem: unknown id '" + cfg.problem + "' (expected sgd-pr or sbo)");
    if (cfg.problem == "sbo") cfg.dim = 1;
    if (cfg.dim < 1) throw ConfigError("problem: dim must be >= 1");

    cfg.noise = doc.contains("noise") ? noise_from_json(doc["noise"]) : NoiseSpec::none();
    cfg.iterations = get<std::uint64_t>(doc, "iterations", "config");
    cfg.replicates = get_or<std::uint32_t>(doc, "replicates", 1, "config");
    cfg.master_seed = get_or<std::uint64_t>(doc, "master_seed", 1, "config");
    if (doc.contains("checkpoints") && doc.contains("per_decade"))
        throw ConfigError("config: give either 'checkpoints' or 'per_decade', not both");
    cfg.checkpoints = get_or<std::vector<std::uint64_t>>(doc, "checkpoints", {}, "config");
    cfg.per_decade = get_or<int>(doc, "per_decade", kDefaultPerDecade, "config");
    if (doc.contains("init")) {
        const json& init = require_object(doc["init"], "init");
        reject_unknown(init, {"x0", "y0"}, "init");
        if (init.contains("x0")) cfg.x0 = vector_from(init["x0"], "init.x0");
        if (init.contains("y0")) cfg.y0 = vector_from(init["y0"], "init.y0");
    }

    if (!doc.contains("schedule")) throw ConfigError("config: missing field 'schedule'");
    const json s = require_object(doc["schedule"], "schedule");
    if (s.contains("plan")) {
        resolve_planned_schedule(cfg, s, "schedule");
    } else if (get_or<bool>(s, "constant", false, "schedule")) {
        reject_unknown(s, {"constant", "alpha", "beta", "origin"}, "schedule");
        cfg.schedule =
            StepSchedule::constant(get<double>(s, "alpha", "schedule"), get<double>(s, "beta", "schedule"));
        cfg.schedule_origin = get_or<std::string>(s, "origin", "explicit", "schedule");
    } else {
        reject_unknown(s, {"alpha", "beta", "a", "b", "k0", "origin"}, "schedule");
        StepSchedule sched;
        sched.alpha = get<double>(s, "alpha", "schedule");
        sched.beta = get<double>(s, "beta", "schedule");
        sched.a = get<double>(s, "a", "schedule");
        sched.b = get_or<double>(s, "b", 1.0, "schedule");
        sched.k0 = get_or<double>(s, "k0", 0.0, "schedule");
        cfg.schedule = sched;
        cfg.schedule_origin = get_or<std::string>(s, "origin", "explicit", "schedule");
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": invalid JSON (" + e.what() + ")");
    }
    return config_from_json(doc);
}

}  // namespace ttsa
