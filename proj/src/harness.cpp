#include "ttsa/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "ttsa/config_io.hpp"
#include "ttsa/error.hpp"
#include "ttsa/log.hpp"
#include "ttsa/problems.hpp"
#include "ttsa/version.hpp"

namespace ttsa {

using nlohmann::json;

void ExperimentConfig::validate() const {
    if (replicates < 1) throw ConfigError("replicates must be >= 1");
    if (per_decade < 1) throw ConfigError("per_decade must be >= 1");
    if (x0.empty() || y0.empty()) throw ConfigError("init x0 and y0 must be nonempty");
    for (double v : x0)
        if (!std::isfinite(v)) throw ConfigError("init x0 must be finite");
    for (double v : y0)
        if (!std::isfinite(v)) throw ConfigError("init y0 must be finite");
    schedule.validate();
    noise.validate();
    for (std::size_t i = 0; i < checkpoints.size(); ++i) {
        if (i > 0 && checkpoints[i] <= checkpoints[i - 1])
            throw ConfigError("checkpoints must be strictly increasing");
    }
    if (!checkpoints.empty() && checkpoints.back() > iterations)
        throw ConfigError("last checkpoint exceeds iterations");
}

std::vector<std::uint64_t> ExperimentConfig::resolved_checkpoints() const {
    return checkpoints.empty() ? default_checkpoints(iterations, per_decade) : checkpoints;
}

std::vector<std::uint64_t> default_checkpoints(std::uint64_t iterations, int per_decade) {
    if (per_decade < 1) throw ConfigError("per_decade must be >= 1");
    std::vector<std::uint64_t> out{0};
    if (iterations == 0) return out;
    for (int j = 0;; ++j) {
        const double v = std::floor(std::pow(10.0, static_cast<double>(j) / per_decade) * (1.0 + 1e-12));
        if (v >= static_cast<double>(iterations)) break;
        const auto k = static_cast<std::uint64_t>(v);
        if (k > out.back()) out.push_back(k);
    }
    out.push_back(iterations);
    return out;
}

NoiseSpec effective_noise(const NoiseSpec& noise, const ProblemSpec& problem) {
    NoiseSpec out = noise;
    if (!problem.slow_noise) {
        out.gamma.g21 = 0.0;
        out.gamma.g22 = 0.0;
        out.time.scale_psi = 0.0;
    }
    return out;
}

namespace {

Vector broadcast(const Vector& v, std::size_t d, const char* name) {
    if (v.size() == d) return v;
    if (v.size() == 1) return Vector(d, v.front());
    throw ConfigError(std::string("init ") + name + " has " + std::to_string(v.size()) +
                      " entries, problem needs " + std::to_string(d));
}

}  // namespace

TrajectoryRecord run_trajectory(const ExperimentConfig& config, const ProblemSpec& problem,
                                std::uint32_t replicate_id) {
    if (!problem.fixed_point || !problem.lambda_map)
        throw ConfigError("problem '" + problem.id + "' needs lambda and y* for V");
    const auto cps = config.resolved_checkpoints();
    const NoiseSpec noise = effective_noise(config.noise, problem);
    const bool state_noise = noise.kind == NoiseKind::state || noise.kind == NoiseKind::quadratic;
    const double c = coupling_constant(problem.consts);
    const auto& sched = config.schedule;
    const RngStream rng(config.master_seed, replicate_id);
    const Vector& y_star = problem.fixed_point->y;

    IterateState state{0, broadcast(config.x0, problem.d1, "x0"),
                       broadcast(config.y0, problem.d2, "y0")};
    Stepper stepper(problem);
    Vector lam(problem.d1), xi(problem.d1), psi(problem.d2);

    double x_sq = 0.0, y_sq = 0.0;
    auto update_residuals = [&] {
        problem.lambda_map(state.y, lam);
        x_sq = 0.0;
        for (std::size_t i = 0; i < lam.size(); ++i) {
            const double d = state.x[i] - lam[i];
            x_sq += d * d;
        }
        y_sq = 0.0;
        for (std::size_t i = 0; i < y_star.size(); ++i) {
            const double d = state.y[i] - y_star[i];
            y_sq += d * d;
        }
    };

    TrajectoryRecord rec;
    rec.replicate_id = replicate_id;
    rec.k.reserve(cps.size());
    rec.V.reserve(cps.size());
    std::size_t next = 0;
    const std::uint64_t n = config.iterations;
    for (std::uint64_t k = 0;; ++k) {
        const bool at_checkpoint = next < cps.size() && cps[next] == k;
        if (state_noise || at_checkpoint) update_residuals();
        if (at_checkpoint) {
            rec.k.push_back(k);
            rec.V.push_back(lyapunov_value(x_sq, y_sq, sched, k, c));
            ++next;
        }
        if (k == n) break;
        sample_into(target_variances(noise, x_sq, y_sq, k, sched.k0), k, rng, xi, psi);
        stepper.advance(state, xi, psi, sched);
        const double norm_sq = squared_norm(state.x) + squared_norm(state.y);
        if (!std::isfinite(norm_sq) || norm_sq > kDivergenceBound * kDivergenceBound) {
            rec.diverged = true;
            rec.diverged_at = state.k;
            break;
        }
    }
    return rec;
}

TrajectoryRecord run_trajectory(const ExperimentConfig& config, std::uint32_t replicate_id) {
    const ProblemSpec problem = make_problem(config.problem, config.dim);
    return run_trajectory(config, problem, replicate_id);
}

double pairwise_sum(std::span<const double> values) {
    if (values.empty()) return 0.0;
    if (values.size() == 1) return values[0];
    const std::size_t half = values.size() / 2;
    return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

EnsembleSummary summarize(const ExperimentConfig& config, std::vector<TrajectoryRecord> records) {
    std::sort(records.begin(), records.end(),
              [](const auto& l, const auto& r) { return l.replicate_id < r.replicate_id; });
    EnsembleSummary out;
    out.config = config;
    out.version = kVersion;
    std::vector<const TrajectoryRecord*> alive;
    for (const auto& r : records) {
        if (r.diverged)
            ++out.diverged;
        else
            alive.push_back(&r);
    }
    if (alive.empty())
        throw DivergenceError("all " + std::to_string(records.size()) + " replicates diverged",
                              records.empty() ? 0 : records.front().diverged_at);
    if (alive.size() == 1) warn("one alive replicate: stderr_V reported as 0");

    const auto cps = config.resolved_checkpoints();
    const auto n = static_cast<double>(alive.size());
    std::vector<double> values(alive.size());
    for (std::size_t j = 0; j < cps.size(); ++j) {
        for (std::size_t i = 0; i < alive.size(); ++i) values[i] = alive[i]->V.at(j);
        CheckpointStats st;
        st.k = cps[j];
        st.n_alive = static_cast<std::uint32_t>(alive.size());
        st.mean_V = pairwise_sum(values) / n;
        if (alive.size() > 1) {
            for (double& v : values) v = (v - st.mean_V) * (v - st.mean_V);
            st.stderr_V = std::sqrt(pairwise_sum(values) / (n - 1.0) / n);
        }
        out.checkpoints.push_back(st);
    }
    return out;
}

EnsembleSummary run_ensemble(const ExperimentConfig& config, const RunOptions& options) {
    config.validate();
    const auto start = std::chrono::steady_clock::now();
    const ProblemSpec problem = make_problem(config.problem, config.dim);

    unsigned threads = options.threads;
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min<unsigned>(threads, config.replicates);

    std::vector<TrajectoryRecord> records(config.replicates);
    std::atomic<std::uint32_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (;;) {
            const std::uint32_t id = next.fetch_add(1);
            if (id >= config.replicates) return;
            try {
                records[id] = run_trajectory(config, problem, id);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next.store(config.replicates);
                return;
            }
        }
    };
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);

    EnsembleSummary out = summarize(config, std::move(records));
    out.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

namespace {

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

json summary_json(const EnsembleSummary& s) {
    json cps = json::array();
    for (const auto& c : s.checkpoints)
        cps.push_back({{"k", c.k}, {"mean_V", c.mean_V}, {"stderr_V", c.stderr_V},
                       {"n_alive", c.n_alive}});
    return {{"schema_version", kSummarySchemaVersion},
            {"version", s.version},
            {"config", config_to_json(s.config)},
            {"checkpoints", cps},
            {"diverged", s.diverged},
            {"wall_time_s", s.wall_time_s}};
}

template <typename T>
T field(const json& obj, const char* name, const std::string& where) {
    if (!obj.is_object() || !obj.contains(name))
        throw SchemaError(where + ": missing field '" + name + "'");
    try {
        return obj.at(name).get<T>();
    } catch (const json::exception&) {
        throw SchemaError(where + ": field '" + name + "' has the wrong type");
    }
}

EnsembleSummary load_csv(std::istream& in, const std::string& where) {
    std::string line;
    if (!std::getline(in, line)) throw SchemaError(where + ": empty CSV");
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string col;
        while (std::getline(ss, col, ',')) header.push_back(col);
    }
    const char* required[] = {"k", "mean_V", "stderr_V", "n_alive"};
    std::size_t pos[4];
    for (int i = 0; i < 4; ++i) {
        const auto it = std::find(header.begin(), header.end(), required[i]);
        if (it == header.end())
            throw SchemaError(where + ": missing column '" + required[i] + "'");
        pos[i] = static_cast<std::size_t>(it - header.begin());
    }
    EnsembleSummary s;
    s.config.checkpoints.clear();
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != header.size())
            throw SchemaError(where + ": row " + std::to_string(row) + " has " +
                              std::to_string(cells.size()) + " cells, expected " +
                              std::to_string(header.size()));
        try {
            CheckpointStats c;
            c.k = std::stoull(cells[pos[0]]);
            c.mean_V = std::stod(cells[pos[1]]);
            c.stderr_V = std::stod(cells[pos[2]]);
            c.n_alive = static_cast<std::uint32_t>(std::stoul(cells[pos[3]]));
            s.checkpoints.push_back(c);
        } catch (const std::logic_error&) {
            throw SchemaError(where + ": unparsable value in row " + std::to_string(row));
        }
    }
    return s;
}

}  // namespace

std::filesystem::path csv_path_for(const std::filesystem::path& json_path) {
    auto p = json_path;
    p.replace_extension(".csv");
    return p;
}

std::string summary_csv(const EnsembleSummary& s) {
    std::string out = "k,mean_V,stderr_V,n_alive\n";
    for (const auto& c : s.checkpoints)
        out += std::to_string(c.k) + ',' + fmt17(c.mean_V) + ',' + fmt17(c.stderr_V) + ',' +
               std::to_string(c.n_alive) + '\n';
    return out;
}

void persist(const EnsembleSummary& summary, const std::filesystem::path& json_path) {
    if (json_path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(json_path.parent_path(), ec);
    }
    {
        std::ofstream out(json_path);
        if (!out) throw IoError("cannot write " + json_path.string());
        out << summary_json(summary).dump(2) << '\n';
        if (!out) throw IoError("write failed for " + json_path.string());
    }
    const auto csv = csv_path_for(json_path);
    std::ofstream out(csv, std::ios::binary);
    if (!out) throw IoError("cannot write " + csv.string());
    out << summary_csv(summary);
    if (!out) throw IoError("write failed for " + csv.string());
}

EnsembleSummary load_summary(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    const std::string where = path.string();
    if (path.extension() == ".csv") return load_csv(in, where);

    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw SchemaError(where + ": invalid JSON (" + e.what() + ")");
    }
    const int version = field<int>(doc, "schema_version", where);
    if (version != kSummarySchemaVersion)
        throw SchemaError(where + ": schema_version " + std::to_string(version) +
                          " is not supported (expected " +
                          std::to_string(kSummarySchemaVersion) + ")");
    EnsembleSummary s;
    try {
        s.config = config_from_json(field<json>(doc, "config", where));
    } catch (const ConfigError& e) {
        throw SchemaError(where + ": config: " + e.what());
    }
    s.version = field<std::string>(doc, "version", where);
    s.diverged = field<std::uint32_t>(doc, "diverged", where);
    s.wall_time_s = field<double>(doc, "wall_time_s", where);
    const json cps = field<json>(doc, "checkpoints", where);
    if (!cps.is_array()) throw SchemaError(where + ": checkpoints must be an array");
    for (std::size_t i = 0; i < cps.size(); ++i) {
        const std::string at = where + ": checkpoints[" + std::to_string(i) + "]";
        s.checkpoints.push_back({field<std::uint64_t>(cps[i], "k", at),
                                 field<double>(cps[i], "mean_V", at),
                                 field<double>(cps[i], "stderr_V", at),
                                 field<std::uint32_t>(cps[i], "n_alive", at)});
    }
    return s;
}

}  // namespace ttsa
