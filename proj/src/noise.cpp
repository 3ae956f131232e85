#include "ttsa/noise.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ttsa/error.hpp"

namespace ttsa {

double DeltaMatrix::max() const noexcept { return std::max({d11, d12, d21, d22}); }

std::string to_string(NoiseKind kind) {
    switch (kind) {
        case NoiseKind::none: return "none";
        case NoiseKind::state: return "state";
        case NoiseKind::quadratic: return "quadratic";
        case NoiseKind::time: return "time";
    }
    return "none";
}

NoiseKind noise_kind_from_string(const std::string& name) {
    if (name == "none") return NoiseKind::none;
    if (name == "state") return NoiseKind::state;
    if (name == "quadratic") return NoiseKind::quadratic;
    if (name == "time") return NoiseKind::time;
    throw ConfigError("unknown noise kind '" + name + "'");
}

NoiseSpec NoiseSpec::none() { return {}; }

NoiseSpec NoiseSpec::state(GammaMatrix gamma, DeltaMatrix delta) {
    NoiseSpec s;
    s.kind = NoiseKind::state;
    s.gamma = gamma;
    s.delta = delta;
    return s;
}

NoiseSpec NoiseSpec::quadratic(GammaMatrix gamma) {
    NoiseSpec s;
    s.kind = NoiseKind::quadratic;
    s.gamma = gamma;
    s.delta = DeltaMatrix::uniform(1.0);
    return s;
}

NoiseSpec NoiseSpec::time_decay(TimeNoise time) {
    NoiseSpec s;
    s.kind = NoiseKind::time;
    s.time = time;
    return s;
}

void NoiseSpec::validate() const {
    auto nonneg = [](double v) { return v >= 0.0 && std::isfinite(v); };
    auto check_scales = [&] {
        for (double g : {gamma.g11, gamma.g12, gamma.g21, gamma.g22})
            if (!nonneg(g)) throw ConfigError("noise scales Gamma_ij must be >= 0");
    };
    switch (kind) {
        case NoiseKind::none: return;
        case NoiseKind::state:
            for (double d : {delta.d11, delta.d12, delta.d21, delta.d22})
                if (!(d >= 0.0 && d < 1.0))
                    throw ConfigError("state noise requires every delta_ij in [0, 1)");
            check_scales();
            return;
        case NoiseKind::quadratic:
            for (double d : {delta.d11, delta.d12, delta.d21, delta.d22})
                if (d != 1.0) throw ConfigError("quadratic noise requires every delta_ij == 1");
            check_scales();
            return;
        case NoiseKind::time: {
            if (!nonneg(time.scale_xi) || !nonneg(time.scale_psi))
                throw ConfigError("time noise scales Gamma'_ii must be >= 0");
            if (!nonneg(time.gamma1) || !nonneg(time.gamma2))
                throw ConfigError("time noise exponents gamma_i must be >= 0");
            const double gap = time.gamma1 - time.gamma2;
            if (!(gap >= -1.0 && gap < 0.5))
                throw ConfigError("time noise requires gamma1 - gamma2 in [-1, 1/2)");
            return;
        }
    }
}

NoiseVariances target_variances(const NoiseSpec& spec, double x_sq, double y_sq,
                                std::uint64_t k, double k0) {
    switch (spec.kind) {
        case NoiseKind::none: return {0.0, 0.0};
        case NoiseKind::state: {
            const auto& g = spec.gamma;
            const auto& d = spec.delta;
            // |v|^(2 delta) == (|v|^2)^delta; pow(0, 0) == 1 keeps delta = 0 residual-free.
            return {g.g11 * std::pow(x_sq, d.d11) + g.g12 * std::pow(y_sq, d.d12),
                    g.g21 * std::pow(x_sq, d.d21) + g.g22 * std::pow(y_sq, d.d22)};
        }
        case NoiseKind::quadratic: {
            const auto& g = spec.gamma;
            return {g.g11 * x_sq + g.g12 * y_sq, g.g21 * x_sq + g.g22 * y_sq};
        }
        case NoiseKind::time: {
            const double shift = static_cast<double>(k) + 1.0 + k0;
            return {spec.time.scale_xi * std::pow(shift, -spec.time.gamma1),
                    spec.time.scale_psi * std::pow(shift, -spec.time.gamma2)};
        }
    }
    return {0.0, 0.0};
}

NoiseVariances target_variances(const NoiseSpec& spec, const Residuals& res, std::uint64_t k,
                                double k0) {
    return target_variances(spec, res.x_sq(), res.y_sq(), k, k0);
}

namespace {

std::uint64_t splitmix64(std::uint64_t& state) noexcept {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

// 53 random bits mapped onto (0, 1] and [0, 1) respectively.
double to_unit_open_low(std::uint32_t hi, std::uint32_t lo) noexcept {
    const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
    return (static_cast<double>(bits) + 1.0) * 0x1.0p-53;
}

double to_unit(std::uint32_t hi, std::uint32_t lo) noexcept {
    const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
    return static_cast<double>(bits) * 0x1.0p-53;
}

}  // namespace

namespace detail {

std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                           std::array<std::uint32_t, 2> key) noexcept {
    for (int round = 0; round < 10; ++round) {
        const std::uint64_t p0 = static_cast<std::uint64_t>(kPhiloxM0) * ctr[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(kPhiloxM1) * ctr[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const auto lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
        const auto lo1 = static_cast<std::uint32_t>(p1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += kPhiloxW0;
        key[1] += kPhiloxW1;
    }
    return ctr;
}

}  // namespace detail

RngStream::RngStream(std::uint64_t master_seed, std::uint32_t replicate_id)
    : master_seed_(master_seed), replicate_id_(replicate_id) {
    std::uint64_t s = master_seed;
    const std::uint64_t h = splitmix64(s) ^ splitmix64(s);
    key_ = {static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
}

std::array<std::uint32_t, 4> RngStream::block(std::uint64_t draw,
                                              std::uint32_t lane) const noexcept {
    return detail::philox4x32_10({static_cast<std::uint32_t>(draw), static_cast<std::uint32_t>(draw >> 32),
                          replicate_id_, lane},
                         key_);
}

void RngStream::normals(std::uint64_t draw, Substream substream,
                        std::span<double> out) const noexcept {
    const auto parity = static_cast<std::uint32_t>(substream);
    for (std::size_t i = 0, pair = 0; i < out.size(); i += 2, ++pair) {
        const auto w = block(draw, static_cast<std::uint32_t>(2 * pair) | parity);
        // Box-Muller on one block: two uniforms, two normals.
        const double radius = std::sqrt(-2.0 * std::log(to_unit_open_low(w[0], w[1])));
        const double angle = 2.0 * std::numbers::pi * to_unit(w[2], w[3]);
        out[i] = radius * std::cos(angle);
        if (i + 1 < out.size()) out[i + 1] = radius * std::sin(angle);
    }
}

void sample_into(NoiseVariances var, std::uint64_t k, const RngStream& rng, std::span<double> xi,
                 std::span<double> psi) {
    auto fill = [&](double s, Substream sub, std::span<double> out) {
        if (!(s > 0.0) || out.empty()) {
            std::fill(out.begin(), out.end(), 0.0);
            return;
        }
        rng.normals(k, sub, out);
        const double sd = std::sqrt(s / static_cast<double>(out.size()));
        for (double& v : out) v *= sd;
    };
    fill(var.s_xi, Substream::xi, xi);
    fill(var.s_psi, Substream::psi, psi);
}

NoiseDraw sample(const NoiseSpec& spec, const Residuals& res, std::uint64_t k, double k0,
                 const RngStream& rng, std::size_t d1, std::size_t d2) {
    NoiseDraw draw{Vector(d1, 0.0), Vector(d2, 0.0)};
    if (spec.kind == NoiseKind::none) return draw;
    sample_into(target_variances(spec, res, k, k0), k, rng, draw.xi, draw.psi);
    return draw;
}

}  // namespace ttsa
