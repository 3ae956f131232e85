#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>

#include "ttsa/core.hpp"

namespace ttsa {

/// Exponents delta_ij of the state-dependent variance bound.
struct DeltaMatrix {
    double d11 = 0.0;
    double d12 = 0.0;
    double d21 = 0.0;
    double d22 = 0.0;

    static DeltaMatrix uniform(double d) { return {d, d, d, d}; }
    double max() const noexcept;
    bool operator==(const DeltaMatrix&) const = default;
};

/// Scales Gamma_ij of the state-dependent variance bound.
struct GammaMatrix {
    double g11 = 0.0;
    double g12 = 0.0;
    double g21 = 0.0;
    double g22 = 0.0;

    static GammaMatrix uniform(double g) { return {g, g, g, g}; }
    bool operator==(const GammaMatrix&) const = default;
};

/// Time-dependent bound: Gamma'_11 (k+1+k0)^-gamma1 and Gamma'_22 (k+1+k0)^-gamma2.
struct TimeNoise {
    double scale_xi = 0.0;   // Gamma'_11
    double scale_psi = 0.0;  // Gamma'_22
    double gamma1 = 0.0;
    double gamma2 = 0.0;

    bool operator==(const TimeNoise&) const = default;
};

enum class NoiseKind { none, state, quadratic, time };

std::string to_string(NoiseKind kind);
NoiseKind noise_kind_from_string(const std::string& name);

struct NoiseSpec {
    NoiseKind kind = NoiseKind::none;
    GammaMatrix gamma;
    DeltaMatrix delta;
    TimeNoise time;

    static NoiseSpec none();
    static NoiseSpec state(GammaMatrix gamma, DeltaMatrix delta);
    static NoiseSpec quadratic(GammaMatrix gamma);
    static NoiseSpec time_decay(TimeNoise time);

    /// state: all delta in [0, 1); quadratic: all delta == 1; time: gamma1 - gamma2 in
    /// [-1, 1/2). Scales must be nonnegative. Throws ConfigError.
    void validate() const;

    bool operator==(const NoiseSpec&) const = default;
};

struct NoiseVariances {
    double s_xi;
    double s_psi;
};

/// Conditional second moments E|xi|^2, E|psi|^2 realized with equality.
/// x_sq, y_sq are the squared residual norms.
NoiseVariances target_variances(const NoiseSpec& spec, double x_sq, double y_sq,
                                std::uint64_t k, double k0);
NoiseVariances target_variances(const NoiseSpec& spec, const Residuals& res, std::uint64_t k,
                                double k0);

namespace detail {

/// Philox4x32 with 10 rounds.
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                           std::array<std::uint32_t, 2> key) noexcept;

}  // namespace detail

enum class Substream : std::uint32_t { xi = 0, psi = 1 };

/// Counter-based Gaussian source for one replicate.
///
/// Every block is Philox4x32-10 of the counter
///   (draw lo, draw hi, replicate_id, 2 * pair + substream)
/// under a key hashed from the master seed. xi uses even lanes and psi odd lanes,
/// so a replicate's output is a pure function of (master_seed, replicate_id,
/// draw, substream, coordinate) and distinct replicates never share a counter.
class RngStream {
public:
    RngStream(std::uint64_t master_seed, std::uint32_t replicate_id);

    std::uint64_t master_seed() const noexcept { return master_seed_; }
    std::uint32_t replicate_id() const noexcept { return replicate_id_; }

    /// Raw 128-bit block for the given draw and lane.
    std::array<std::uint32_t, 4> block(std::uint64_t draw, std::uint32_t lane) const noexcept;

    /// Fills `out` with independent standard normals for (draw, substream).
    void normals(std::uint64_t draw, Substream substream, std::span<double> out) const noexcept;

private:
    std::uint64_t master_seed_;
    std::uint32_t replicate_id_;
    std::array<std::uint32_t, 2> key_;
};

struct NoiseDraw {
    Vector xi;
    Vector psi;
};

/// Zero-mean isotropic Gaussians with E|xi|^2 = s_xi and E|psi|^2 = s_psi
/// (per-coordinate variance s / d). The draw index is the iteration k.
NoiseDraw sample(const NoiseSpec& spec, const Residuals& res, std::uint64_t k, double k0,
                 const RngStream& rng, std::size_t d1, std::size_t d2);

/// In-place sampling at known variances.
void sample_into(NoiseVariances var, std::uint64_t k, const RngStream& rng, std::span<double> xi,
                 std::span<double> psi);

}  // namespace ttsa
