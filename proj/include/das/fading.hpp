#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "das/geometry.hpp"
#include "das/rng.hpp"

namespace das {

// One composite fading draw across all RAUs: shadowing gains s_k and
// small-scale sums g_k = sum_m |h_km|^2 ~ Gamma(M,1).
struct FadingDraw {
    std::vector<double> s;
    std::vector<double> g;
};

struct McConfig {
    std::uint64_t seed = 1;
    std::size_t num_draws = 20000;
};

// Draw independent composite fading for K RAUs. Gamma(M,1) is sampled as a
// sum of M unit exponentials so small-M draws are exact.
inline void sample_fading_into(FadingDraw& draw, std::size_t num_raus, const Scenario& sc, Rng& rng) {
    draw.s.resize(num_raus);
    draw.g.resize(num_raus);
    const double cs = sc.shadow_sigma_db * 2.302585092994045684017991454684 / 10.0;
    for (std::size_t k = 0; k < num_raus; ++k) {
        draw.s[k] = cs == 0.0 ? 1.0 : std::exp(cs * rng.normal());
        double g = 0.0;
        for (int m = 0; m < sc.antennas_per_rau; ++m) g += rng.exponential();
        draw.g[k] = g;
    }
}

inline FadingDraw sample_fading(std::size_t num_raus, const Scenario& sc, Rng& rng) {
    FadingDraw draw;
    sample_fading_into(draw, num_raus, sc, rng);
    return draw;
}

// Instantaneous SNR for a given draw: (1/sigma^2) sum_k p_k s_k g_k phi(|x-c_k|).
inline double instantaneous_snr(const Vec& x, const Placement& placement, const FadingDraw& draw,
                                const Scenario& sc) {
    double acc = 0.0;
    for (std::size_t k = 0; k < placement.c.size(); ++k) {
        acc += placement.p[k] * draw.s[k] * draw.g[k] *
               path_loss(dist(x, placement.c[k]), sc.alpha, sc.d_min);
    }
    return acc / sc.noise_power;
}

struct CapacityEstimate {
    double estimate = 0.0;   // bits/s/Hz
    double std_error = 0.0;  // bits/s/Hz
};

namespace detail {

// Core MC loop with precomputed per-RAU weights w_k = p_k phi_k / sigma^2.
inline CapacityEstimate ergodic_capacity_weights(const std::vector<double>& w, const Scenario& sc,
                                                 std::size_t num_draws, Rng& rng) {
    const std::size_t K = w.size();
    const double cs = sc.shadow_sigma_db * 2.302585092994045684017991454684 / 10.0;
    const int M = sc.antennas_per_rau;
    double sum = 0.0;
    double sum_sq = 0.0;
    for (std::size_t n = 0; n < num_draws; ++n) {
        double theta = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            const double s = cs == 0.0 ? 1.0 : std::exp(cs * rng.normal());
            double g = 0.0;
            for (int m = 0; m < M; ++m) g += rng.exponential();
            theta += w[k] * s * g;
        }
        const double cap = std::log2(1.0 + theta);
        sum += cap;
        sum_sq += cap * cap;
    }
    CapacityEstimate est;
    const double n = static_cast<double>(num_draws);
    est.estimate = sum / n;
    const double var = std::max(0.0, (sum_sq - n * est.estimate * est.estimate) / (n - 1.0));
    est.std_error = std::sqrt(var / n);
    return est;
}

}  // namespace detail

// MC estimate of the ergodic capacity at x: mean of log2(1 + theta) over
// num_draws independent composite draws. Deterministic given mc.seed.
inline CapacityEstimate ergodic_capacity(const Vec& x, const Placement& placement, const Scenario& sc,
                                         const McConfig& mc) {
    if (mc.num_draws < 2) throw std::invalid_argument("ergodic_capacity: num_draws must be >= 2");
    std::vector<double> w(placement.c.size());
    for (std::size_t k = 0; k < placement.c.size(); ++k) {
        w[k] = placement.p[k] * path_loss(dist(x, placement.c[k]), sc.alpha, sc.d_min) / sc.noise_power;
    }
    Rng rng(mc.seed);
    return detail::ergodic_capacity_weights(w, sc, mc.num_draws, rng);
}

// Batch estimation with one explicit RNG seed per location. Two placements
// evaluated with the same seeds share draws per location (common random
// numbers), which keeps placement comparisons out of the MC noise.
inline std::vector<CapacityEstimate> ergodic_capacity_batch(const std::vector<Vec>& xs,
                                                            const Placement& placement,
                                                            const Scenario& sc, std::size_t num_draws,
                                                            std::span<const std::uint64_t> seeds) {
    if (num_draws < 2) throw std::invalid_argument("ergodic_capacity_batch: num_draws must be >= 2");
    if (seeds.size() != xs.size()) throw std::invalid_argument("ergodic_capacity_batch: seed count");
    std::vector<CapacityEstimate> out(xs.size());
    std::vector<double> w(placement.c.size());
    for (std::size_t l = 0; l < xs.size(); ++l) {
        for (std::size_t k = 0; k < placement.c.size(); ++k) {
            w[k] = placement.p[k] * path_loss(dist(xs[l], placement.c[k]), sc.alpha, sc.d_min) /
                   sc.noise_power;
        }
        Rng rng(seeds[l]);
        out[l] = detail::ergodic_capacity_weights(w, sc, num_draws, rng);
    }
    return out;
}

// Batch estimation; location l uses the substream substream_seed(mc.seed, l).
inline std::vector<CapacityEstimate> ergodic_capacity_batch(const std::vector<Vec>& xs,
                                                            const Placement& placement,
                                                            const Scenario& sc, const McConfig& mc) {
    std::vector<std::uint64_t> seeds(xs.size());
    for (std::size_t l = 0; l < xs.size(); ++l) seeds[l] = substream_seed(mc.seed, l);
    return ergodic_capacity_batch(xs, placement, sc, mc.num_draws, seeds);
}

}  // namespace das
