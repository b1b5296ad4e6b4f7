#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace das {

// Location vector. 1-D scenarios keep y == 0 so the same code paths serve
// both dimensionalities; Area::dim says how many coordinates are live.
using Vec = std::array<double, 2>;

inline Vec vec1(double x) { return {x, 0.0}; }
inline Vec vec2(double x, double y) { return {x, y}; }

inline Vec operator-(const Vec& a, const Vec& b) { return {a[0] - b[0], a[1] - b[1]}; }
inline Vec operator+(const Vec& a, const Vec& b) { return {a[0] + b[0], a[1] + b[1]}; }

inline double norm2(const Vec& v) { return std::hypot(v[0], v[1]); }
inline double norm2_sq(const Vec& v) { return v[0] * v[0] + v[1] * v[1]; }
inline double norm1(const Vec& v) { return std::fabs(v[0]) + std::fabs(v[1]); }
inline double dist(const Vec& a, const Vec& b) { return norm2(a - b); }

// Axis-aligned service area: segment [0, x_max] (dim 1) or rectangle
// [0, x_max] x [0, y_max] (dim 2).
struct Area {
    int dim = 2;
    double x_max = 0.0;
    double y_max = 0.0;

    bool contains(const Vec& p, double tol = 1e-9) const {
        if (p[0] < -tol || p[0] > x_max + tol) return false;
        if (dim == 1) return std::fabs(p[1]) <= tol;
        return p[1] >= -tol && p[1] <= y_max + tol;
    }
    double measure() const { return dim == 1 ? x_max : x_max * y_max; }
    double bbox_diag() const { return dim == 1 ? x_max : std::hypot(x_max, y_max); }
};

// Demanded ergodic capacity field Gamma_d(x), bits/s/Hz. Restricted to three
// declarative closed forms so scenario files stay diff-able.
struct DemandField {
    enum class Kind { linear_ramp, radial_ramp, table };

    Kind kind = Kind::linear_ramp;

    // linear_ramp: affine in the scalar projection of x onto the a->b axis.
    Vec a{0.0, 0.0};
    Vec b{0.0, 0.0};
    double value_a = 0.0;
    double value_b = 0.0;

    // radial_ramp: affine in distance from `center`, clamped at `radius`.
    Vec center{0.0, 0.0};
    double value_center = 0.0;
    double value_border = 0.0;
    double radius = 0.0;

    // table: nearest-neighbour lookup.
    std::vector<Vec> points;
    std::vector<double> values;

    double operator()(const Vec& x) const {
        switch (kind) {
            case Kind::linear_ramp: {
                const Vec axis = b - a;
                const double len_sq = norm2_sq(axis);
                if (len_sq <= 0.0) return value_a;
                const Vec rel = x - a;
                const double s = (rel[0] * axis[0] + rel[1] * axis[1]) / len_sq;
                return value_a + (value_b - value_a) * s;
            }
            case Kind::radial_ramp: {
                const double r = dist(x, center);
                const double s = radius > 0.0 ? std::min(r / radius, 1.0) : 1.0;
                return value_center + (value_border - value_center) * s;
            }
            case Kind::table: {
                if (points.empty()) throw std::invalid_argument("DemandField: empty table");
                std::size_t best = 0;
                double best_d = dist(x, points[0]);
                for (std::size_t i = 1; i < points.size(); ++i) {
                    const double d = dist(x, points[i]);
                    if (d < best_d) {
                        best_d = d;
                        best = i;
                    }
                }
                return values[best];
            }
        }
        return 0.0;
    }

    static DemandField linear(Vec a, Vec b, double value_a, double value_b) {
        DemandField f;
        f.kind = Kind::linear_ramp;
        f.a = a;
        f.b = b;
        f.value_a = value_a;
        f.value_b = value_b;
        return f;
    }
    static DemandField radial(Vec center, double value_center, double value_border, double radius) {
        DemandField f;
        f.kind = Kind::radial_ramp;
        f.center = center;
        f.value_center = value_center;
        f.value_border = value_border;
        f.radius = radius;
        return f;
    }
    static DemandField table(std::vector<Vec> pts, std::vector<double> vals) {
        if (pts.size() != vals.size() || pts.empty())
            throw std::invalid_argument("DemandField: table size mismatch");
        DemandField f;
        f.kind = Kind::table;
        f.points = std::move(pts);
        f.values = std::move(vals);
        return f;
    }

    // Largest demanded capacity over the area (exact for the closed forms).
    double max_value() const {
        switch (kind) {
            case Kind::linear_ramp: return std::max(value_a, value_b);
            case Kind::radial_ramp: return std::max(value_center, value_border);
            case Kind::table: return *std::max_element(values.begin(), values.end());
        }
        return 0.0;
    }
};

// Full problem instance.
struct Scenario {
    Area area;
    double alpha = 4.0;            // path-loss exponent
    double d_min = 5.0;            // minimum user-RAU distance, m
    double noise_power = 0.0;      // sigma_zeta^2, W
    double shadow_sigma_db = 6.0;  // sigma_s, dB
    int antennas_per_rau = 1;      // M
    int num_raus = 1;              // K (default; sweeps override)
    double sum_power = 1.0;        // p_tx^sum, W
    double delta = 0.0;            // capacity margin, bits/s/Hz
    DemandField demand;

    void validate() const {
        if (area.dim != 1 && area.dim != 2) throw std::invalid_argument("Scenario: area dim must be 1 or 2");
        if (area.x_max <= 0.0 || (area.dim == 2 && area.y_max <= 0.0))
            throw std::invalid_argument("Scenario: area extents must be positive");
        if (alpha < 2.0 || alpha > 6.0) throw std::invalid_argument("Scenario: alpha must lie in [2,6]");
        if (d_min <= 0.0) throw std::invalid_argument("Scenario: d_min must be positive");
        if (noise_power <= 0.0) throw std::invalid_argument("Scenario: noise_power must be positive");
        if (shadow_sigma_db < 0.0) throw std::invalid_argument("Scenario: shadow_sigma_db must be >= 0");
        if (antennas_per_rau < 1) throw std::invalid_argument("Scenario: antennas_per_rau must be >= 1");
        if (num_raus < 1) throw std::invalid_argument("Scenario: num_raus must be >= 1");
        if (sum_power <= 0.0) throw std::invalid_argument("Scenario: sum_power must be positive");
        if (delta < 0.0) throw std::invalid_argument("Scenario: delta must be >= 0");
    }
};

// One user sample: location, demanded capacity and the matching demanded
// average SNR (theta = 2^gamma - 1).
struct DemandSample {
    Vec x{0.0, 0.0};
    double gamma_d = 0.0;
    double theta_d = 0.0;
};

// Candidate solution: RAU locations plus transmit powers.
struct Placement {
    std::vector<Vec> c;
    std::vector<double> p;

    std::size_t num_raus() const { return c.size(); }
};

// Clamped path-loss gain min(d_min^-alpha, d^-alpha). Total on [0, inf);
// the clamp removes the singularity at d = 0.
inline double path_loss(double d, double alpha, double d_min) {
    const double eff = std::max(d, d_min);
    return std::pow(eff, -alpha);
}

// theta = 2^gamma - 1.
inline double capacity_to_snr(double gamma) {
    if (gamma < 0.0) throw std::invalid_argument("capacity_to_snr: gamma must be >= 0");
    return std::exp2(gamma) - 1.0;
}

// gamma = log2(1 + theta).
inline double snr_to_capacity(double theta) {
    if (theta < 0.0) throw std::invalid_argument("snr_to_capacity: theta must be >= 0");
    return std::log2(1.0 + theta);
}

// Mean of the log-normal shadowing gain 10^(N(0, sigma_db^2)/10).
inline double mean_shadow(double sigma_db) {
    const double c = sigma_db * 2.302585092994045684017991454684 / 10.0;
    return std::exp(c * c / 2.0);
}

// Mean of g = sum of M unit-mean exponentials (Gamma(M,1)).
inline double mean_small_scale(int antennas) { return static_cast<double>(antennas); }

// Fading-averaged SNR at x: (1/sigma^2) sum_k p_k sbar_k gbar_k phi(|x-c_k|).
inline double avg_snr(const Vec& x, const Placement& placement, const Scenario& sc,
                      std::span<const double> gbar, std::span<const double> sbar) {
    double acc = 0.0;
    for (std::size_t k = 0; k < placement.c.size(); ++k) {
        acc += placement.p[k] * sbar[k] * gbar[k] * path_loss(dist(x, placement.c[k]), sc.alpha, sc.d_min);
    }
    return acc / sc.noise_power;
}

// Convenience overload: homogeneous fading statistics from the scenario.
inline double avg_snr(const Vec& x, const Placement& placement, const Scenario& sc) {
    const double gbar = mean_small_scale(sc.antennas_per_rau);
    const double sbar = mean_shadow(sc.shadow_sigma_db);
    double acc = 0.0;
    for (std::size_t k = 0; k < placement.c.size(); ++k) {
        acc += placement.p[k] * path_loss(dist(x, placement.c[k]), sc.alpha, sc.d_min);
    }
    return acc * gbar * sbar / sc.noise_power;
}

inline DemandSample make_demand_sample(const Vec& x, const Scenario& sc) {
    DemandSample s;
    s.x = x;
    s.gamma_d = sc.demand(x);
    s.theta_d = capacity_to_snr(s.gamma_d);
    return s;
}

inline std::vector<DemandSample> make_demand_samples(const std::vector<Vec>& xs, const Scenario& sc) {
    std::vector<DemandSample> out;
    out.reserve(xs.size());
    for (const Vec& x : xs) out.push_back(make_demand_sample(x, sc));
    return out;
}

// Noise calibration: a single RAU at the area centre transmitting the whole
// budget reaches the maximum demanded SNR at `ref_distance` (default
// 10*d_min). Scenarios whose users sit much farther than 10*d_min from their
// RAUs calibrate at an area-scaled distance instead, otherwise the demand is
// unreachable everywhere and error metrics only measure starvation.
inline double calibrate_noise_power(const Scenario& sc, double ref_distance = 0.0) {
    const double theta_max = capacity_to_snr(sc.demand.max_value());
    if (theta_max <= 0.0) throw std::invalid_argument("calibrate_noise_power: demand field is zero");
    const double ref = ref_distance > 0.0 ? ref_distance : 10.0 * sc.d_min;
    const double gain = sc.sum_power * mean_shadow(sc.shadow_sigma_db) *
                        mean_small_scale(sc.antennas_per_rau) *
                        path_loss(ref, sc.alpha, sc.d_min);
    return gain / theta_max;
}

}  // namespace das
