#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "das/geometry.hpp"
#include "das/rng.hpp"

namespace das {

enum class ClusterMode { squared, absolute };
enum class Criterion { SDC, IOCC };

// Scale used for the location coordinate of the clustering metric.
//   theoretical - the global Lipschitz constant nu_glob of the average-SNR
//                 field (the constant the upper bounds are stated with).
//   demand      - the empirical Lipschitz scale of the demanded-SNR field
//                 (range / sample diameter). nu_glob is a worst-case constant
//                 driven by d_min^-(alpha+1); with realistic noise
//                 calibrations it exceeds the demand field's own slope by
//                 many orders of magnitude, which collapses the joint
//                 clustering onto pure location space. The demand scale keeps
//                 both coordinates commensurate, which is what the
//                 SDC-vs-IOCC comparisons exercise. Bounds always use the
//                 theoretical constant regardless of this choice.
enum class WeightScaling { theoretical, demand };

// Clustering weights in location-SNR space.
// squared mode:  omega1 = (q+1) nu^2 nu_glob^2, omega2 = (q+1) nu^2
// absolute mode: omega1 = nu nu_glob,           omega2 = nu
struct IoccWeights {
    double nu = 0.0;            // Lipschitz constant of log2(1+.) over the instance
    double nu_glob = 0.0;       // SNR per meter
    double gamma_fading = 1.0;  // small-scale factor (mean of g)
    int q = 1;                  // spatial dimension
    ClusterMode mode = ClusterMode::squared;
    double omega1 = 0.0;
    double omega2 = 0.0;
};

inline IoccWeights make_weights(double nu, double nu_glob, double gamma_fading, int q,
                                ClusterMode mode) {
    if (nu <= 0.0 || nu_glob <= 0.0) throw std::invalid_argument("make_weights: constants must be positive");
    IoccWeights w;
    w.nu = nu;
    w.nu_glob = nu_glob;
    w.gamma_fading = gamma_fading;
    w.q = q;
    w.mode = mode;
    if (mode == ClusterMode::squared) {
        w.omega1 = (q + 1) * nu * nu * nu_glob * nu_glob;
        w.omega2 = (q + 1) * nu * nu;
    } else {
        w.omega1 = nu * nu_glob;
        w.omega2 = nu;
    }
    return w;
}

// Lipschitz constant of log2(1+.) over the demanded SNRs:
// 1 / ((1 + theta_min) ln 2), bounded above by 1/ln 2.
inline double compute_nu(std::span<const DemandSample> samples) {
    if (samples.empty()) throw std::invalid_argument("compute_nu: empty sample set");
    double theta_min = samples[0].theta_d;
    for (const auto& s : samples) theta_min = std::min(theta_min, s.theta_d);
    constexpr double inv_ln2 = 1.442695040888963407359924681;
    return std::min(inv_ln2 / (1.0 + theta_min), inv_ln2);
}

// Global Lipschitz constant of the average-SNR field over [d_min, inf):
// alpha * gamma * sum_k p_k sbar / (sigma^2 d_min^(alpha+1)).
inline double compute_nu_glob(const Scenario& sc, std::span<const double> p) {
    const double gamma = mean_small_scale(sc.antennas_per_rau);
    const double sbar = mean_shadow(sc.shadow_sigma_db);
    double psum = 0.0;
    for (double pk : p) psum += pk * sbar;
    return sc.alpha * gamma * psum / (sc.noise_power * std::pow(sc.d_min, sc.alpha + 1.0));
}

// Empirical Lipschitz scale of the demanded-SNR field: demanded-SNR range
// divided by the bounding-box diagonal of the sample locations.
inline double demand_scale(std::span<const DemandSample> samples) {
    if (samples.empty()) throw std::invalid_argument("demand_scale: empty sample set");
    double tmin = samples[0].theta_d, tmax = samples[0].theta_d;
    Vec lo = samples[0].x, hi = samples[0].x;
    for (const auto& s : samples) {
        tmin = std::min(tmin, s.theta_d);
        tmax = std::max(tmax, s.theta_d);
        for (int d = 0; d < 2; ++d) {
            lo[d] = std::min(lo[d], s.x[d]);
            hi[d] = std::max(hi[d], s.x[d]);
        }
    }
    const double diag = norm2(hi - lo);
    if (diag <= 0.0 || tmax <= tmin) return 1.0;  // degenerate field: neutral scale
    return (tmax - tmin) / diag;
}

// Weighted augmented vector fed to the clusterer.
struct AugmentedSample {
    Vec loc_part{0.0, 0.0};  // omega1 * x
    double snr_part = 0.0;   // omega2 * (theta_d + delta/nu)
    std::size_t source_index = 0;
};

inline std::vector<AugmentedSample> build_augmented(std::span<const DemandSample> samples,
                                                    const IoccWeights& w, double delta) {
    if (w.omega1 <= 0.0 || w.omega2 < 0.0)
        throw std::invalid_argument("build_augmented: omega1 must be positive, omega2 non-negative");
    const double shift = delta > 0.0 ? delta / w.nu : 0.0;
    std::vector<AugmentedSample> out(samples.size());
    for (std::size_t l = 0; l < samples.size(); ++l) {
        out[l].loc_part = {w.omega1 * samples[l].x[0], w.omega1 * samples[l].x[1]};
        out[l].snr_part = w.omega2 * (samples[l].theta_d + shift);
        out[l].source_index = l;
    }
    return out;
}

struct ClusterParams {
    ClusterMode mode = ClusterMode::squared;
    std::uint64_t seed = 1;
    int max_iters = 200;
    double tol = 1e-10;   // relative distortion improvement
    int restarts = 10;    // independent seedings, lowest distortion kept
};

// Codebook in raw (un-weighted) location-SNR space. `distortion` is the mean
// per-sample error in the mode's norm with first-power weights,
//   squared:  omega1 |x - mu_x|_2^2 + omega2 (t - mu_theta)^2
//   absolute: omega1 |x - mu_x|_1   + omega2 |t - mu_theta|
// which is the quantity the quantization-error report reproduces.
struct Codebook {
    std::vector<Vec> mu_x;
    std::vector<double> mu_theta;          // theta_d + delta/nu units
    std::vector<std::size_t> assignment;   // sample -> cluster, nearest centroid
    double distortion = 0.0;
    std::vector<double> distortion_trace;  // one entry per Lloyd iteration
    double omega1 = 0.0;
    double omega2 = 0.0;
    ClusterMode mode = ClusterMode::squared;
};

namespace detail {

struct RawPoint {
    Vec x{0.0, 0.0};
    double t = 0.0;
};

inline double point_error(const RawPoint& a, const Vec& cx, double ct, double w1, double w2,
                          ClusterMode mode) {
    if (mode == ClusterMode::squared) {
        double e = w1 * norm2_sq(a.x - cx);
        if (w2 > 0.0) e += w2 * (a.t - ct) * (a.t - ct);
        return e;
    }
    double e = w1 * norm1(a.x - cx);
    if (w2 > 0.0) e += w2 * std::fabs(a.t - ct);
    return e;
}

inline double median_of(std::vector<double>& v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace detail

// Lloyd / k-means(k-medians) in the weighted location-SNR space.
// Deterministic given params.seed; k-means++ style seeding; empty clusters
// are reseeded at the sample with the largest error contribution.
inline Codebook lloyd_cluster(const std::vector<AugmentedSample>& samples, std::size_t K,
                              double omega1, double omega2, const ClusterParams& params) {
    using detail::RawPoint;
    const std::size_t L = samples.size();
    if (L == 0) throw std::invalid_argument("lloyd_cluster: empty input");
    if (K == 0 || K > L) throw std::invalid_argument("lloyd_cluster: need 1 <= K <= L");
    if (params.max_iters < 1) throw std::invalid_argument("lloyd_cluster: max_iters must be >= 1");
    if (omega1 <= 0.0 || omega2 < 0.0) throw std::invalid_argument("lloyd_cluster: bad weights");

    const ClusterMode mode = params.mode;

    // Un-weight into raw coordinates once; all metric arithmetic below uses
    // raw values with explicit first-power weights.
    std::vector<RawPoint> pts(L);
    for (std::size_t l = 0; l < L; ++l) {
        pts[l].x = {samples[l].loc_part[0] / omega1, samples[l].loc_part[1] / omega1};
        pts[l].t = omega2 > 0.0 ? samples[l].snr_part / omega2 : 0.0;
    }

    auto finish = [&](Codebook cb) {
        cb.omega1 = omega1;
        cb.omega2 = omega2;
        cb.mode = mode;
        return cb;
    };

    // Fewer distinct points than clusters: one centroid per distinct value,
    // remaining slots cycle through them. Distortion is zero by construction.
    {
        std::vector<std::size_t> distinct;
        std::vector<std::size_t> owner(L);
        for (std::size_t l = 0; l < L; ++l) {
            bool found = false;
            for (std::size_t j = 0; j < distinct.size() && !found; ++j) {
                const RawPoint& d = pts[distinct[j]];
                if (d.x == pts[l].x && d.t == pts[l].t) {
                    owner[l] = j;
                    found = true;
                }
            }
            if (!found) {
                owner[l] = distinct.size();
                distinct.push_back(l);
            }
            if (distinct.size() >= K) break;  // enough distinct values, generic path below
        }
        if (distinct.size() < K) {
            Codebook cb;
            cb.mu_x.resize(K);
            cb.mu_theta.resize(K);
            for (std::size_t k = 0; k < K; ++k) {
                const RawPoint& d = pts[distinct[k % distinct.size()]];
                cb.mu_x[k] = d.x;
                cb.mu_theta[k] = d.t;
            }
            cb.assignment.resize(L);
            for (std::size_t l = 0; l < L; ++l) cb.assignment[l] = owner[l];
            cb.distortion = 0.0;
            cb.distortion_trace = {0.0};
            return finish(cb);
        }
    }

    struct Run {
        std::vector<Vec> cx;
        std::vector<double> ct;
        std::vector<std::size_t> assign;
        double distortion = std::numeric_limits<double>::infinity();
        std::vector<double> trace;
    };

    auto error_to = [&](std::size_t l, const Run& run, std::size_t k) {
        return detail::point_error(pts[l], run.cx[k], run.ct[k], omega1, omega2, mode);
    };

    auto assign_all = [&](Run& run) {
        bool changed = false;
        for (std::size_t l = 0; l < L; ++l) {
            std::size_t best = 0;
            double best_e = error_to(l, run, 0);
            for (std::size_t k = 1; k < run.cx.size(); ++k) {
                const double e = error_to(l, run, k);
                if (e < best_e) {
                    best_e = e;
                    best = k;
                }
            }
            if (run.assign[l] != best) {
                run.assign[l] = best;
                changed = true;
            }
        }
        return changed;
    };

    auto update_prototypes = [&](Run& run) {
        if (mode == ClusterMode::squared) {
            std::vector<double> sx(K, 0.0), sy(K, 0.0), st(K, 0.0);
            std::vector<std::size_t> cnt(K, 0);
            for (std::size_t l = 0; l < L; ++l) {
                const std::size_t k = run.assign[l];
                sx[k] += pts[l].x[0];
                sy[k] += pts[l].x[1];
                st[k] += pts[l].t;
                ++cnt[k];
            }
            for (std::size_t k = 0; k < K; ++k) {
                if (cnt[k] == 0) continue;  // handled by reseeding
                const double n = static_cast<double>(cnt[k]);
                run.cx[k] = {sx[k] / n, sy[k] / n};
                run.ct[k] = st[k] / n;
            }
        } else {
            std::vector<double> bx, by, bt;
            for (std::size_t k = 0; k < K; ++k) {
                bx.clear();
                by.clear();
                bt.clear();
                for (std::size_t l = 0; l < L; ++l) {
                    if (run.assign[l] != k) continue;
                    bx.push_back(pts[l].x[0]);
                    by.push_back(pts[l].x[1]);
                    bt.push_back(pts[l].t);
                }
                if (bx.empty()) continue;
                run.cx[k] = {detail::median_of(bx), detail::median_of(by)};
                run.ct[k] = detail::median_of(bt);
            }
        }
    };

    auto fix_empty = [&](Run& run) {
        std::vector<std::size_t> cnt(K, 0);
        for (std::size_t l = 0; l < L; ++l) ++cnt[run.assign[l]];
        for (std::size_t k = 0; k < K; ++k) {
            if (cnt[k] != 0) continue;
            std::size_t worst = L;
            double worst_e = -1.0;
            for (std::size_t l = 0; l < L; ++l) {
                if (cnt[run.assign[l]] <= 1) continue;  // do not orphan a singleton
                const double e = error_to(l, run, run.assign[l]);
                if (e > worst_e) {
                    worst_e = e;
                    worst = l;
                }
            }
            if (worst == L) continue;
            --cnt[run.assign[worst]];
            run.cx[k] = pts[worst].x;
            run.ct[k] = pts[worst].t;
            run.assign[worst] = k;
            cnt[k] = 1;
        }
    };

    auto total_distortion = [&](const Run& run) {
        double acc = 0.0;
        for (std::size_t l = 0; l < L; ++l) acc += error_to(l, run, run.assign[l]);
        return acc / static_cast<double>(L);
    };

    Run best;
    const int restarts = std::max(1, params.restarts);
    for (int r = 0; r < restarts; ++r) {
        Rng rng(substream_seed(params.seed, static_cast<std::uint64_t>(r)));
        Run run;
        run.cx.resize(K);
        run.ct.resize(K);
        run.assign.assign(L, 0);

        if (r % 2 == 1 && L <= 16) {
            // Random-partition seeding for small sample sets, where seedings
            // drawn from centroids alone cannot enter every Lloyd basin (the
            // absolute mode in particular). k-means++ remains the better
            // start on non-tiny inputs.
            std::vector<std::size_t> perm(L);
            for (std::size_t l = 0; l < L; ++l) perm[l] = l;
            for (std::size_t l = L; l-- > 1;) {
                const std::size_t j = std::min<std::size_t>(
                    static_cast<std::size_t>(rng.uniform01() * (l + 1)), l);
                std::swap(perm[l], perm[j]);
            }
            for (std::size_t l = 0; l < L; ++l) {
                const std::size_t k = l < K ? l : std::min<std::size_t>(
                                                      static_cast<std::size_t>(rng.uniform01() * K), K - 1);
                run.assign[perm[l]] = k;  // first K spots keep every cluster nonempty
            }
            update_prototypes(run);
        } else {
            // k-means++ style seeding: first centroid uniform, the rest
            // sampled proportionally to the current error contribution.
            std::vector<double> d(L);
            const std::size_t first = std::min<std::size_t>(static_cast<std::size_t>(rng.uniform01() * L), L - 1);
            run.cx[0] = pts[first].x;
            run.ct[0] = pts[first].t;
            for (std::size_t l = 0; l < L; ++l) d[l] = error_to(l, run, 0);
            for (std::size_t k = 1; k < K; ++k) {
                double total = 0.0;
                for (std::size_t l = 0; l < L; ++l) total += d[l];
                std::size_t pick = 0;
                if (total > 0.0) {
                    double rsum = rng.uniform01() * total;
                    for (std::size_t l = 0; l < L; ++l) {
                        rsum -= d[l];
                        if (rsum <= 0.0) {
                            pick = l;
                            break;
                        }
                        pick = l;
                    }
                } else {
                    pick = std::min<std::size_t>(static_cast<std::size_t>(rng.uniform01() * L), L - 1);
                }
                run.cx[k] = pts[pick].x;
                run.ct[k] = pts[pick].t;
                for (std::size_t l = 0; l < L; ++l) d[l] = std::min(d[l], error_to(l, run, k));
            }
        }

        double prev = std::numeric_limits<double>::infinity();
        for (int it = 0; it < params.max_iters; ++it) {
            const bool changed = assign_all(run);
            fix_empty(run);
            update_prototypes(run);
            const double cur = total_distortion(run);
            run.trace.push_back(cur);
            if (!changed && it > 0) break;
            if (std::isfinite(prev) && prev - cur <= params.tol * prev) break;
            prev = cur;
        }
        // Settle the nearest-centroid invariant after the last update.
        assign_all(run);
        run.distortion = total_distortion(run);
        run.trace.push_back(run.distortion);

        if (run.distortion < best.distortion) best = std::move(run);
    }

    Codebook cb;
    cb.mu_x.resize(K);
    cb.mu_theta.resize(K);
    for (std::size_t k = 0; k < K; ++k) {
        cb.mu_x[k] = best.cx[k];
        cb.mu_theta[k] = best.ct[k];
    }
    cb.assignment = std::move(best.assign);
    cb.distortion = best.distortion;
    cb.distortion_trace = std::move(best.trace);
    return finish(cb);
}

// Re-derive the nearest-centroid assignment of a codebook for a (possibly
// different) sample set under the codebook's own metric, refreshing the
// stored distortion. Used after samples are filtered or re-drawn.
inline Codebook assign_nearest(const std::vector<DemandSample>& samples, const Codebook& cb,
                               double nu, double delta) {
    Codebook out = cb;
    out.assignment.assign(samples.size(), 0);
    const double shift = delta > 0.0 ? delta / nu : 0.0;
    double acc = 0.0;
    for (std::size_t l = 0; l < samples.size(); ++l) {
        detail::RawPoint pt{samples[l].x, samples[l].theta_d + shift};
        std::size_t best = 0;
        double best_e = detail::point_error(pt, cb.mu_x[0], cb.mu_theta[0], cb.omega1, cb.omega2, cb.mode);
        for (std::size_t k = 1; k < cb.mu_x.size(); ++k) {
            const double e = detail::point_error(pt, cb.mu_x[k], cb.mu_theta[k], cb.omega1, cb.omega2, cb.mode);
            if (e < best_e) {
                best_e = e;
                best = k;
            }
        }
        out.assignment[l] = best;
        acc += best_e;
    }
    out.distortion = samples.empty() ? 0.0 : acc / static_cast<double>(samples.size());
    out.distortion_trace = {out.distortion};
    return out;
}

// Everything a placement run produces: the codebook, the weights the
// clusterer ran with, the theoretical weights for bound reporting, the RAU
// locations (mu_x) and the per-RAU SNR targets (mu_theta).
struct CodebookDesign {
    Codebook codebook;
    IoccWeights cluster_weights;
    IoccWeights bound_weights;
    std::vector<Vec> raus;
    std::vector<double> targets;
};

inline CodebookDesign design_codebook(const Scenario& sc, const std::vector<DemandSample>& samples,
                                      std::size_t K, Criterion criterion, const ClusterParams& params,
                                      WeightScaling scaling = WeightScaling::theoretical) {
    const double nu = compute_nu(samples);
    const std::vector<double> p_equal(K, sc.sum_power / static_cast<double>(K));
    const double nu_glob = compute_nu_glob(sc, p_equal);
    const double gamma = mean_small_scale(sc.antennas_per_rau);

    CodebookDesign out;
    out.bound_weights = make_weights(nu, nu_glob, gamma, sc.area.dim, params.mode);

    const double scale = scaling == WeightScaling::theoretical ? nu_glob : demand_scale(samples);
    out.cluster_weights = make_weights(nu, scale, gamma, sc.area.dim, params.mode);
    if (criterion == Criterion::SDC) out.cluster_weights.omega2 = 0.0;

    const auto augmented = build_augmented(samples, out.cluster_weights, sc.delta);
    out.codebook = lloyd_cluster(augmented, K, out.cluster_weights.omega1, out.cluster_weights.omega2,
                                 params);

    out.raus = out.codebook.mu_x;
    if (out.cluster_weights.omega2 > 0.0) {
        out.targets = out.codebook.mu_theta;
    } else {
        // Location-only clustering carries no SNR coordinate; targets are the
        // per-cluster prototypes of theta_d + delta/nu under its assignment.
        const double shift = sc.delta > 0.0 ? sc.delta / nu : 0.0;
        out.targets.assign(K, 0.0);
        if (params.mode == ClusterMode::squared) {
            std::vector<double> cnt(K, 0.0);
            for (std::size_t l = 0; l < samples.size(); ++l) {
                const std::size_t k = out.codebook.assignment[l];
                out.targets[k] += samples[l].theta_d + shift;
                cnt[k] += 1.0;
            }
            for (std::size_t k = 0; k < K; ++k)
                if (cnt[k] > 0.0) out.targets[k] /= cnt[k];
        } else {
            std::vector<double> buf;
            for (std::size_t k = 0; k < K; ++k) {
                buf.clear();
                for (std::size_t l = 0; l < samples.size(); ++l)
                    if (out.codebook.assignment[l] == k) buf.push_back(samples[l].theta_d + shift);
                if (!buf.empty()) out.targets[k] = detail::median_of(buf);
            }
        }
        out.codebook.mu_theta = out.targets;
    }
    return out;
}

// RAU locations only (codebook projected onto location space).
inline std::vector<Vec> place_raus(const Scenario& sc, const std::vector<DemandSample>& samples,
                                   std::size_t K, Criterion criterion, const ClusterParams& params,
                                   WeightScaling scaling = WeightScaling::theoretical) {
    return design_codebook(sc, samples, K, criterion, params, scaling).raus;
}

}  // namespace das
