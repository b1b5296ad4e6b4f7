#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "das/geometry.hpp"

namespace das {

enum class ResidualMode { l1, l2 };

// Linear SNR system A (sbar .* p) = target of the codebook design. A carries
// the mean small-scale gain and the noise scaling, so (A (sbar.*p))_i is the
// average SNR delivered at RAU location c_i. Targets are the codebook SNR
// prototypes with the delta/nu margin already removed.
struct SnrSystem {
    std::size_t num_raus = 0;
    std::vector<double> a;       // row-major K x K
    std::vector<double> target;  // mu_theta - delta/nu
    std::vector<double> sbar;    // per-RAU mean shadowing
    bool diag_dominant = true;

    double at(std::size_t i, std::size_t k) const { return a[i * num_raus + k]; }
};

struct PowerSolution {
    std::vector<double> p;
    bool feasible_exact = false;  // unconstrained solve met p > 0 and the budget
    double residual = 0.0;        // achieved objective value
    bool converged = true;
};

inline SnrSystem build_system(const std::vector<Vec>& c, std::span<const double> mu_theta,
                              const Scenario& sc, double nu) {
    const std::size_t K = c.size();
    if (K == 0 || mu_theta.size() != K) throw std::invalid_argument("build_system: size mismatch");
    SnrSystem sys;
    sys.num_raus = K;
    sys.a.resize(K * K);
    sys.target.resize(K);
    sys.sbar.assign(K, mean_shadow(sc.shadow_sigma_db));
    const double gbar = mean_small_scale(sc.antennas_per_rau);
    const double shift = sc.delta > 0.0 ? sc.delta / nu : 0.0;
    for (std::size_t i = 0; i < K; ++i) {
        for (std::size_t k = 0; k < K; ++k) {
            const double d = i == k ? 0.0 : dist(c[i], c[k]);
            sys.a[i * K + k] = gbar * path_loss(d, sc.alpha, sc.d_min) / sc.noise_power;
        }
        sys.target[i] = mu_theta[i] - shift;
    }
    for (std::size_t i = 0; i < K; ++i) {
        double off = 0.0;
        for (std::size_t k = 0; k < K; ++k)
            if (k != i) off += std::fabs(sys.at(i, k));
        if (std::fabs(sys.at(i, i)) <= off) {
            sys.diag_dominant = false;
            break;
        }
    }
    return sys;
}

namespace detail {

// Gaussian elimination with partial pivoting; returns false on a singular
// pivot. K is small (tens at most), dense elimination is plenty.
inline bool solve_dense(std::vector<double> a, std::vector<double> b, std::size_t n,
                        std::vector<double>& x) {
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        double piv_abs = std::fabs(a[col * n + col]);
        for (std::size_t r = col + 1; r < n; ++r) {
            const double v = std::fabs(a[r * n + col]);
            if (v > piv_abs) {
                piv_abs = v;
                piv = r;
            }
        }
        if (piv_abs <= 0.0 || !std::isfinite(piv_abs)) return false;
        if (piv != col) {
            for (std::size_t j = col; j < n; ++j) std::swap(a[col * n + j], a[piv * n + j]);
            std::swap(b[col], b[piv]);
        }
        const double inv = 1.0 / a[col * n + col];
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = a[r * n + col] * inv;
            if (f == 0.0) continue;
            for (std::size_t j = col; j < n; ++j) a[r * n + j] -= f * a[col * n + j];
            b[r] -= f * b[col];
        }
    }
    x.assign(n, 0.0);
    for (std::size_t ri = n; ri-- > 0;) {
        double acc = b[ri];
        for (std::size_t j = ri + 1; j < n; ++j) acc -= a[ri * n + j] * x[j];
        x[ri] = acc / a[ri * n + ri];
    }
    return true;
}

// Euclidean projection onto {p : p_k >= lo, sum p_k <= budget}.
inline void project_feasible(std::vector<double>& p, double lo, double budget) {
    const std::size_t n = p.size();
    double sum = 0.0;
    for (double& v : p) {
        v = std::max(v, lo);
        sum += v;
    }
    if (sum <= budget) return;
    // Project the slack r = p - lo onto the simplex {r >= 0, sum r = B}.
    const double B = budget - static_cast<double>(n) * lo;
    std::vector<double> u(n);
    for (std::size_t i = 0; i < n; ++i) u[i] = p[i] - lo;
    std::vector<double> sorted = u;
    std::sort(sorted.begin(), sorted.end(), std::greater<double>());
    double cum = 0.0;
    double tau = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        cum += sorted[j];
        const double cand = (cum - B) / static_cast<double>(j + 1);
        if (j + 1 == n || sorted[j + 1] <= cand) {
            tau = cand;
            break;
        }
    }
    for (std::size_t i = 0; i < n; ++i) p[i] = lo + std::max(u[i] - tau, 0.0);
}

// Objective sum_i rho((M p - t)_i) with rho the Huber approximation of |.|
// (parameter mu) or the square. grad receives the gradient when non-null.
struct ResidualObjective {
    const std::vector<double>& m;  // row-major rows x cols
    const std::vector<double>& t;
    std::size_t rows, cols;
    ResidualMode mode;
    double huber_mu = 0.0;

    double eval(const std::vector<double>& p, std::vector<double>* grad) const {
        if (grad) grad->assign(cols, 0.0);
        double f = 0.0;
        for (std::size_t i = 0; i < rows; ++i) {
            double r = -t[i];
            const double* row = &m[i * cols];
            for (std::size_t k = 0; k < cols; ++k) r += row[k] * p[k];
            double w;  // d rho / d r
            if (mode == ResidualMode::l2) {
                f += r * r;
                w = 2.0 * r;
            } else if (std::fabs(r) <= huber_mu) {
                f += r * r / (2.0 * huber_mu);
                w = r / huber_mu;
            } else {
                f += std::fabs(r) - huber_mu / 2.0;
                w = r > 0.0 ? 1.0 : -1.0;
            }
            if (grad)
                for (std::size_t k = 0; k < cols; ++k) (*grad)[k] += w * row[k];
        }
        return f;
    }
};

struct PgResult {
    std::vector<double> p;
    double f = std::numeric_limits<double>::infinity();
    bool converged = false;
};

// Projected gradient with Armijo backtracking; monotone descent from the
// given start. tol is the stationarity tolerance on the projected gradient.
inline PgResult projected_gradient(const ResidualObjective& obj, std::vector<double> p, double lo,
                                   double budget, double tol, int max_iters) {
    project_feasible(p, lo, budget);
    std::vector<double> grad, cand;
    double f = obj.eval(p, &grad);
    double step = 1.0;
    {  // scale the initial step to the gradient magnitude
        double gn = 0.0;
        for (double g : grad) gn = std::max(gn, std::fabs(g));
        if (gn > 0.0) step = std::max(budget, lo) / gn;
    }
    PgResult res;
    for (int it = 0; it < max_iters; ++it) {
        cand = p;
        for (std::size_t k = 0; k < p.size(); ++k) cand[k] -= step * grad[k];
        project_feasible(cand, lo, budget);
        double fc = obj.eval(cand, nullptr);
        int halvings = 0;
        while (fc > f && halvings < 60) {
            step *= 0.5;
            cand = p;
            for (std::size_t k = 0; k < p.size(); ++k) cand[k] -= step * grad[k];
            project_feasible(cand, lo, budget);
            fc = obj.eval(cand, nullptr);
            ++halvings;
        }
        double move = 0.0;
        for (std::size_t k = 0; k < p.size(); ++k) move = std::max(move, std::fabs(cand[k] - p[k]));
        if (fc <= f) {
            p.swap(cand);
            f = obj.eval(p, &grad);
        }
        // Stationarity: the unit-scaled projected step stays put.
        if (move <= tol * std::max(1.0, budget) && halvings < 60) {
            std::vector<double> probe = p;
            for (std::size_t k = 0; k < p.size(); ++k) probe[k] -= step * grad[k];
            project_feasible(probe, lo, budget);
            double pm = 0.0;
            for (std::size_t k = 0; k < p.size(); ++k) pm = std::max(pm, std::fabs(probe[k] - p[k]));
            if (pm <= tol * std::max(1.0, budget)) {
                res.converged = true;
                break;
            }
        }
        if (halvings == 0) step *= 2.0;
    }
    res.p = std::move(p);
    res.f = f;
    return res;
}

// Shared driver: minimise the residual objective over the feasible power set
// from the equal split and any warm starts, keeping the best end point.
inline PowerSolution minimize_residuals(const std::vector<double>& m, const std::vector<double>& t,
                                        std::size_t rows, std::size_t cols, double p_sum,
                                        ResidualMode mode,
                                        const std::vector<std::vector<double>>& warm_starts,
                                        double tol = 1e-8, int max_iters = 20000) {
    const double lo = 1e-12 * p_sum;
    std::vector<std::vector<double>> starts;
    starts.emplace_back(cols, p_sum / static_cast<double>(cols));
    for (const auto& w : warm_starts)
        if (w.size() == cols) starts.push_back(w);

    double tscale = 0.0;
    for (double v : t) tscale = std::max(tscale, std::fabs(v));

    PgResult best;
    for (const auto& s : starts) {
        PgResult r;
        if (mode == ResidualMode::l2) {
            ResidualObjective obj{m, t, rows, cols, ResidualMode::l2, 0.0};
            r = projected_gradient(obj, s, lo, p_sum, tol, max_iters);
        } else {
            // Huber continuation: shrink the smoothing towards the l1 limit.
            std::vector<double> p = s;
            double mu = std::max(tscale, 1.0) * 0.1;
            const double mu_final = std::max(tscale, 1.0) * 1e-10;
            while (true) {
                ResidualObjective obj{m, t, rows, cols, ResidualMode::l1, mu};
                r = projected_gradient(obj, p, lo, p_sum, tol, max_iters);
                p = r.p;
                if (mu <= mu_final) break;
                mu = std::max(mu * 0.1, mu_final);
            }
            // Report the true l1 objective.
            double f = 0.0;
            for (std::size_t i = 0; i < rows; ++i) {
                double resid = -t[i];
                for (std::size_t k = 0; k < cols; ++k) resid += m[i * cols + k] * p[k];
                f += std::fabs(resid);
            }
            r.f = f;
        }
        if (r.f < best.f) best = std::move(r);
    }

    PowerSolution out;
    out.p = std::move(best.p);
    out.residual = best.f;
    out.converged = best.converged;
    return out;
}

}  // namespace detail

// Unconstrained solve of A (sbar.*p) = target; nullopt on a singular matrix.
// feasible_exact is set when the solution is elementwise positive and within
// the sum-power budget.
inline std::optional<PowerSolution> solve_exact(const SnrSystem& sys, double p_sum) {
    std::vector<double> y;
    if (!detail::solve_dense(sys.a, sys.target, sys.num_raus, y)) return std::nullopt;
    PowerSolution sol;
    sol.p.resize(sys.num_raus);
    double total = 0.0;
    bool positive = true;
    for (std::size_t k = 0; k < sys.num_raus; ++k) {
        sol.p[k] = y[k] / sys.sbar[k];
        total += sol.p[k];
        positive = positive && sol.p[k] > 0.0;
    }
    sol.feasible_exact = positive && total <= p_sum * (1.0 + 1e-9);
    double resid = 0.0;
    for (std::size_t i = 0; i < sys.num_raus; ++i) {
        double r = -sys.target[i];
        for (std::size_t k = 0; k < sys.num_raus; ++k) r += sys.at(i, k) * y[k];
        resid += r * r;
    }
    sol.residual = resid;
    sol.converged = true;
    return sol;
}

// Residual minimisation over {p >= eps_p, |p|_1 <= p_sum} when the exact
// solution violates the constraints. Deterministic from the equal split.
inline PowerSolution solve_constrained(const SnrSystem& sys, double p_sum, ResidualMode mode,
                                       const std::vector<std::vector<double>>& warm_starts = {}) {
    if (p_sum <= 0.0) throw std::invalid_argument("solve_constrained: p_sum must be positive");
    const std::size_t K = sys.num_raus;
    std::vector<double> m(K * K);
    for (std::size_t i = 0; i < K; ++i)
        for (std::size_t k = 0; k < K; ++k) m[i * K + k] = sys.at(i, k) * sys.sbar[k];
    return detail::minimize_residuals(m, sys.target, K, K, p_sum, mode, warm_starts);
}

// Capacity-level power refinement: minimise the noiseless squared capacity
// error mean_l (gamma_d + delta - log2(1 + theta_a(p, x_l)))^2 over the
// feasible set. The SNR-level surrogate below is what the bounds control,
// but its optimum refuses to serve the cell interior whenever samples sit
// close to an RAU (linear SNR overshoot dwarfs any far-sample gain), so the
// reported capacity metrics use this objective instead. Non-convex but
// smooth; projected gradient from the equal split plus warm starts.
inline PowerSolution optimize_capacity_power(const std::vector<Vec>& c,
                                             const std::vector<DemandSample>& samples,
                                             const Scenario& sc,
                                             const std::vector<std::vector<double>>& warm_starts = {},
                                             int max_iters = 4000) {
    const std::size_t K = c.size();
    const std::size_t L = samples.size();
    if (K == 0 || L == 0) throw std::invalid_argument("optimize_capacity_power: empty input");
    const double gbar = mean_small_scale(sc.antennas_per_rau);
    const double sbar = mean_shadow(sc.shadow_sigma_db);
    std::vector<double> b(L * K);
    for (std::size_t l = 0; l < L; ++l)
        for (std::size_t k = 0; k < K; ++k)
            b[l * K + k] =
                sbar * gbar * path_loss(dist(samples[l].x, c[k]), sc.alpha, sc.d_min) / sc.noise_power;

    constexpr double ln2 = 0.69314718055994530941723212145818;
    auto eval = [&](const std::vector<double>& p, std::vector<double>* grad) {
        if (grad) grad->assign(K, 0.0);
        double f = 0.0;
        for (std::size_t l = 0; l < L; ++l) {
            double theta = 0.0;
            const double* row = &b[l * K];
            for (std::size_t k = 0; k < K; ++k) theta += row[k] * p[k];
            const double e = samples[l].gamma_d + sc.delta - std::log2(1.0 + theta);
            f += e * e;
            if (grad) {
                const double w = -2.0 * e / ((1.0 + theta) * ln2);
                for (std::size_t k = 0; k < K; ++k) (*grad)[k] += w * row[k];
            }
        }
        return f / static_cast<double>(L);
    };

    const double lo = 1e-12 * sc.sum_power;
    std::vector<std::vector<double>> starts;
    starts.emplace_back(K, sc.sum_power / static_cast<double>(K));
    for (const auto& w : warm_starts)
        if (w.size() == K) starts.push_back(w);

    std::vector<double> best_p;
    double best_f = std::numeric_limits<double>::infinity();
    bool best_conv = false;
    for (const auto& start : starts) {
        std::vector<double> p = start;
        detail::project_feasible(p, lo, sc.sum_power);
        std::vector<double> grad, cand;
        double f = eval(p, &grad);
        double step = 1.0;
        double gn = 0.0;
        for (double g : grad) gn = std::max(gn, std::fabs(g));
        if (gn > 0.0) step = sc.sum_power / gn;
        bool conv = false;
        for (int it = 0; it < max_iters; ++it) {
            cand = p;
            for (std::size_t k = 0; k < K; ++k) cand[k] -= step * grad[k];
            detail::project_feasible(cand, lo, sc.sum_power);
            double fc = eval(cand, nullptr);
            int halvings = 0;
            while (fc > f && halvings < 60) {
                step *= 0.5;
                cand = p;
                for (std::size_t k = 0; k < K; ++k) cand[k] -= step * grad[k];
                detail::project_feasible(cand, lo, sc.sum_power);
                fc = eval(cand, nullptr);
                ++halvings;
            }
            double move = 0.0;
            for (std::size_t k = 0; k < K; ++k) move = std::max(move, std::fabs(cand[k] - p[k]));
            if (fc <= f) {
                p.swap(cand);
                f = eval(p, &grad);
            }
            if (move <= 1e-10 * sc.sum_power) {
                conv = true;
                break;
            }
            if (halvings == 0) step *= 2.0;
        }
        if (f < best_f) {
            best_f = f;
            best_p = p;
            best_conv = conv;
        }
    }
    PowerSolution out;
    out.p = std::move(best_p);
    out.residual = best_f;
    out.converged = best_conv;
    return out;
}

// Global surrogate power optimisation over all demand samples: minimise
// sum_l rho(theta_d(x_l) + delta/nu - theta_a(p, x_l)) over the same
// feasible set. Linear in p at the average-SNR level.
inline PowerSolution optimize_global_power(const std::vector<Vec>& c,
                                           const std::vector<DemandSample>& samples,
                                           const Scenario& sc, ResidualMode mode, double nu,
                                           const std::vector<std::vector<double>>& warm_starts = {}) {
    const std::size_t K = c.size();
    const std::size_t L = samples.size();
    if (K == 0 || L == 0) throw std::invalid_argument("optimize_global_power: empty input");
    const double gbar = mean_small_scale(sc.antennas_per_rau);
    const double sbar = mean_shadow(sc.shadow_sigma_db);
    const double shift = sc.delta > 0.0 ? sc.delta / nu : 0.0;
    std::vector<double> m(L * K);
    std::vector<double> t(L);
    for (std::size_t l = 0; l < L; ++l) {
        for (std::size_t k = 0; k < K; ++k) {
            m[l * K + k] =
                sbar * gbar * path_loss(dist(samples[l].x, c[k]), sc.alpha, sc.d_min) / sc.noise_power;
        }
        t[l] = samples[l].theta_d + shift;
    }
    return detail::minimize_residuals(m, t, L, K, sc.sum_power, mode, warm_starts);
}

}  // namespace das
