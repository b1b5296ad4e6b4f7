#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "das/geometry.hpp"
#include "das/power.hpp"
#include "das/rng.hpp"
#include "oracles.hpp"

using namespace das;
using das_tests::gauss_jordan;

namespace {

Scenario plain_scenario() {
    Scenario sc;
    sc.area = {2, 500.0, 500.0};
    sc.alpha = 3.0;
    sc.d_min = 5.0;
    sc.noise_power = 1e-8;
    sc.shadow_sigma_db = 6.0;
    sc.antennas_per_rau = 1;
    sc.sum_power = 1.0;
    sc.demand = DemandField::linear(vec2(0, 0), vec2(500, 500), 5.35, 3.45);
    return sc;
}

double objective_l2(const SnrSystem& sys, const std::vector<double>& p) {
    double acc = 0.0;
    for (std::size_t i = 0; i < sys.num_raus; ++i) {
        double r = -sys.target[i];
        for (std::size_t k = 0; k < sys.num_raus; ++k) r += sys.at(i, k) * sys.sbar[k] * p[k];
        acc += r * r;
    }
    return acc;
}

}  // namespace

TEST_CASE("build_system: entries, symmetry, dominance") {
    Scenario sc = plain_scenario();
    sc.shadow_sigma_db = 0.0;
    sc.antennas_per_rau = 2;

    std::vector<Vec> single{vec2(100, 100)};
    std::vector<double> t1{25.0};
    const SnrSystem s1 = build_system(single, t1, sc, 1.0);
    CHECK(s1.at(0, 0) ==
          Catch::Approx(2.0 * std::pow(sc.d_min, -sc.alpha) / sc.noise_power).epsilon(1e-14));
    CHECK(s1.target[0] == 25.0);
    CHECK(s1.diag_dominant);

    Scenario sc2 = plain_scenario();
    sc2.alpha = 2.0;
    std::vector<Vec> pair{vec2(0, 0), vec2(100.0 * sc2.d_min, 0)};
    std::vector<double> t2{10.0, 20.0};
    const SnrSystem s2 = build_system(pair, t2, sc2, 1.0);
    CHECK(s2.at(0, 1) / s2.at(0, 0) == Catch::Approx(1e-4).epsilon(1e-12));
    CHECK(s2.at(0, 1) == s2.at(1, 0));
    CHECK(s2.diag_dominant);
}

TEST_CASE("build_system: targets subtract the delta/nu margin") {
    Scenario sc = plain_scenario();
    sc.delta = 0.5;
    const double nu = 0.2;
    std::vector<Vec> c{vec2(100, 100)};
    std::vector<double> mu{30.0};
    const SnrSystem sys = build_system(c, mu, sc, nu);
    CHECK(sys.target[0] == Catch::Approx(30.0 - 0.5 / 0.2).epsilon(1e-15));
}

TEST_CASE("solve_exact: scalar case and symmetric pair") {
    Scenario sc = plain_scenario();
    std::vector<Vec> single{vec2(250, 250)};
    std::vector<double> t{20.0};
    const SnrSystem sys = build_system(single, t, sc, 1.0);
    const auto sol = solve_exact(sys, sc.sum_power);
    REQUIRE(sol.has_value());
    const double expected = 20.0 * sc.noise_power * std::pow(sc.d_min, sc.alpha) /
                            (mean_shadow(sc.shadow_sigma_db) * 1.0);
    CHECK(sol->p[0] == Catch::Approx(expected).epsilon(1e-12));
    CHECK(sol->feasible_exact);

    std::vector<Vec> pair{vec2(100, 250), vec2(400, 250)};
    std::vector<double> t2{15.0, 15.0};
    const SnrSystem sys2 = build_system(pair, t2, sc, 1.0);
    const auto sol2 = solve_exact(sys2, sc.sum_power);
    REQUIRE(sol2.has_value());
    CHECK(sol2->p[0] == Catch::Approx(sol2->p[1]).epsilon(1e-12));
}

TEST_CASE("solve_exact: agrees with an independent elimination") {
    Scenario sc = plain_scenario();
    Rng rng(19);
    for (int trial = 0; trial < 25; ++trial) {
        const std::size_t K = 2 + static_cast<std::size_t>(rng.uniform01() * 3.0);
        std::vector<Vec> c;
        for (std::size_t k = 0; k < K; ++k) {
            Vec cand;
            bool ok;
            do {
                cand = vec2(rng.uniform01() * 500.0, rng.uniform01() * 500.0);
                ok = true;
                for (const Vec& prev : c) ok = ok && dist(prev, cand) > 10.0 * sc.d_min;
            } while (!ok);
            c.push_back(cand);
        }
        std::vector<double> targets;
        for (std::size_t k = 0; k < K; ++k) targets.push_back(5.0 + 40.0 * rng.uniform01());
        const SnrSystem sys = build_system(c, targets, sc, 1.0);
        REQUIRE(sys.diag_dominant);
        const auto sol = solve_exact(sys, sc.sum_power);
        REQUIRE(sol.has_value());

        const auto y = gauss_jordan(sys.a, sys.target, K);
        for (std::size_t k = 0; k < K; ++k)
            CHECK(sol->p[k] == Catch::Approx(y[k] / sys.sbar[k]).epsilon(1e-10));

        // residual of the linear system
        for (std::size_t i = 0; i < K; ++i) {
            double r = -sys.target[i];
            for (std::size_t k = 0; k < K; ++k) r += sys.at(i, k) * sys.sbar[k] * sol->p[k];
            CHECK(std::fabs(r) <= 1e-10 * std::fabs(sys.target[i]));
        }
    }
}

TEST_CASE("solve_exact: reports singular systems") {
    SnrSystem sys;
    sys.num_raus = 2;
    sys.a = {1.0, 1.0, 1.0, 1.0};
    sys.target = {1.0, 2.0};
    sys.sbar = {1.0, 1.0};
    CHECK_FALSE(solve_exact(sys, 1.0).has_value());
}

TEST_CASE("solve_constrained: feasible instance matches the exact solution") {
    Scenario sc = plain_scenario();
    std::vector<Vec> c{vec2(100, 100), vec2(400, 380)};
    std::vector<double> targets{12.0, 28.0};
    const SnrSystem sys = build_system(c, targets, sc, 1.0);
    const auto exact = solve_exact(sys, sc.sum_power);
    REQUIRE(exact.has_value());
    REQUIRE(exact->feasible_exact);
    const PowerSolution sol = solve_constrained(sys, sc.sum_power, ResidualMode::l2);
    for (std::size_t k = 0; k < 2; ++k)
        CHECK(sol.p[k] == Catch::Approx(exact->p[k]).epsilon(1e-6));
}

TEST_CASE("solve_constrained: hits the budget when targets are out of reach") {
    Scenario sc = plain_scenario();
    std::vector<Vec> c{vec2(100, 100), vec2(400, 380)};
    std::vector<double> targets{12.0e6, 28.0e6};
    const SnrSystem sys = build_system(c, targets, sc, 1.0);
    const auto exact = solve_exact(sys, sc.sum_power);
    REQUIRE(exact.has_value());
    CHECK_FALSE(exact->feasible_exact);
    for (ResidualMode mode : {ResidualMode::l2, ResidualMode::l1}) {
        const PowerSolution sol = solve_constrained(sys, sc.sum_power, mode);
        double total = 0.0;
        for (double p : sol.p) {
            CHECK(p >= 1e-12 * sc.sum_power * (1.0 - 1e-9));
            total += p;
        }
        CHECK(total == Catch::Approx(sc.sum_power).epsilon(1e-6));
    }
}

TEST_CASE("solve_constrained: within grid resolution of a 200x200 search") {
    Scenario sc = plain_scenario();
    Rng rng(77);
    for (int trial = 0; trial < 4; ++trial) {
        std::vector<Vec> c{vec2(rng.uniform01() * 500.0, rng.uniform01() * 500.0),
                           vec2(rng.uniform01() * 500.0, rng.uniform01() * 500.0)};
        if (dist(c[0], c[1]) < 50.0) continue;
        // scale targets so the budget binds
        std::vector<double> targets{1e5 * (1.0 + rng.uniform01()), 1e5 * (1.0 + rng.uniform01())};
        const SnrSystem sys = build_system(c, targets, sc, 1.0);
        const PowerSolution sol = solve_constrained(sys, sc.sum_power, ResidualMode::l2);

        double grid_best = std::numeric_limits<double>::infinity();
        const int n = 200;
        for (int i = 0; i <= n; ++i) {
            for (int j = 0; j <= n; ++j) {
                std::vector<double> p{sc.sum_power * i / n, sc.sum_power * j / n};
                if (p[0] + p[1] > sc.sum_power || p[0] <= 0.0 || p[1] <= 0.0) continue;
                grid_best = std::min(grid_best, objective_l2(sys, p));
            }
        }
        CHECK(objective_l2(sys, sol.p) <= grid_best * (1.0 + 1e-6) + 1e-12);
    }
}

TEST_CASE("optimize_global_power: symmetry and random-search dominance") {
    Scenario sc = plain_scenario();
    sc.demand = DemandField::linear(vec2(0, 0), vec2(500, 500), 4.0, 4.0);  // uniform demand
    sc.noise_power = calibrate_noise_power(sc);
    std::vector<Vec> c{vec2(150, 250), vec2(350, 250)};

    std::vector<DemandSample> samples;
    Rng rng(5);
    for (int l = 0; l < 40; ++l) {
        const double x = rng.uniform01() * 500.0, y = rng.uniform01() * 500.0;
        samples.push_back(make_demand_sample(vec2(x, y), sc));
        samples.push_back(make_demand_sample(vec2(500.0 - x, y), sc));  // mirrored set
    }
    const PowerSolution sym = optimize_global_power(c, samples, sc, ResidualMode::l2, 1.0);
    CHECK(sym.p[0] == Catch::Approx(sym.p[1]).epsilon(1e-4));

    // dominance over random feasible vectors
    const double gbar = mean_small_scale(sc.antennas_per_rau);
    const double sbar = mean_shadow(sc.shadow_sigma_db);
    auto objective = [&](const std::vector<double>& p) {
        double acc = 0.0;
        for (const auto& s : samples) {
            double theta = 0.0;
            for (std::size_t k = 0; k < c.size(); ++k)
                theta += p[k] * sbar * gbar * path_loss(dist(s.x, c[k]), sc.alpha, sc.d_min) /
                         sc.noise_power;
            const double r = s.theta_d - theta;
            acc += r * r;
        }
        return acc;
    };
    const double f_opt = objective(sym.p);
    for (int i = 0; i < 1000; ++i) {
        std::vector<double> p{rng.uniform01(), rng.uniform01()};
        const double total = p[0] + p[1];
        if (total > sc.sum_power) {
            p[0] /= total;
            p[1] /= total;
        }
        CHECK(f_opt <= objective(p) * (1.0 + 1e-9) + 1e-12);
    }
}

TEST_CASE("optimize_global_power: coincides with the codebook solve when L = K") {
    Scenario sc = plain_scenario();
    sc.noise_power = calibrate_noise_power(sc);
    const std::vector<Vec> c{vec2(120, 140), vec2(380, 360)};
    // demand samples sitting exactly at the RAU locations
    std::vector<DemandSample> samples{make_demand_sample(c[0], sc), make_demand_sample(c[1], sc)};
    std::vector<double> targets{samples[0].theta_d, samples[1].theta_d};
    const SnrSystem sys = build_system(c, targets, sc, 1.0);

    const PowerSolution cls = solve_constrained(sys, sc.sum_power, ResidualMode::l2);
    const PowerSolution glob = optimize_global_power(c, samples, sc, ResidualMode::l2, 1.0);
    for (std::size_t k = 0; k < 2; ++k)
        CHECK(glob.p[k] == Catch::Approx(cls.p[k]).epsilon(1e-5).margin(1e-12));
}

TEST_CASE("optimize_global_power: improves on warm starts") {
    Scenario sc = plain_scenario();
    sc.noise_power = calibrate_noise_power(sc);
    Rng rng(29);
    std::vector<Vec> c;
    for (int k = 0; k < 4; ++k) c.push_back(vec2(rng.uniform01() * 500.0, rng.uniform01() * 500.0));
    std::vector<DemandSample> samples;
    for (int l = 0; l < 60; ++l)
        samples.push_back(make_demand_sample(vec2(rng.uniform01() * 500.0, rng.uniform01() * 500.0), sc));

    std::vector<double> targets(4, 20.0);
    const SnrSystem sys = build_system(c, targets, sc, 1.0);
    const auto exact = solve_exact(sys, sc.sum_power);
    REQUIRE(exact.has_value());
    const std::vector<double> warm = exact->p;

    const PowerSolution glob =
        optimize_global_power(c, samples, sc, ResidualMode::l2, 1.0, {warm});
    // evaluating the surrogate at the warm start cannot beat the optimizer
    const double gbar = mean_small_scale(sc.antennas_per_rau);
    const double sbar = mean_shadow(sc.shadow_sigma_db);
    double f_warm = 0.0;
    for (const auto& s : samples) {
        double theta = 0.0;
        for (std::size_t k = 0; k < c.size(); ++k)
            theta += warm[k] * sbar * gbar * path_loss(dist(s.x, c[k]), sc.alpha, sc.d_min) /
                     sc.noise_power;
        f_warm += (s.theta_d - theta) * (s.theta_d - theta);
    }
    CHECK(glob.residual <= f_warm * (1.0 + 1e-9));
}

TEST_CASE("optimize_capacity_power: no worse than the equal split") {
    Scenario sc = plain_scenario();
    sc.noise_power = calibrate_noise_power(sc);
    Rng rng(31);
    std::vector<Vec> c;
    for (int k = 0; k < 3; ++k) c.push_back(vec2(rng.uniform01() * 500.0, rng.uniform01() * 500.0));
    std::vector<DemandSample> samples;
    for (int l = 0; l < 80; ++l)
        samples.push_back(make_demand_sample(vec2(rng.uniform01() * 500.0, rng.uniform01() * 500.0), sc));

    const PowerSolution sol = optimize_capacity_power(c, samples, sc);
    auto objective = [&](const std::vector<double>& p) {
        Placement pl{c, p};
        double acc = 0.0;
        for (const auto& s : samples) {
            const double e = s.gamma_d - snr_to_capacity(avg_snr(s.x, pl, sc));
            acc += e * e;
        }
        return acc / samples.size();
    };
    const std::vector<double> equal(3, sc.sum_power / 3.0);
    CHECK(sol.residual <= objective(equal) * (1.0 + 1e-9));
    CHECK(sol.residual == Catch::Approx(objective(sol.p)).epsilon(1e-9));
    double total = 0.0;
    for (double p : sol.p) total += p;
    CHECK(total <= sc.sum_power * (1.0 + 1e-9));
}
