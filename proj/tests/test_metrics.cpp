#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>
#include <vector>

#include "das/clustering.hpp"
#include "das/metrics.hpp"
#include "das/power.hpp"
#include "das/rng.hpp"

using namespace das;

namespace {

Scenario eval_scenario() {
    Scenario sc;
    sc.area = {1, 2000.0, 0.0};
    sc.alpha = 4.0;
    sc.d_min = 50.0;
    sc.shadow_sigma_db = 6.0;
    sc.antennas_per_rau = 1;
    sc.sum_power = 1.0;
    sc.demand = DemandField::linear(vec1(0.0), vec1(2000.0), 5.35, 3.45);
    sc.noise_power = calibrate_noise_power(sc);
    return sc;
}

std::vector<DemandSample> grid_samples(const Scenario& sc, std::size_t L) {
    std::vector<DemandSample> out;
    for (std::size_t l = 0; l < L; ++l)
        out.push_back(make_demand_sample(vec1(static_cast<double>(l) * sc.area.x_max / (L - 1)), sc));
    return out;
}

}  // namespace

TEST_CASE("capacity_errors: closed cases and loop oracle") {
    Scenario sc = eval_scenario();
    auto samples = grid_samples(sc, 10);

    std::vector<CapacityEstimate> est(samples.size());
    for (std::size_t l = 0; l < samples.size(); ++l) est[l] = {samples[l].gamma_d, 0.0};
    const CapacityErrors zero = capacity_errors(samples, est, 0.0);
    CHECK(zero.j_e1 == 0.0);
    CHECK(zero.j2 == 0.0);

    for (std::size_t l = 0; l < samples.size(); ++l) est[l].estimate = samples[l].gamma_d - 0.75;
    const CapacityErrors constant = capacity_errors(samples, est, 0.0);
    CHECK(constant.j_e1 == Catch::Approx(0.75).epsilon(1e-14));
    CHECK(constant.j2 == Catch::Approx(0.5625).epsilon(1e-14));

    Rng rng(3);
    for (auto& e : est) e.estimate = 5.0 * rng.uniform01();
    const double delta = 0.2;
    double j1 = 0.0, j2 = 0.0;
    for (std::size_t l = 0; l < samples.size(); ++l) {
        const double e = samples[l].gamma_d + delta - est[l].estimate;
        j1 += std::fabs(e);
        j2 += e * e;
    }
    const CapacityErrors rndc = capacity_errors(samples, est, delta);
    CHECK(rndc.j_e1 == Catch::Approx(j1 / samples.size()).epsilon(1e-12));
    CHECK(rndc.j2 == Catch::Approx(j2 / samples.size()).epsilon(1e-12));
}

TEST_CASE("quantization_error: zero at K=L, symmetric pair, equals distortion") {
    Scenario sc = eval_scenario();
    const auto samples = grid_samples(sc, 16);
    const double nu = compute_nu(samples);
    const IoccWeights w = make_weights(nu, demand_scale(samples), 1.0, 1, ClusterMode::squared);
    const auto aug = build_augmented(samples, w, 0.0);
    ClusterParams params;
    params.seed = 11;

    const Codebook full = lloyd_cluster(aug, samples.size(), w.omega1, w.omega2, params);
    CHECK(quantization_error(samples, full, w, 0.0) == Catch::Approx(0.0).margin(1e-15));

    // two symmetric points, one centroid at the midpoint: Q2 = omega1 * a^2 (+ t term)
    std::vector<DemandSample> pair{{vec1(-3.0), 1.0, 1.0}, {vec1(3.0), 1.0, 1.0}};
    Codebook mid;
    mid.mu_x = {vec1(0.0)};
    mid.mu_theta = {1.0};
    mid.assignment = {0, 0};
    mid.omega1 = 1.0;
    mid.omega2 = 1.0;
    mid.mode = ClusterMode::squared;
    IoccWeights unit;
    unit.nu = 1.0;
    unit.omega1 = 1.0;
    unit.omega2 = 1.0;
    unit.mode = ClusterMode::squared;
    CHECK(quantization_error(pair, mid, unit, 0.0) == Catch::Approx(9.0).epsilon(1e-14));

    const Codebook cb = lloyd_cluster(aug, 4, w.omega1, w.omega2, params);
    CHECK(quantization_error(samples, cb, w, 0.0) == Catch::Approx(cb.distortion).epsilon(1e-12));

    // direct nearest-centroid loop oracle
    double direct = 0.0;
    for (std::size_t l = 0; l < samples.size(); ++l) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < 4; ++k) {
            const Vec dx = samples[l].x - cb.mu_x[k];
            const double dt = samples[l].theta_d - cb.mu_theta[k];
            best = std::min(best, w.omega1 * norm2_sq(dx) + w.omega2 * dt * dt);
        }
        direct += best;
    }
    CHECK(quantization_error(samples, cb, w, 0.0) == Catch::Approx(direct / 16.0).epsilon(1e-12));
}

TEST_CASE("upper_bounds: feasible DAS identity and bound ordering") {
    Scenario sc = eval_scenario();
    const auto samples = grid_samples(sc, 30);
    ClusterParams params;
    params.seed = 21;
    const auto design =
        design_codebook(sc, samples, 4, Criterion::IOCC, params, WeightScaling::theoretical);

    const SnrSystem sys = build_system(design.raus, design.targets, sc, design.bound_weights.nu);
    const auto exact = solve_exact(sys, sc.sum_power);
    REQUIRE(exact.has_value());
    REQUIRE(exact->feasible_exact);

    const Placement pl{design.raus, exact->p};
    const auto ub = upper_bounds(samples, pl, design.codebook, design.bound_weights, sc);
    const double q2 = quantization_error(samples, design.codebook, design.bound_weights, sc.delta);
    CHECK(ub.ub_2() == Catch::Approx(q2).epsilon(1e-9));

    // absolute-mode identity as well
    ClusterParams pabs = params;
    pabs.mode = ClusterMode::absolute;
    const auto design1 =
        design_codebook(sc, samples, 4, Criterion::IOCC, pabs, WeightScaling::theoretical);
    const SnrSystem sys1 = build_system(design1.raus, design1.targets, sc, design1.bound_weights.nu);
    const auto exact1 = solve_exact(sys1, sc.sum_power);
    REQUIRE(exact1.has_value());
    REQUIRE(exact1->feasible_exact);
    const Placement pl1{design1.raus, exact1->p};
    const auto ub1 = upper_bounds(samples, pl1, design1.codebook, design1.bound_weights, sc);
    const double q1 = quantization_error(samples, design1.codebook, design1.bound_weights, sc.delta);
    CHECK(ub1.ub_e1() == Catch::Approx(q1).epsilon(1e-9));

    // chain at the SNR level: j2 <= ub_opt <= ub_2, with v_kx <= nu_glob
    const auto glob = optimize_global_power(design.raus, samples, sc, ResidualMode::l2,
                                            design.bound_weights.nu, {exact->p});
    const Placement pl_glob{design.raus, glob.p};
    const SnrSurrogate j = snr_surrogate(samples, pl_glob, sc, design.bound_weights.nu);
    CHECK(j.j2 <= ub.opt * (1.0 + 1e-9));
    CHECK(ub.opt <= ub.ub_2() * (1.0 + 1e-9));
    for (double v : ub.v_kx) CHECK(v <= design.bound_weights.nu_glob * (1.0 + 1e-12));

    const SnrSurrogate j1s = snr_surrogate(samples, pl_glob, sc, design.bound_weights.nu);
    CHECK(j1s.j1 <= ub.ub_e1() * (1.0 + 1e-9));
}

TEST_CASE("upper_bounds: K = L feasible case gives zero bounds") {
    Scenario sc = eval_scenario();
    const auto samples = grid_samples(sc, 12);
    ClusterParams params;
    params.seed = 31;
    const auto design =
        design_codebook(sc, samples, samples.size(), Criterion::IOCC, params, WeightScaling::theoretical);
    const SnrSystem sys = build_system(design.raus, design.targets, sc, design.bound_weights.nu);
    const auto exact = solve_exact(sys, sc.sum_power);
    REQUIRE(exact.has_value());
    REQUIRE(exact->feasible_exact);
    const Placement pl{design.raus, exact->p};
    const auto ub = upper_bounds(samples, pl, design.codebook, design.bound_weights, sc);
    CHECK(ub.ub_2() <= 1e-9);
    CHECK(quantization_error(samples, design.codebook, design.bound_weights, sc.delta) <= 1e-12);
}

TEST_CASE("effective capacity definitions") {
    Scenario sc = eval_scenario();
    std::vector<DemandSample> samples{make_demand_sample(vec1(500.0), sc),
                                      make_demand_sample(vec1(1500.0), sc)};
    // direct definition checks on synthetic rows
    LocationRow row;
    row.gamma_d = 3.0;
    row.gamma_a = 5.0;
    CHECK(std::min(row.gamma_d, row.gamma_a) == 3.0);
    CHECK(std::max(row.gamma_a - row.gamma_d, 0.0) == 2.0);
    row.gamma_d = 5.0;
    row.gamma_a = 3.0;
    CHECK(std::min(row.gamma_d, row.gamma_a) == 3.0);
    CHECK(std::max(row.gamma_a - row.gamma_d, 0.0) == 0.0);

    Placement pl{{vec1(600.0), vec1(1400.0)}, {0.5, 0.5}};
    McConfig mc{5, 4000};
    const EvalReport rep = effective_capacity_report(samples, pl, sc, mc);
    REQUIRE(rep.per_location.size() == 2);
    double eff = 0.0, wasted = 0.0, cap = 0.0;
    for (const auto& r : rep.per_location) {
        CHECK(r.gamma_eff == std::min(r.gamma_d, r.gamma_a));
        CHECK(r.gamma_wasted == std::max(r.gamma_a - r.gamma_d, 0.0));
        CHECK(r.gamma_eff <= r.gamma_d);
        CHECK(r.gamma_eff <= r.gamma_a);
        if (r.gamma_a >= r.gamma_d) CHECK(r.gamma_eff + r.gamma_wasted == Catch::Approx(r.gamma_a));
        else CHECK(r.gamma_wasted == 0.0);
        eff += r.gamma_eff;
        wasted += r.gamma_wasted;
        cap += r.gamma_a;
    }
    CHECK(rep.cell_avg_effective == Catch::Approx(eff / 2.0).epsilon(1e-14));
    CHECK(rep.cell_avg_wasted == Catch::Approx(wasted / 2.0).epsilon(1e-14));
    CHECK(rep.cell_avg_capacity == Catch::Approx(cap / 2.0).epsilon(1e-14));
}

TEST_CASE("per-location CSV format") {
    Scenario sc = eval_scenario();
    const auto samples = grid_samples(sc, 3);
    Placement pl{{vec1(1000.0)}, {1.0}};
    McConfig mc{5, 100};
    const EvalReport rep = effective_capacity_report(samples, pl, sc, mc);
    std::ostringstream os;
    rep.write_per_location_csv(os, 1);
    std::istringstream is(os.str());
    std::string header;
    std::getline(is, header);
    CHECK(header == "x,gamma_d,gamma_a,gamma_eff,gamma_wasted,theta_d,theta_a,gamma_a_stderr");
    int rows = 0;
    std::string last;
    for (std::string line; std::getline(is, line);) {
        ++rows;
        last = line;
    }
    CHECK(rows == 4);  // three locations plus the cell-average row
    CHECK(last.rfind("cell_avg,", 0) == 0);
    CHECK(fmt12(0.1234567890123456) == "0.123456789012");
}
