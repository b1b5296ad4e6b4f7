#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "das/clustering.hpp"
#include "das/fading.hpp"
#include "das/geometry.hpp"
#include "das/metrics.hpp"
#include "das/power.hpp"

namespace das {

// Raised on malformed or inconsistent experiment specs (CLI exit code 2).
struct SpecError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class SamplingKind { uniform_grid, uniform_random, ppp };
enum class PowerMode { optimized, equal_split };

struct SamplingSpec {
    SamplingKind kind = SamplingKind::uniform_grid;
    std::size_t count = 100;    // grid / uniform_random
    double density = 0.0;       // ppp, points per m^2
    std::uint64_t seed = 1;     // random kinds; fresh snapshot per sweep seed
};

struct ExperimentSpec {
    Scenario scenario;
    SamplingSpec sampling;
    std::vector<int> k_sweep = {1, 2, 3, 4, 5, 6, 7, 8};
    std::vector<Criterion> criteria = {Criterion::SDC, Criterion::IOCC};
    PowerMode power_mode = PowerMode::optimized;
    int num_cluster_seeds = 5;
    McConfig mc;
    std::size_t mc_max_locations = 0;  // 0 = evaluate MC metrics at every sample
    WeightScaling placement_scaling = WeightScaling::demand;
    ClusterParams cluster;
    std::string out_dir;

    void validate() const {
        scenario.validate();
        if (k_sweep.empty()) throw SpecError("spec: k_sweep is empty");
        for (int k : k_sweep)
            if (k < 1) throw SpecError("spec: k_sweep entries must be >= 1");
        if (criteria.empty()) throw SpecError("spec: criteria is empty");
        if (num_cluster_seeds < 1) throw SpecError("spec: num_cluster_seeds must be >= 1");
        if (mc.num_draws < 2) throw SpecError("spec: mc.num_draws must be >= 2");
        if (sampling.kind == SamplingKind::ppp && sampling.density <= 0.0)
            throw SpecError("spec: ppp density must be positive");
        if (sampling.kind != SamplingKind::ppp && sampling.count < 1)
            throw SpecError("spec: sampling count must be >= 1");
        if (cluster.restarts < 1 || cluster.max_iters < 1)
            throw SpecError("spec: cluster restarts and max_iters must be >= 1");
    }
};

// ---------------------------------------------------------------------------
// sampling

inline std::vector<Vec> sample_uniform_grid(const Area& area, std::size_t n) {
    std::vector<Vec> out;
    if (area.dim == 1) {
        out.reserve(n);
        if (n == 1) {
            out.push_back(vec1(area.x_max / 2.0));
        } else {
            for (std::size_t l = 0; l < n; ++l)
                out.push_back(vec1(static_cast<double>(l) * area.x_max / static_cast<double>(n - 1)));
        }
        return out;
    }
    const std::size_t nx = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(n))));
    const std::size_t side = std::max<std::size_t>(1, nx);
    out.reserve(side * side);
    for (std::size_t i = 0; i < side; ++i)
        for (std::size_t j = 0; j < side; ++j)
            out.push_back(vec2((i + 0.5) * area.x_max / side, (j + 0.5) * area.y_max / side));
    return out;
}

inline Vec sample_uniform_point(const Area& area, Rng& rng) {
    const double x = rng.uniform01() * area.x_max;
    return area.dim == 1 ? vec1(x) : vec2(x, rng.uniform01() * area.y_max);
}

inline std::vector<Vec> sample_uniform_random(const Area& area, std::size_t n, Rng& rng) {
    std::vector<Vec> out;
    out.reserve(n);
    for (std::size_t l = 0; l < n; ++l) out.push_back(sample_uniform_point(area, rng));
    return out;
}

struct PppDraw {
    std::vector<Vec> points;
    int empty_redraws = 0;  // zero-point draws re-drawn until nonempty
};

// Poisson point process: count ~ Poisson(density * |area|) via exponential
// interarrivals, points i.i.d. uniform. Empty draws are re-drawn.
inline PppDraw sample_ppp(const Area& area, double density, Rng& rng);

inline PppDraw sample_ppp(const Area& area, double density, std::uint64_t seed) {
    Rng rng(seed);
    return sample_ppp(area, density, rng);
}

inline PppDraw sample_ppp(const Area& area, double density, Rng& rng) {
    if (density <= 0.0) throw std::invalid_argument("sample_ppp: density must be positive");
    const double lambda = density * area.measure();
    PppDraw draw;
    while (true) {
        std::size_t count = 0;
        double acc = rng.exponential();
        while (acc <= lambda) {
            ++count;
            acc += rng.exponential();
        }
        if (count > 0) {
            draw.points.reserve(count);
            for (std::size_t l = 0; l < count; ++l) draw.points.push_back(sample_uniform_point(area, rng));
            return draw;
        }
        ++draw.empty_redraws;
    }
}

// ---------------------------------------------------------------------------
// example scenarios

namespace detail {

inline void finalize_noise(Scenario& sc, double ref_distance = 0.0) {
    sc.noise_power = calibrate_noise_power(sc, ref_distance);
}

}  // namespace detail

// Linear cell, 2 km; demand ramps from 5.35 bps/Hz at x=0 to 3.45 at x=2000;
// 100 evenly spaced samples; optimized power under a 1 W budget.
inline ExperimentSpec make_example1() {
    ExperimentSpec spec;
    spec.scenario.area = {1, 2000.0, 0.0};
    spec.scenario.alpha = 4.0;
    spec.scenario.d_min = 10.0;
    spec.scenario.shadow_sigma_db = 6.0;
    spec.scenario.antennas_per_rau = 1;
    spec.scenario.num_raus = 1;
    spec.scenario.sum_power = 1.0;
    spec.scenario.delta = 0.0;
    spec.scenario.demand = DemandField::linear(vec1(0.0), vec1(2000.0), 5.35, 3.45);
    detail::finalize_noise(spec.scenario, spec.scenario.area.bbox_diag() / 4.0);
    spec.sampling = {SamplingKind::uniform_grid, 100, 0.0, 1};
    spec.power_mode = PowerMode::optimized;
    spec.mc.seed = 240900;
    spec.out_dir = "out_example1";
    return spec;
}

// 2-D 500x500 m cell; PPP user locations (density 0.003); demand ramps from
// 5.35 bps/Hz at [0,0] to 3.45 at [500,500] along the diagonal; optimized
// power under a 1 W budget.
inline ExperimentSpec make_example2() {
    ExperimentSpec spec;
    spec.scenario.area = {2, 500.0, 500.0};
    spec.scenario.alpha = 4.0;
    spec.scenario.d_min = 25.0;
    spec.scenario.shadow_sigma_db = 6.0;
    spec.scenario.antennas_per_rau = 1;
    spec.scenario.num_raus = 1;
    spec.scenario.sum_power = 1.0;
    spec.scenario.delta = 0.0;
    spec.scenario.demand = DemandField::linear(vec2(0.0, 0.0), vec2(500.0, 500.0), 5.35, 3.45);
    detail::finalize_noise(spec.scenario);
    spec.sampling = {SamplingKind::ppp, 0, 0.003, 2};
    spec.power_mode = PowerMode::optimized;
    spec.mc.seed = 240901;
    spec.mc_max_locations = 200;
    spec.out_dir = "out_example2";
    return spec;
}

// 2-D 500x500 m cell; PPP density 0.02; radial demand ramp from 9.65 bps/Hz
// at the centre to 3.45 at the borders (reference radius 250 m, clamped
// beyond); fixed equal power split, no power control.
inline ExperimentSpec make_example3(double alpha = 3.0) {
    ExperimentSpec spec;
    spec.scenario.area = {2, 500.0, 500.0};
    spec.scenario.alpha = alpha;
    spec.scenario.d_min = 8.0;
    spec.scenario.shadow_sigma_db = 6.0;
    spec.scenario.antennas_per_rau = 1;
    spec.scenario.num_raus = 1;
    spec.scenario.sum_power = 1.0;
    spec.scenario.delta = 0.0;
    spec.scenario.demand = DemandField::radial(vec2(250.0, 250.0), 9.65, 3.45, 250.0);
    detail::finalize_noise(spec.scenario);
    spec.sampling = {SamplingKind::ppp, 0, 0.02, 3};
    spec.power_mode = PowerMode::equal_split;
    spec.k_sweep = {2, 4, 6, 8};
    spec.mc.seed = 240902;
    spec.mc_max_locations = 400;
    spec.out_dir = "out_example3";
    return spec;
}

// ---------------------------------------------------------------------------
// JSON spec files

inline const char* to_string(Criterion c) { return c == Criterion::SDC ? "SDC" : "IOCC"; }

namespace detail {

using json = nlohmann::json;

inline json vec_to_json(const Vec& v, int dim) {
    return dim == 1 ? json::array({v[0]}) : json::array({v[0], v[1]});
}

inline Vec vec_from_json(const json& j, int dim, const char* what) {
    if (!j.is_array() || j.size() != static_cast<std::size_t>(dim))
        throw SpecError(std::string("spec: ") + what + " must be an array of length " +
                        std::to_string(dim));
    Vec v{0.0, 0.0};
    v[0] = j[0].get<double>();
    if (dim == 2) v[1] = j[1].get<double>();
    return v;
}

template <typename T>
T get_field(const json& j, const char* key, const char* ctx) {
    if (!j.contains(key)) throw SpecError(std::string("spec: missing field ") + ctx + "." + key);
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw SpecError(std::string("spec: bad value for ") + ctx + "." + key);
    }
}

template <typename T>
T get_or(const json& j, const char* key, T def) {
    return j.contains(key) ? j.at(key).get<T>() : def;
}

}  // namespace detail

inline nlohmann::json spec_to_json(const ExperimentSpec& spec) {
    using nlohmann::json;
    const int dim = spec.scenario.area.dim;
    json demand;
    const DemandField& f = spec.scenario.demand;
    switch (f.kind) {
        case DemandField::Kind::linear_ramp:
            demand = {{"kind", "linear_ramp"},
                      {"a", detail::vec_to_json(f.a, dim)},
                      {"b", detail::vec_to_json(f.b, dim)},
                      {"value_a", f.value_a},
                      {"value_b", f.value_b}};
            break;
        case DemandField::Kind::radial_ramp:
            demand = {{"kind", "radial_ramp"},
                      {"center", detail::vec_to_json(f.center, dim)},
                      {"value_center", f.value_center},
                      {"value_border", f.value_border},
                      {"radius", f.radius}};
            break;
        case DemandField::Kind::table: {
            json pts = json::array();
            for (const Vec& p : f.points) pts.push_back(detail::vec_to_json(p, dim));
            demand = {{"kind", "table"}, {"points", pts}, {"values", f.values}};
            break;
        }
    }
    json area = {{"dim", dim}, {"x_max", spec.scenario.area.x_max}};
    if (dim == 2) area["y_max"] = spec.scenario.area.y_max;
    json scenario = {{"area", area},
                     {"alpha", spec.scenario.alpha},
                     {"d_min", spec.scenario.d_min},
                     {"noise_power", spec.scenario.noise_power},
                     {"shadow_sigma_db", spec.scenario.shadow_sigma_db},
                     {"antennas_per_rau", spec.scenario.antennas_per_rau},
                     {"num_raus", spec.scenario.num_raus},
                     {"sum_power", spec.scenario.sum_power},
                     {"delta", spec.scenario.delta},
                     {"demand", demand}};
    json sampling;
    switch (spec.sampling.kind) {
        case SamplingKind::uniform_grid:
            sampling = {{"kind", "uniform_grid"}, {"count", spec.sampling.count}};
            break;
        case SamplingKind::uniform_random:
            sampling = {{"kind", "uniform_random"}, {"count", spec.sampling.count}, {"seed", spec.sampling.seed}};
            break;
        case SamplingKind::ppp:
            sampling = {{"kind", "ppp"}, {"density", spec.sampling.density}, {"seed", spec.sampling.seed}};
            break;
    }
    json criteria = nlohmann::json::array();
    for (Criterion c : spec.criteria) criteria.push_back(to_string(c));
    return json{{"schema_version", 1},
                {"scenario", scenario},
                {"sampling", sampling},
                {"k_sweep", spec.k_sweep},
                {"criteria", criteria},
                {"power_mode", spec.power_mode == PowerMode::optimized ? "optimized" : "equal_split"},
                {"num_cluster_seeds", spec.num_cluster_seeds},
                {"mc", {{"seed", spec.mc.seed}, {"num_draws", spec.mc.num_draws}, {"max_locations", spec.mc_max_locations}}},
                {"placement_weights", spec.placement_scaling == WeightScaling::demand ? "demand" : "theoretical"},
                {"cluster",
                 {{"mode", spec.cluster.mode == ClusterMode::squared ? "squared" : "absolute"},
                  {"seed", spec.cluster.seed},
                  {"max_iters", spec.cluster.max_iters},
                  {"tol", spec.cluster.tol},
                  {"restarts", spec.cluster.restarts}}},
                {"out_dir", spec.out_dir}};
}

inline ExperimentSpec spec_from_json(const nlohmann::json& j) {
    using detail::get_field;
    using detail::get_or;
    ExperimentSpec spec;
    if (get_or<int>(j, "schema_version", 1) != 1) throw SpecError("spec: unsupported schema_version");
    if (!j.contains("scenario")) throw SpecError("spec: missing scenario");
    const auto& js = j.at("scenario");
    const auto& ja = js.contains("area") ? js.at("area") : throw SpecError("spec: missing scenario.area");
    spec.scenario.area.dim = get_field<int>(ja, "dim", "area");
    spec.scenario.area.x_max = get_field<double>(ja, "x_max", "area");
    spec.scenario.area.y_max = spec.scenario.area.dim == 2 ? get_field<double>(ja, "y_max", "area") : 0.0;
    const int dim = spec.scenario.area.dim;
    spec.scenario.alpha = get_field<double>(js, "alpha", "scenario");
    spec.scenario.d_min = get_field<double>(js, "d_min", "scenario");
    spec.scenario.shadow_sigma_db = get_field<double>(js, "shadow_sigma_db", "scenario");
    spec.scenario.antennas_per_rau = get_or<int>(js, "antennas_per_rau", 1);
    spec.scenario.num_raus = get_or<int>(js, "num_raus", 1);
    spec.scenario.sum_power = get_field<double>(js, "sum_power", "scenario");
    spec.scenario.delta = get_or<double>(js, "delta", 0.0);
    if (!js.contains("demand")) throw SpecError("spec: missing scenario.demand");
    const auto& jd = js.at("demand");
    const std::string kind = get_field<std::string>(jd, "kind", "demand");
    if (kind == "linear_ramp") {
        spec.scenario.demand = DemandField::linear(
            detail::vec_from_json(jd.at("a"), dim, "demand.a"),
            detail::vec_from_json(jd.at("b"), dim, "demand.b"),
            get_field<double>(jd, "value_a", "demand"), get_field<double>(jd, "value_b", "demand"));
    } else if (kind == "radial_ramp") {
        spec.scenario.demand = DemandField::radial(
            detail::vec_from_json(jd.at("center"), dim, "demand.center"),
            get_field<double>(jd, "value_center", "demand"),
            get_field<double>(jd, "value_border", "demand"), get_field<double>(jd, "radius", "demand"));
    } else if (kind == "table") {
        if (!jd.contains("points") || !jd.contains("values")) throw SpecError("spec: demand table needs points and values");
        std::vector<Vec> pts;
        for (const auto& p : jd.at("points")) pts.push_back(detail::vec_from_json(p, dim, "demand.points[]"));
        spec.scenario.demand = DemandField::table(std::move(pts), jd.at("values").get<std::vector<double>>());
    } else {
        throw SpecError("spec: unknown demand kind '" + kind + "'");
    }
    // noise: explicit value or "auto" calibration
    if (!js.contains("noise_power") || (js.at("noise_power").is_string() && js.at("noise_power") == "auto")) {
        detail::finalize_noise(spec.scenario);
    } else {
        spec.scenario.noise_power = get_field<double>(js, "noise_power", "scenario");
    }

    if (j.contains("sampling")) {
        const auto& jp = j.at("sampling");
        const std::string skind = get_field<std::string>(jp, "kind", "sampling");
        if (skind == "uniform_grid") {
            spec.sampling.kind = SamplingKind::uniform_grid;
            spec.sampling.count = get_field<std::size_t>(jp, "count", "sampling");
        } else if (skind == "uniform_random") {
            spec.sampling.kind = SamplingKind::uniform_random;
            spec.sampling.count = get_field<std::size_t>(jp, "count", "sampling");
            spec.sampling.seed = get_or<std::uint64_t>(jp, "seed", 1);
        } else if (skind == "ppp") {
            spec.sampling.kind = SamplingKind::ppp;
            spec.sampling.density = get_field<double>(jp, "density", "sampling");
            spec.sampling.seed = get_or<std::uint64_t>(jp, "seed", 1);
        } else {
            throw SpecError("spec: unknown sampling kind '" + skind + "'");
        }
    }
    if (j.contains("k_sweep")) spec.k_sweep = j.at("k_sweep").get<std::vector<int>>();
    if (j.contains("criteria")) {
        spec.criteria.clear();
        for (const auto& c : j.at("criteria")) {
            const std::string name = c.get<std::string>();
            if (name == "SDC") spec.criteria.push_back(Criterion::SDC);
            else if (name == "IOCC") spec.criteria.push_back(Criterion::IOCC);
            else throw SpecError("spec: unknown criterion '" + name + "'");
        }
    }
    if (j.contains("power_mode")) {
        const std::string pm = j.at("power_mode").get<std::string>();
        if (pm == "optimized") spec.power_mode = PowerMode::optimized;
        else if (pm == "equal_split") spec.power_mode = PowerMode::equal_split;
        else throw SpecError("spec: unknown power_mode '" + pm + "'");
    }
    spec.num_cluster_seeds = get_or<int>(j, "num_cluster_seeds", spec.num_cluster_seeds);
    if (j.contains("mc")) {
        const auto& jm = j.at("mc");
        spec.mc.seed = get_or<std::uint64_t>(jm, "seed", spec.mc.seed);
        spec.mc.num_draws = get_or<std::size_t>(jm, "num_draws", spec.mc.num_draws);
        spec.mc_max_locations = get_or<std::size_t>(jm, "max_locations", spec.mc_max_locations);
    }
    if (j.contains("placement_weights")) {
        const std::string w = j.at("placement_weights").get<std::string>();
        if (w == "demand") spec.placement_scaling = WeightScaling::demand;
        else if (w == "theoretical") spec.placement_scaling = WeightScaling::theoretical;
        else throw SpecError("spec: unknown placement_weights '" + w + "'");
    }
    if (j.contains("cluster")) {
        const auto& jc = j.at("cluster");
        const std::string mode = get_or<std::string>(jc, "mode", "squared");
        if (mode == "squared") spec.cluster.mode = ClusterMode::squared;
        else if (mode == "absolute") spec.cluster.mode = ClusterMode::absolute;
        else throw SpecError("spec: unknown cluster mode '" + mode + "'");
        spec.cluster.seed = get_or<std::uint64_t>(jc, "seed", spec.cluster.seed);
        spec.cluster.max_iters = get_or<int>(jc, "max_iters", spec.cluster.max_iters);
        spec.cluster.tol = get_or<double>(jc, "tol", spec.cluster.tol);
        spec.cluster.restarts = get_or<int>(jc, "restarts", spec.cluster.restarts);
    }
    spec.out_dir = get_or<std::string>(j, "out_dir", spec.out_dir);
    spec.validate();
    return spec;
}

inline ExperimentSpec load_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SpecError("spec: cannot open '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw SpecError(std::string("spec: JSON parse error: ") + e.what());
    }
    return spec_from_json(j);
}

inline void save_spec(const ExperimentSpec& spec, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << spec_to_json(spec).dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// sweep orchestration

struct CellResult {
    Criterion criterion = Criterion::SDC;
    int num_raus = 0;
    int seed = 0;
    EvalReport report;
    std::vector<Vec> raus;
    std::vector<double> powers;
    std::size_t omega_adjusted = 0;  // samples re-drawn or dropped by the min-distance filter
    std::size_t eval_count = 0;      // samples behind bounds/quantization values
    std::size_t mc_count = 0;        // samples behind MC metrics
};

struct AggregateRow {
    Criterion criterion = Criterion::SDC;
    int num_raus = 0;
    double mean_j_e1 = 0.0;
    double mean_j2 = 0.0;
    double median_j2 = 0.0;
    double mean_q2 = 0.0;
    double median_ub_e1 = 0.0;
    double median_ub_2 = 0.0;
    double median_ub_opt = 0.0;
    double mean_cell_avg_capacity = 0.0;
    double mean_cell_avg_effective = 0.0;
    double mean_cell_avg_wasted = 0.0;
    double norm_mean_j2 = 0.0;  // mean_j2 / max over K of the SDC mean_j2
};

struct SweepResult {
    std::vector<CellResult> cells;
    std::vector<AggregateRow> aggregate;
};

namespace detail {

struct AdjustedSet {
    std::vector<DemandSample> samples;
    std::vector<std::size_t> base_index;
    std::size_t adjusted = 0;
};

inline bool respects_min_distance(const Vec& x, const std::vector<Vec>& raus, double d_min) {
    for (const Vec& c : raus)
        if (dist(x, c) < d_min) return false;
    return true;
}

// Min-distance filter: random samplings re-draw offending samples (seeded per
// base index), grids drop them.
inline AdjustedSet adjust_to_omega_bar(const std::vector<DemandSample>& base,
                                       const std::vector<std::size_t>& indices,
                                       const std::vector<Vec>& raus, const Scenario& sc,
                                       const SamplingSpec& sampling, std::uint64_t redraw_stream) {
    AdjustedSet out;
    out.samples.reserve(indices.size());
    out.base_index.reserve(indices.size());
    for (std::size_t idx : indices) {
        const DemandSample& s = base[idx];
        if (respects_min_distance(s.x, raus, sc.d_min)) {
            out.samples.push_back(s);
            out.base_index.push_back(idx);
            continue;
        }
        ++out.adjusted;
        if (sampling.kind == SamplingKind::uniform_grid) continue;  // dropped
        Rng rng(substream_seed(redraw_stream, idx));
        Vec x = s.x;
        for (int attempt = 0; attempt < 1000; ++attempt) {
            x = sample_uniform_point(sc.area, rng);
            if (respects_min_distance(x, raus, sc.d_min)) break;
        }
        out.samples.push_back(make_demand_sample(x, sc));
        out.base_index.push_back(idx);
    }
    return out;
}

inline std::vector<std::size_t> strided_subset(std::size_t n, std::size_t cap) {
    std::vector<std::size_t> idx;
    if (cap == 0 || cap >= n) {
        idx.resize(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        return idx;
    }
    idx.reserve(cap);
    for (std::size_t i = 0; i < cap; ++i) idx.push_back(i * n / cap);
    return idx;
}

inline double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double mean(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double acc = 0.0;
    for (double x : v) acc += x;
    return acc / static_cast<double>(v.size());
}

}  // namespace detail

// One (criterion, K) cell on a fixed snapshot: place, allocate power,
// evaluate. Exposed separately so experiments can drive cells directly.
inline CellResult run_cell(const ExperimentSpec& spec, const Scenario& sc,
                           const std::vector<DemandSample>& base,
                           const std::vector<std::size_t>& mc_subset, Criterion criterion, int K,
                           int seed_index) {
    CellResult cell;
    cell.criterion = criterion;
    cell.num_raus = K;
    cell.seed = seed_index;

    ClusterParams cp = spec.cluster;
    cp.seed = substream_seed(spec.cluster.seed, static_cast<std::uint64_t>(seed_index),
                             static_cast<std::uint64_t>(K));
    const auto design = design_codebook(sc, base, static_cast<std::size_t>(K), criterion, cp,
                                        spec.placement_scaling);
    cell.raus = design.raus;

    const ResidualMode rmode =
        spec.cluster.mode == ClusterMode::squared ? ResidualMode::l2 : ResidualMode::l1;
    const double nu = design.bound_weights.nu;

    const auto sys = build_system(design.raus, design.targets, sc, nu);
    const auto exact = solve_exact(sys, sc.sum_power);
    const bool feasible = exact.has_value() && exact->feasible_exact;

    std::vector<double> p_cls;
    std::vector<double> p_eval;
    const std::vector<double> p_equal(static_cast<std::size_t>(K),
                                      sc.sum_power / static_cast<double>(K));
    if (spec.power_mode == PowerMode::equal_split) {
        p_cls = p_equal;
        p_eval = p_equal;
    } else {
        p_cls = feasible ? exact->p : solve_constrained(sys, sc.sum_power, rmode).p;
        const auto surrogate = optimize_global_power(design.raus, base, sc, rmode, nu, {p_cls});
        p_eval = optimize_capacity_power(design.raus, base, sc, {p_cls, surrogate.p}).p;
    }
    cell.powers = p_eval;

    // Bounds and quantization errors are codebook-design quantities: they are
    // computed on the design samples with the codebook's own assignment. The
    // min-distance filter below only applies to capacity evaluation.
    cell.eval_count = base.size();
    const Placement pl_cls{design.raus, p_cls};
    const auto ub = upper_bounds(base, pl_cls, design.codebook, design.bound_weights, sc);

    const IoccWeights w2 = make_weights(nu, design.bound_weights.nu_glob,
                                        design.bound_weights.gamma_fading, sc.area.dim,
                                        ClusterMode::squared);
    const IoccWeights w1 = make_weights(nu, design.bound_weights.nu_glob,
                                        design.bound_weights.gamma_fading, sc.area.dim,
                                        ClusterMode::absolute);

    // MC metrics on the (possibly subsampled) min-distance-adjusted set;
    // per-location streams are keyed by the base sample index so criteria
    // being compared share draws.
    const std::uint64_t redraw_stream =
        substream_seed(spec.sampling.seed ^ 0x5bd1e995u, static_cast<std::uint64_t>(seed_index));
    const auto mc_set = detail::adjust_to_omega_bar(base, mc_subset, design.raus, sc, spec.sampling,
                                                    redraw_stream);
    cell.omega_adjusted = mc_set.adjusted;
    cell.mc_count = mc_set.samples.size();
    std::vector<std::uint64_t> seeds(mc_set.samples.size());
    for (std::size_t j = 0; j < mc_set.samples.size(); ++j)
        seeds[j] = substream_seed(spec.mc.seed, static_cast<std::uint64_t>(seed_index),
                                  mc_set.base_index[j]);
    const Placement pl_eval{design.raus, p_eval};
    if (!mc_set.samples.empty())
        cell.report = effective_capacity_report(mc_set.samples, pl_eval, sc, spec.mc.num_draws, seeds);

    cell.report.q2 = quantization_error(base, design.codebook, w2, sc.delta);
    cell.report.q1 = quantization_error(base, design.codebook, w1, sc.delta);
    cell.report.ub_e1 = ub.ub_e1();
    cell.report.ub_2 = ub.ub_2();
    cell.report.ub_opt = ub.opt;
    cell.report.feasible_exact = feasible;
    return cell;
}

inline void write_sweep_outputs(const ExperimentSpec& spec, const SweepResult& result) {
    namespace fs = std::filesystem;
    if (spec.out_dir.empty()) return;
    fs::create_directories(spec.out_dir);
    save_spec(spec, (fs::path(spec.out_dir) / "spec_used.json").string());

    std::ofstream summary(fs::path(spec.out_dir) / "sweep_summary.csv");
    summary << "criterion,K,seed,j_e1,j2,q2,ub_e1,ub_2,ub_opt,cell_avg_capacity,"
               "cell_avg_effective,cell_avg_wasted,feasible_exact\n";
    for (const CellResult& cell : result.cells) {
        const EvalReport& r = cell.report;
        summary << to_string(cell.criterion) << ',' << cell.num_raus << ',' << cell.seed << ','
                << fmt12(r.j_e1) << ',' << fmt12(r.j2) << ',' << fmt12(r.q2) << ','
                << fmt12(r.ub_e1) << ',' << fmt12(r.ub_2) << ',' << fmt12(r.ub_opt) << ','
                << fmt12(r.cell_avg_capacity) << ',' << fmt12(r.cell_avg_effective) << ','
                << fmt12(r.cell_avg_wasted) << ',' << (r.feasible_exact ? 1 : 0) << '\n';

        std::ostringstream stem;
        stem << to_string(cell.criterion) << '_' << cell.num_raus << '_' << cell.seed;
        std::ofstream pf(fs::path(spec.out_dir) / ("placement_" + stem.str() + ".csv"));
        pf << (spec.scenario.area.dim == 1 ? "k,x,p" : "k,x,y,p") << '\n';
        for (std::size_t k = 0; k < cell.raus.size(); ++k) {
            pf << k << ',' << fmt12(cell.raus[k][0]);
            if (spec.scenario.area.dim == 2) pf << ',' << fmt12(cell.raus[k][1]);
            pf << ',' << fmt12(cell.powers[k]) << '\n';
        }
        std::ofstream lf(fs::path(spec.out_dir) / ("per_location_" + stem.str() + ".csv"));
        cell.report.write_per_location_csv(lf, spec.scenario.area.dim);
    }

    std::ofstream agg(fs::path(spec.out_dir) / "sweep_aggregate.csv");
    agg << "criterion,K,mean_j_e1,mean_j2,median_j2,mean_q2,median_ub_e1,median_ub_2,median_ub_opt,"
           "mean_cell_avg_capacity,mean_cell_avg_effective,mean_cell_avg_wasted,norm_mean_j2\n";
    for (const AggregateRow& row : result.aggregate) {
        agg << to_string(row.criterion) << ',' << row.num_raus << ',' << fmt12(row.mean_j_e1) << ','
            << fmt12(row.mean_j2) << ',' << fmt12(row.median_j2) << ',' << fmt12(row.mean_q2) << ','
            << fmt12(row.median_ub_e1) << ',' << fmt12(row.median_ub_2) << ','
            << fmt12(row.median_ub_opt) << ',' << fmt12(row.mean_cell_avg_capacity) << ','
            << fmt12(row.mean_cell_avg_effective) << ',' << fmt12(row.mean_cell_avg_wasted) << ','
            << fmt12(row.norm_mean_j2) << '\n';
    }
}

// Full experiment: per sweep seed draw a snapshot, then for every K and
// criterion place RAUs, allocate power, evaluate, and aggregate across seeds.
inline SweepResult run_sweep(const ExperimentSpec& spec) {
    spec.validate();
    const Scenario& sc = spec.scenario;

    SweepResult result;
    for (int seed_index = 0; seed_index < spec.num_cluster_seeds; ++seed_index) {
        std::vector<Vec> xs;
        switch (spec.sampling.kind) {
            case SamplingKind::uniform_grid:
                xs = sample_uniform_grid(sc.area, spec.sampling.count);
                break;
            case SamplingKind::uniform_random: {
                Rng rng(substream_seed(spec.sampling.seed, static_cast<std::uint64_t>(seed_index)));
                xs = sample_uniform_random(sc.area, spec.sampling.count, rng);
                break;
            }
            case SamplingKind::ppp: {
                Rng rng(substream_seed(spec.sampling.seed, static_cast<std::uint64_t>(seed_index)));
                xs = sample_ppp(sc.area, spec.sampling.density, rng).points;
                break;
            }
        }
        const auto base = make_demand_samples(xs, sc);
        const auto mc_subset = detail::strided_subset(base.size(), spec.mc_max_locations);

        for (int K : spec.k_sweep) {
            if (static_cast<std::size_t>(K) > base.size()) continue;  // more clusters than samples
            for (Criterion criterion : spec.criteria) {
                result.cells.push_back(run_cell(spec, sc, base, mc_subset, criterion, K, seed_index));
            }
        }
    }

    // Aggregate across seeds in (criterion, K) order.
    for (Criterion criterion : spec.criteria) {
        for (int K : spec.k_sweep) {
            std::vector<double> j_e1, j2, q2, ub_e1, ub_2, ub_opt, cap, eff, wasted;
            for (const CellResult& cell : result.cells) {
                if (cell.criterion != criterion || cell.num_raus != K) continue;
                j_e1.push_back(cell.report.j_e1);
                j2.push_back(cell.report.j2);
                q2.push_back(cell.report.q2);
                ub_e1.push_back(cell.report.ub_e1);
                ub_2.push_back(cell.report.ub_2);
                ub_opt.push_back(cell.report.ub_opt);
                cap.push_back(cell.report.cell_avg_capacity);
                eff.push_back(cell.report.cell_avg_effective);
                wasted.push_back(cell.report.cell_avg_wasted);
            }
            if (j2.empty()) continue;
            AggregateRow row;
            row.criterion = criterion;
            row.num_raus = K;
            row.mean_j_e1 = detail::mean(j_e1);
            row.mean_j2 = detail::mean(j2);
            row.median_j2 = detail::median(j2);
            row.mean_q2 = detail::mean(q2);
            row.median_ub_e1 = detail::median(ub_e1);
            row.median_ub_2 = detail::median(ub_2);
            row.median_ub_opt = detail::median(ub_opt);
            row.mean_cell_avg_capacity = detail::mean(cap);
            row.mean_cell_avg_effective = detail::mean(eff);
            row.mean_cell_avg_wasted = detail::mean(wasted);
            result.aggregate.push_back(row);
        }
    }

    // Reported curves are normalized so the SDC curve's maximum maps to 1;
    // without an SDC run the first criterion's maximum is used instead.
    {
        Criterion ref = spec.criteria.front();
        for (Criterion c : spec.criteria)
            if (c == Criterion::SDC) ref = Criterion::SDC;
        double denom = 0.0;
        for (const AggregateRow& row : result.aggregate)
            if (row.criterion == ref) denom = std::max(denom, row.mean_j2);
        for (AggregateRow& row : result.aggregate)
            row.norm_mean_j2 = denom > 0.0 ? row.mean_j2 / denom : 0.0;
    }

    write_sweep_outputs(spec, result);
    return result;
}

}  // namespace das
