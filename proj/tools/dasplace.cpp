// dasplace: RAU placement experiments from the command line.
//
//   dasplace example1 [flags]      linear-cell sweep
//   dasplace example2 [flags]      2-D PPP sweep, diagonal demand ramp
//   dasplace example3 [flags]      2-D PPP sweep, radial demand, equal power
//   dasplace run <spec.json> [flags]
//
// Common flags: --k-sweep 1..8|2,4,6  --criterion SDC|IOCC|both  --seeds N
//               --mc-draws N  --mc-locations N  --out DIR
//               --placement-weights demand|theoretical
// Exit codes: 0 ok, 2 spec validation error, 3 runtime failure.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "das/das.hpp"

namespace {

std::vector<int> parse_k_sweep(const std::string& text) {
    std::vector<int> out;
    const auto dots = text.find("..");
    if (dots != std::string::npos) {
        const int lo = std::stoi(text.substr(0, dots));
        const int hi = std::stoi(text.substr(dots + 2));
        if (lo < 1 || hi < lo) throw das::SpecError("--k-sweep: bad range '" + text + "'");
        for (int k = lo; k <= hi; ++k) out.push_back(k);
        return out;
    }
    std::size_t pos = 0;
    while (pos < text.size()) {
        const auto comma = text.find(',', pos);
        const std::string tok = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        out.push_back(std::stoi(tok));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    if (out.empty()) throw das::SpecError("--k-sweep: empty list");
    for (int k : out)
        if (k < 1) throw das::SpecError("--k-sweep: entries must be >= 1");
    return out;
}

struct CommonFlags {
    std::string k_sweep;
    std::string criterion;
    int seeds = 0;
    long long mc_draws = 0;
    long long mc_locations = -1;
    std::string out_dir;
    std::string weights;

    void attach(CLI::App* cmd) {
        cmd->add_option("--k-sweep", k_sweep, "RAU counts, e.g. 1..8 or 2,4,6");
        cmd->add_option("--criterion", criterion, "SDC, IOCC or both");
        cmd->add_option("--seeds", seeds, "number of clustering seeds");
        cmd->add_option("--mc-draws", mc_draws, "Monte Carlo draws per location");
        cmd->add_option("--mc-locations", mc_locations, "cap on MC-evaluated locations (0 = all)");
        cmd->add_option("--out", out_dir, "output directory");
        cmd->add_option("--placement-weights", weights, "demand or theoretical");
    }

    void apply(das::ExperimentSpec& spec) const {
        if (!k_sweep.empty()) spec.k_sweep = parse_k_sweep(k_sweep);
        if (!criterion.empty()) {
            if (criterion == "SDC") spec.criteria = {das::Criterion::SDC};
            else if (criterion == "IOCC") spec.criteria = {das::Criterion::IOCC};
            else if (criterion == "both") spec.criteria = {das::Criterion::SDC, das::Criterion::IOCC};
            else throw das::SpecError("--criterion: expected SDC, IOCC or both");
        }
        if (seeds > 0) spec.num_cluster_seeds = seeds;
        if (mc_draws > 0) spec.mc.num_draws = static_cast<std::size_t>(mc_draws);
        if (mc_locations >= 0) spec.mc_max_locations = static_cast<std::size_t>(mc_locations);
        if (!out_dir.empty()) spec.out_dir = out_dir;
        if (!weights.empty()) {
            if (weights == "demand") spec.placement_scaling = das::WeightScaling::demand;
            else if (weights == "theoretical") spec.placement_scaling = das::WeightScaling::theoretical;
            else throw das::SpecError("--placement-weights: expected demand or theoretical");
        }
    }
};

void print_summary(const das::SweepResult& result, const das::ExperimentSpec& spec) {
    std::printf("%-5s %3s %12s %12s %12s %10s %10s\n", "crit", "K", "mean_j2", "med_ub2", "med_ubopt",
                "eff", "wasted");
    for (const auto& row : result.aggregate) {
        std::printf("%-5s %3d %12.5g %12.5g %12.5g %10.4f %10.4f\n", das::to_string(row.criterion),
                    row.num_raus, row.mean_j2, row.median_ub_2, row.median_ub_opt,
                    row.mean_cell_avg_effective, row.mean_cell_avg_wasted);
    }
    if (!spec.out_dir.empty()) std::printf("outputs written to %s\n", spec.out_dir.c_str());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"distributed antenna placement experiments"};
    app.require_subcommand(1);

    CommonFlags flags;
    double ex3_alpha = 3.0;
    std::string spec_path;

    CLI::App* ex1 = app.add_subcommand("example1", "1-D linear cell, demand ramp, optimized power");
    CLI::App* ex2 = app.add_subcommand("example2", "2-D PPP cell, diagonal demand ramp, optimized power");
    CLI::App* ex3 = app.add_subcommand("example3", "2-D PPP cell, radial demand, equal power split");
    CLI::App* run = app.add_subcommand("run", "run a JSON experiment spec");
    for (CLI::App* cmd : {ex1, ex2, ex3, run}) flags.attach(cmd);
    ex3->add_option("--alpha", ex3_alpha, "path-loss exponent (3 or 4 in the shipped setup)");
    run->add_option("spec", spec_path, "path to spec JSON")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    das::ExperimentSpec spec;
    try {
        if (ex1->parsed()) spec = das::make_example1();
        else if (ex2->parsed()) spec = das::make_example2();
        else if (ex3->parsed()) spec = das::make_example3(ex3_alpha);
        else spec = das::load_spec(spec_path);
        flags.apply(spec);
        spec.validate();
    } catch (const das::SpecError& e) {
        std::cerr << "spec error: " << e.what() << '\n';
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "spec error: " << e.what() << '\n';
        return 2;
    }

    try {
        const das::SweepResult result = das::run_sweep(spec);
        print_summary(result, spec);
    } catch (const std::exception& e) {
        std::cerr << "runtime failure: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
