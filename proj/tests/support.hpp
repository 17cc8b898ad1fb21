#pragma once

// Shared fixtures for the test binaries.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <filesystem>
#include <string>
#include <vector>

#include "gridsynth/acpf.hpp"
#include "gridsynth/config.hpp"
#include "gridsynth/grid.hpp"
#include "gridsynth/matpower.hpp"
#include "gridsynth/rng.hpp"

namespace testing {

inline std::string data_path(const std::string& name) { return std::string(GRIDSYNTH_DATA_DIR) + "/" + name; }

inline const std::vector<std::string>& bundled_cases() {
    static const std::vector<std::string> cases{"case5.m", "case9.m", "case14.m", "case24_ieee_rts.m", "case30.m"};
    return cases;
}

inline gridsynth::Grid load_case(const std::string& name) { return gridsynth::read_matpower_file(data_path(name)); }

// Fresh, empty scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("gridsynth_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

// Small generation config over a bundled case, writing into a fresh scratch
// directory named `tag`.
inline gridsynth::GenerationConfig small_config(const std::string& grid, gridsynth::Mode mode, const std::string& tag) {
    gridsynth::GenerationConfig c;
    c.grid_path = data_path(grid);
    c.profile_path = data_path("load_profile.txt");
    c.output_dir = scratch_dir(tag).string();
    c.mode = mode;
    c.n_load_scenarios = 4;
    c.topologies_per_scenario = 3;
    c.k = 1;
    c.sigma_load = 0.1;
    c.sigma_admittance = 0.1;
    c.seed = 1;
    c.workers = 1;
    return c;
}

struct RandomGridOptions {
    std::size_t buses = 10;
    std::size_t extra_branches = 5;
    bool shunts = true;
    bool charging = true;
    bool taps = true;
    bool angle_limits = true;
};

// Connected random grid in the canonical form produced by the parser: one
// load per loaded bus, element ids numbered from 1 in row order. Bus ids are
// deliberately sparse.
inline gridsynth::Grid random_grid(gridsynth::Rng& rng, const RandomGridOptions& o = {}) {
    using namespace gridsynth;
    Grid g;
    g.base_mva = rng.below(2) ? 100.0 : 10.0 * static_cast<double>(1 + rng.below(20));
    const std::size_t n = o.buses;
    for (std::size_t i = 0; i < n; ++i) {
        Bus b;
        b.id = static_cast<int>(3 * i + 1 + rng.below(3));
        b.role = i == 0 ? BusRole::Slack : (rng.below(3) == 0 ? BusRole::PV : BusRole::PQ);
        if (o.shunts && rng.below(4) == 0) {
            b.shunt_g = rng.uniform(0.0, 0.05);
            b.shunt_b = rng.uniform(-0.2, 0.2);
        }
        b.vm_min = rng.uniform(0.9, 0.95);
        b.vm_max = rng.uniform(1.05, 1.1);
        b.base_kv = rng.below(2) ? 138.0 : 230.0;
        g.buses.push_back(b);
    }
    int branch_id = 1;
    auto add_branch = [&](std::size_t f, std::size_t t) {
        Branch br;
        br.id = branch_id++;
        br.from_bus = g.buses[f].id;
        br.to_bus = g.buses[t].id;
        br.r = rng.uniform(0.0, 0.05);
        br.x = rng.uniform(0.02, 0.3);
        br.b_charge = o.charging ? rng.uniform(0.0, 0.1) : 0.0;
        if (o.taps && rng.below(5) == 0) {
            br.tap = rng.uniform(0.9, 1.1);
            br.shift = rng.below(2) ? 0.0 : rng.uniform(-0.1, 0.1);
        }
        br.rate_a = rng.below(3) == 0 ? 0.0 : rng.uniform(50.0, 300.0);
        if (o.angle_limits && rng.below(3) == 0) {
            br.ang_min = -rng.uniform(0.3, 1.0);
            br.ang_max = rng.uniform(0.3, 1.0);
        }
        g.branches.push_back(br);
    };
    for (std::size_t i = 1; i < n; ++i) add_branch(static_cast<std::size_t>(rng.below(i)), i);
    for (std::size_t e = 0; e < o.extra_branches; ++e) {
        const auto f = static_cast<std::size_t>(rng.below(n));
        auto t = static_cast<std::size_t>(rng.below(n - 1));
        if (t >= f) ++t;
        add_branch(f, t);
    }
    int gen_id = 1;
    for (std::size_t i = 0; i < n; ++i) {
        if (g.buses[i].role == BusRole::PQ) continue;
        Generator gen;
        gen.id = gen_id++;
        gen.bus = g.buses[i].id;
        gen.p_min = rng.uniform(0.0, 20.0);
        gen.p_max = gen.p_min + rng.uniform(50.0, 300.0);
        gen.q_min = -rng.uniform(20.0, 150.0);
        gen.q_max = rng.uniform(20.0, 150.0);
        gen.pg = rng.uniform(gen.p_min, gen.p_max);
        gen.vg = rng.uniform(0.98, 1.05);
        gen.cost = {rng.uniform(0.0, 0.05), rng.uniform(5.0, 40.0), rng.uniform(0.0, 100.0)};
        g.generators.push_back(gen);
    }
    int load_id = 1;
    for (std::size_t i = 0; i < n; ++i) {
        if (rng.below(3) == 0) continue;
        g.loads.push_back({load_id++, g.buses[i].id, rng.uniform(5.0, 80.0), rng.uniform(-10.0, 30.0)});
    }
    return g;
}

// Brute-force AC-OPF for grids with one reference generator and one other
// generator: scan (pg of the second unit, both voltage setpoints), solve a
// power flow at each point and keep the cheapest limit-respecting one. A
// coarse pass is refined twice around the incumbent.
struct MeshOptimum {
    double objective = std::numeric_limits<double>::infinity();
    double pg2 = 0.0;
    double v1 = 0.0;
    double v2 = 0.0;
    std::size_t power_flows = 0;
};

inline MeshOptimum mesh_opf_oracle(const gridsynth::Grid& grid) {
    using namespace gridsynth;
    if (grid.generators.size() != 2) throw std::invalid_argument("mesh oracle needs two generators");
    const BusIndex index(grid);
    const auto& ga = grid.generators[0];
    const auto& gb = grid.generators[1];
    const auto& ba = grid.buses[index[ga.bus]];
    const auto& bb = grid.buses[index[gb.bus]];
    MeshOptimum best;
    auto evaluate = [&](double pg2, double v1, double v2) {
        Setpoints sp{{ga.pg, pg2}, {v1, v2}};
        const PfSolution s = solve_ac_pf(grid, sp, PfOptions{1e-10, 30});
        ++best.power_flows;
        if (!s.converged) return;
        // every operating limit, checked directly
        for (std::size_t i = 0; i < grid.buses.size(); ++i) {
            if (s.vm[i] > grid.buses[i].vm_max + 1e-9 || s.vm[i] < grid.buses[i].vm_min - 1e-9) return;
        }
        for (std::size_t k = 0; k < 2; ++k) {
            const auto& g = grid.generators[k];
            if (s.pg[k] > g.p_max + 1e-9 || s.pg[k] < g.p_min - 1e-9) return;
            if (s.qg[k] > g.q_max + 1e-9 || s.qg[k] < g.q_min - 1e-9) return;
        }
        for (std::size_t e = 0; e < grid.branches.size(); ++e) {
            const auto& br = grid.branches[e];
            if (br.has_rate() && std::max(s.branch_flows[e].s_from(), s.branch_flows[e].s_to()) > br.rate_a + 1e-9) return;
        }
        const double cost = ga.cost(s.pg[0]) + gb.cost(s.pg[1]);
        if (cost < best.objective) best = {cost, pg2, v1, v2, best.power_flows};
    };
    const double dp0 = (gb.p_max - gb.p_min) / 100.0;
    const double dv0 = (std::max(ba.vm_max, bb.vm_max) - std::min(ba.vm_min, bb.vm_min)) / 12.0;
    for (int i = 0; i <= 100; ++i) {
        for (int a = 0; a <= 12; ++a) {
            for (int b = 0; b <= 12; ++b) {
                evaluate(gb.p_min + i * dp0, ba.vm_min + a * dv0, bb.vm_min + b * dv0);
            }
        }
    }
    double dp = dp0;
    double dv = dv0;
    for (int pass = 0; pass < 2 && std::isfinite(best.objective); ++pass) {
        const MeshOptimum c = best;
        dp /= 10.0;
        dv /= 10.0;
        for (int i = -10; i <= 10; ++i) {
            for (int a = -10; a <= 10; ++a) {
                for (int b = -10; b <= 10; ++b) {
                    evaluate(std::clamp(c.pg2 + i * dp, gb.p_min, gb.p_max), std::clamp(c.v1 + a * dv, ba.vm_min, ba.vm_max),
                             std::clamp(c.v2 + b * dv, bb.vm_min, bb.vm_max));
                }
            }
        }
    }
    return best;
}

}  // namespace testing
