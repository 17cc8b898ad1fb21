#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include "gridsynth/admittance.hpp"
#include "gridsynth/flows.hpp"
#include "gridsynth/grid.hpp"
#include "gridsynth/power_equations.hpp"

namespace gridsynth {

struct PfOptions {
    double tol = 1e-8;  // p.u. mismatch
    int max_iter = 30;
};

struct PfSolution {
    std::vector<double> vm;  // p.u., per bus
    std::vector<double> va;  // rad, per bus
    std::vector<double> pg;  // MW, per generator (0 when out of service)
    std::vector<double> qg;  // MVAr, per generator
    std::vector<BranchFlow> branch_flows;
    bool converged = false;
    int iterations = 0;
    double runtime = 0.0;  // seconds
    double max_mismatch = std::numeric_limits<double>::infinity();  // p.u.
    std::string reason;    // empty when converged
};

// Fixed generator quantities for a power flow: active power (MW) for every
// generator except the balancing one, voltage magnitude (p.u.) at generator
// buses. Indexed by generator position.
struct Setpoints {
    std::vector<double> pg;
    std::vector<double> vm;

    static Setpoints from_grid(const Grid& grid) {
        Setpoints s;
        for (const auto& g : grid.generators) {
            s.pg.push_back(g.pg);
            s.vm.push_back(g.vg);
        }
        return s;
    }
};

namespace acpf_detail {

enum class Kind { Ref, PV, PQ, Off };

struct BusClassification {
    std::vector<Kind> kind;
    std::size_t ref = 0;
    std::vector<double> v_set;  // p.u., meaningful for Ref/PV
};

inline BusClassification classify(const Grid& grid, const BusIndex& index, const Setpoints& sp) {
    BusClassification c;
    const std::size_t n = grid.buses.size();
    c.ref = reference_position(grid, index);
    c.kind.assign(n, Kind::PQ);
    c.v_set.assign(n, 1.0);
    std::vector<char> has_setpoint(n, 0);
    for (std::size_t g = 0; g < grid.generators.size(); ++g) {
        const auto& gen = grid.generators[g];
        if (!gen.in_service()) {
            continue;
        }
        const std::size_t i = index[gen.bus];
        if (!has_setpoint[i]) {
            has_setpoint[i] = 1;
            c.v_set[i] = sp.vm[g];
            c.kind[i] = Kind::PV;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (grid.buses[i].role == BusRole::Isolated) {
            c.kind[i] = Kind::Off;
        }
    }
    c.kind[c.ref] = Kind::Ref;
    return c;
}

// Splits a bus total among its in-service generators: each starts at q_min
// and the remainder is shared in proportion to the reactive ranges, so every
// unit sits inside its limits whenever the total does. Equal split when a
// range is unbounded or all ranges are zero.
inline void split_reactive(const Grid& grid, const std::vector<std::size_t>& gens, double total,
                           std::vector<double>& qg) {
    if (gens.empty()) {
        return;
    }
    double range_sum = 0.0;
    double min_sum = 0.0;
    bool usable = true;
    for (std::size_t g : gens) {
        const auto& gen = grid.generators[g];
        const double range = gen.q_max - gen.q_min;
        usable = usable && std::isfinite(range);
        range_sum += range;
        min_sum += gen.q_min;
    }
    usable = usable && range_sum > 0.0;
    for (std::size_t g : gens) {
        const auto& gen = grid.generators[g];
        qg[g] = usable ? gen.q_min + (total - min_sum) * (gen.q_max - gen.q_min) / range_sum
                       : total / static_cast<double>(gens.size());
    }
}

}  // namespace acpf_detail

// Newton-Raphson power flow in polar coordinates. Generator limits are not
// enforced; violations show up in the returned injections.
inline PfSolution solve_ac_pf(const Grid& grid, const Setpoints& setpoints,
                              const PfOptions& options = {},
                              const PfSolution* warm_start = nullptr) {
    using namespace acpf_detail;
    const auto started = std::chrono::steady_clock::now();
    const BusIndex index(grid);
    const std::size_t n = grid.buses.size();
    const AdmittanceMatrix adm = build_admittance(grid, index);
    const BusClassification cls = classify(grid, index, setpoints);

    // Specified injections (p.u.), excluding the balancing generator.
    std::vector<double> pd;
    std::vector<double> qd;
    bus_demand(grid, index, pd, qd);
    std::vector<Complex> s_spec(n);
    for (std::size_t i = 0; i < n; ++i) {
        s_spec[i] = Complex(-pd[i], -qd[i]) / grid.base_mva;
    }
    std::vector<std::vector<std::size_t>> gens_at(n);
    std::optional<std::size_t> balancing;
    for (std::size_t g = 0; g < grid.generators.size(); ++g) {
        if (!grid.generators[g].in_service()) {
            continue;
        }
        const std::size_t i = index[grid.generators[g].bus];
        gens_at[i].push_back(g);
        if (i == cls.ref && !balancing) {
            balancing = g;
            continue;
        }
        s_spec[i] += setpoints.pg[g] / grid.base_mva;
    }

    // Unknown numbering: angles of PV+PQ buses, then magnitudes of PQ buses.
    std::vector<int> th_pos(n, -1);
    std::vector<int> v_pos(n, -1);
    int n_th = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (cls.kind[i] == Kind::PV || cls.kind[i] == Kind::PQ) {
            th_pos[i] = n_th++;
        }
    }
    int n_v = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (cls.kind[i] == Kind::PQ) {
            v_pos[i] = n_th + n_v++;
        }
    }
    const int dim = n_th + n_v;

    PfSolution sol;
    sol.vm.assign(n, 1.0);
    sol.va.assign(n, 0.0);
    if (warm_start != nullptr && warm_start->vm.size() == n && warm_start->va.size() == n) {
        sol.vm = warm_start->vm;
        sol.va = warm_start->va;
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (cls.kind[i] == Kind::Ref || cls.kind[i] == Kind::PV) {
            sol.vm[i] = cls.v_set[i];
        }
        if (cls.kind[i] == Kind::Off) {
            sol.vm[i] = 1.0;
            sol.va[i] = 0.0;
        }
    }

    Eigen::VectorXd mismatch(dim);
    auto evaluate = [&](std::vector<Complex>& v) {
        v = voltage_phasors(sol.vm, sol.va);
        const auto s = bus_injections(adm.y, v);
        double worst = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const Complex d = s[i] - s_spec[i];
            if (th_pos[i] >= 0) {
                mismatch[th_pos[i]] = d.real();
                worst = std::max(worst, std::abs(d.real()));
            }
            if (v_pos[i] >= 0) {
                mismatch[v_pos[i]] = d.imag();
                worst = std::max(worst, std::abs(d.imag()));
            }
        }
        return std::isfinite(worst) ? worst : std::numeric_limits<double>::infinity();
    };

    std::vector<Complex> v;
    sol.max_mismatch = evaluate(v);
    Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
    bool pattern_ready = false;
    std::vector<Eigen::Triplet<double>> triplets;
    Eigen::SparseMatrix<double> jac(dim, dim);

    while (sol.max_mismatch > options.tol && sol.iterations < options.max_iter) {
        triplets.clear();
        visit_injection_jacobian(adm.y, v, [&](std::size_t i, std::size_t k, Complex d_va,
                                               Complex d_vm) {
            if (th_pos[k] >= 0) {
                if (th_pos[i] >= 0) triplets.emplace_back(th_pos[i], th_pos[k], d_va.real());
                if (v_pos[i] >= 0) triplets.emplace_back(v_pos[i], th_pos[k], d_va.imag());
            }
            if (v_pos[k] >= 0) {
                if (th_pos[i] >= 0) triplets.emplace_back(th_pos[i], v_pos[k], d_vm.real());
                if (v_pos[i] >= 0) triplets.emplace_back(v_pos[i], v_pos[k], d_vm.imag());
            }
        });
        jac.setFromTriplets(triplets.begin(), triplets.end());
        jac.makeCompressed();
        if (!pattern_ready) {
            lu.analyzePattern(jac);
            pattern_ready = true;
        }
        lu.factorize(jac);
        if (lu.info() != Eigen::Success) {
            sol.reason = "singular_jacobian";
            break;
        }
        const Eigen::VectorXd dx = lu.solve(-mismatch);
        if (lu.info() != Eigen::Success || !dx.allFinite()) {
            sol.reason = "singular_jacobian";
            break;
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (th_pos[i] >= 0) sol.va[i] += dx[th_pos[i]];
            if (v_pos[i] >= 0) sol.vm[i] += dx[v_pos[i]];
        }
        ++sol.iterations;
        sol.max_mismatch = evaluate(v);
        if (!std::isfinite(sol.max_mismatch)) {
            sol.reason = "diverged";
            break;
        }
    }
    sol.converged = sol.max_mismatch <= options.tol;
    if (!sol.converged && sol.reason.empty()) {
        sol.reason = "iteration_limit";
    }

    // Recover generator injections from the final iterate.
    const auto s = bus_injections(adm.y, v);
    sol.pg.assign(grid.generators.size(), 0.0);
    sol.qg.assign(grid.generators.size(), 0.0);
    for (std::size_t g = 0; g < grid.generators.size(); ++g) {
        if (grid.generators[g].in_service()) {
            sol.pg[g] = setpoints.pg[g];
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (gens_at[i].empty()) {
            continue;
        }
        const double q_total = s[i].imag() * grid.base_mva + qd[i];
        split_reactive(grid, gens_at[i], q_total, sol.qg);
        if (i == cls.ref && balancing) {
            double others = 0.0;
            for (std::size_t g : gens_at[i]) {
                if (g != *balancing) others += sol.pg[g];
            }
            sol.pg[*balancing] = s[i].real() * grid.base_mva + pd[i] - others;
        }
    }
    sol.branch_flows = compute_branch_flows(grid, adm, sol.vm, sol.va);
    sol.runtime = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return sol;
}

inline PfSolution solve_ac_pf(const Grid& grid, const PfOptions& options = {}) {
    return solve_ac_pf(grid, Setpoints::from_grid(grid), options);
}

}  // namespace gridsynth
