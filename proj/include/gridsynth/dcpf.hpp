#pragma once

#include <chrono>
#include <cstddef>
#include <vector>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include "gridsynth/error.hpp"
#include "gridsynth/grid.hpp"
#include "gridsynth/topology.hpp"

namespace gridsynth {

// Linearized network: P = B * theta + p_bus_shift, flow = b * (th_f - th_t) + p_branch_shift,
// everything in p.u.
struct DcModel {
    Eigen::SparseMatrix<double> b_bus;
    std::vector<double> susceptance;     // per branch, 1 / (x * tap); 0 if out of service
    std::vector<double> p_branch_shift;  // per branch
    std::vector<double> p_bus_shift;     // per bus
    std::vector<std::size_t> from;
    std::vector<std::size_t> to;
    std::size_t ref = 0;
};

inline DcModel build_dc_model(const Grid& grid, const BusIndex& index) {
    const std::size_t n = grid.buses.size();
    DcModel m;
    m.ref = reference_position(grid, index);
    m.susceptance.assign(grid.branches.size(), 0.0);
    m.p_branch_shift.assign(grid.branches.size(), 0.0);
    m.p_bus_shift.assign(n, 0.0);
    std::vector<Eigen::Triplet<double>> triplets;
    for (std::size_t e = 0; e < grid.branches.size(); ++e) {
        const auto& br = grid.branches[e];
        const std::size_t f = index[br.from_bus];
        const std::size_t t = index[br.to_bus];
        m.from.push_back(f);
        m.to.push_back(t);
        if (!br.in_service()) {
            continue;
        }
        const double b = 1.0 / (br.x * br.ratio());
        m.susceptance[e] = b;
        m.p_branch_shift[e] = -b * br.shift;
        m.p_bus_shift[f] += m.p_branch_shift[e];
        m.p_bus_shift[t] -= m.p_branch_shift[e];
        const auto fi = static_cast<int>(f);
        const auto ti = static_cast<int>(t);
        triplets.emplace_back(fi, fi, b);
        triplets.emplace_back(ti, ti, b);
        triplets.emplace_back(fi, ti, -b);
        triplets.emplace_back(ti, fi, -b);
    }
    m.b_bus.resize(static_cast<int>(n), static_cast<int>(n));
    m.b_bus.setFromTriplets(triplets.begin(), triplets.end());
    return m;
}

struct DcPfSolution {
    std::vector<double> va;          // rad, per bus
    std::vector<double> flows;       // MW, per branch (from -> to)
    double reference_injection = 0;  // MW absorbed at the reference bus
    double runtime = 0.0;            // seconds
};

// DC power flow for given net bus injections (MW, generation minus load).
// The injection at the reference bus is ignored and recomputed.
inline DcPfSolution solve_dc_pf(const Grid& grid, const std::vector<double>& injections_mw) {
    const auto started = std::chrono::steady_clock::now();
    const BusIndex index(grid);
    const std::size_t n = grid.buses.size();
    if (injections_mw.size() != n) {
        throw Error("solve_dc_pf: injection vector has wrong length");
    }
    const DcModel m = build_dc_model(grid, index);

    const NetworkGraph graph(grid);
    const auto seen = graph.reachable({});
    for (std::size_t i = 0; i < n; ++i) {
        if (!seen[i] && grid.buses[i].role != BusRole::Isolated) {
            throw SingularSystem("DC power flow: bus " + std::to_string(grid.buses[i].id) +
                                 " is not connected to the reference bus");
        }
    }

    // Reduced system over connected non-reference buses.
    std::vector<int> pos(n, -1);
    int dim = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (i != m.ref && seen[i]) {
            pos[i] = dim++;
        }
    }
    std::vector<Eigen::Triplet<double>> triplets;
    for (int k = 0; k < m.b_bus.outerSize(); ++k) {
        for (Eigen::SparseMatrix<double>::InnerIterator it(m.b_bus, k); it; ++it) {
            const int r = pos[static_cast<std::size_t>(it.row())];
            const int c = pos[static_cast<std::size_t>(it.col())];
            if (r >= 0 && c >= 0) {
                triplets.emplace_back(r, c, it.value());
            }
        }
    }
    Eigen::SparseMatrix<double> reduced(dim, dim);
    reduced.setFromTriplets(triplets.begin(), triplets.end());
    Eigen::VectorXd rhs(dim);
    for (std::size_t i = 0; i < n; ++i) {
        if (pos[i] >= 0) {
            rhs[pos[i]] = injections_mw[i] / grid.base_mva - m.p_bus_shift[i];
        }
    }

    DcPfSolution sol;
    sol.va.assign(n, 0.0);
    if (dim > 0) {
        Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(reduced);
        if (ldlt.info() != Eigen::Success) {
            throw SingularSystem("DC power flow: singular susceptance matrix");
        }
        const Eigen::VectorXd theta = ldlt.solve(rhs);
        if (ldlt.info() != Eigen::Success || !theta.allFinite()) {
            throw SingularSystem("DC power flow: singular susceptance matrix");
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (pos[i] >= 0) {
                sol.va[i] = theta[pos[i]];
            }
        }
    }
    sol.flows.assign(grid.branches.size(), 0.0);
    double ref_injection = m.p_bus_shift[m.ref];
    for (std::size_t e = 0; e < grid.branches.size(); ++e) {
        if (m.susceptance[e] == 0.0) {
            continue;
        }
        const double flow = m.susceptance[e] * (sol.va[m.from[e]] - sol.va[m.to[e]]) +
                            m.p_branch_shift[e];
        sol.flows[e] = flow * grid.base_mva;
        // p_bus_shift already carries the shift part; add only the angle part.
        const double angle_part = m.susceptance[e] * (sol.va[m.from[e]] - sol.va[m.to[e]]);
        if (m.from[e] == m.ref) ref_injection += angle_part;
        if (m.to[e] == m.ref) ref_injection -= angle_part;
    }
    sol.reference_injection = ref_injection * grid.base_mva;
    sol.runtime = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return sol;
}

}  // namespace gridsynth
