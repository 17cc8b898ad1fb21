#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include <Eigen/SparseCore>

#include "gridsynth/grid.hpp"

namespace gridsynth {

using Complex = std::complex<double>;
using SparseComplex = Eigen::SparseMatrix<Complex, Eigen::ColMajor, int>;

// Two-port admittances of one branch (Pi model, p.u.).
struct BranchAdmittance {
    std::size_t from = 0;  // bus positions
    std::size_t to = 0;
    Complex yff;
    Complex yft;
    Complex ytf;
    Complex ytt;
};

inline BranchAdmittance branch_admittance(const Branch& br, const BusIndex& index) {
    const Complex ys = 1.0 / Complex(br.r, br.x);
    const Complex half_charge(0.0, br.b_charge / 2.0);
    const Complex tap = std::polar(br.ratio(), br.shift);
    BranchAdmittance a;
    a.from = index[br.from_bus];
    a.to = index[br.to_bus];
    a.ytt = ys + half_charge;
    a.yff = a.ytt / std::norm(tap);
    a.yft = -ys / std::conj(tap);
    a.ytf = -ys / tap;
    return a;
}

struct AdmittanceMatrix {
    SparseComplex y;
    std::vector<BranchAdmittance> branches;  // one per grid branch; zero if out of service

    std::size_t dimension() const { return static_cast<std::size_t>(y.rows()); }
};

inline AdmittanceMatrix build_admittance(const Grid& grid, const BusIndex& index) {
    const auto n = static_cast<int>(grid.buses.size());
    std::vector<Eigen::Triplet<Complex>> triplets;
    triplets.reserve(4 * grid.branches.size() + grid.buses.size());
    AdmittanceMatrix out;
    out.branches.reserve(grid.branches.size());
    for (const auto& br : grid.branches) {
        if (!br.in_service()) {
            BranchAdmittance zero;
            zero.from = index[br.from_bus];
            zero.to = index[br.to_bus];
            out.branches.push_back(zero);
            continue;
        }
        const auto a = branch_admittance(br, index);
        const auto f = static_cast<int>(a.from);
        const auto t = static_cast<int>(a.to);
        triplets.emplace_back(f, f, a.yff);
        triplets.emplace_back(f, t, a.yft);
        triplets.emplace_back(t, f, a.ytf);
        triplets.emplace_back(t, t, a.ytt);
        out.branches.push_back(a);
    }
    for (int i = 0; i < n; ++i) {
        const auto& bus = grid.buses[static_cast<std::size_t>(i)];
        // Explicit diagonal keeps the pattern square even for isolated buses.
        triplets.emplace_back(i, i, Complex(bus.shunt_g, bus.shunt_b));
    }
    out.y.resize(n, n);
    out.y.setFromTriplets(triplets.begin(), triplets.end());
    out.y.makeCompressed();
    return out;
}

inline AdmittanceMatrix build_admittance(const Grid& grid) {
    return build_admittance(grid, BusIndex(grid));
}

}  // namespace gridsynth
