#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "gridsynth/admittance.hpp"
#include "gridsynth/grid.hpp"
#include "gridsynth/power_equations.hpp"

namespace gridsynth {

// Power entering the branch at each end, MW / MVAr.
struct BranchFlow {
    double p_from = 0.0;
    double q_from = 0.0;
    double p_to = 0.0;
    double q_to = 0.0;

    double s_from() const { return std::hypot(p_from, q_from); }
    double s_to() const { return std::hypot(p_to, q_to); }
    bool operator==(const BranchFlow&) const = default;
};

// Branch flows from a voltage solution; out-of-service branches carry zero.
inline std::vector<BranchFlow> compute_branch_flows(const Grid& grid, const AdmittanceMatrix& adm,
                                                    const std::vector<double>& vm,
                                                    const std::vector<double>& va) {
    std::vector<BranchFlow> flows(grid.branches.size());
    for (std::size_t e = 0; e < grid.branches.size(); ++e) {
        if (!grid.branches[e].in_service()) {
            continue;
        }
        const auto& a = adm.branches[e];
        const Complex sf = from_end(a, vm, va).power() * grid.base_mva;
        const Complex st = to_end(a, vm, va).power() * grid.base_mva;
        flows[e] = BranchFlow{sf.real(), sf.imag(), st.real(), st.imag()};
    }
    return flows;
}

// Apparent-power loading of the more heavily loaded end relative to rate_a.
// Branches without a rating report zero.
inline double branch_loading(const BranchFlow& flow, double rate_a) {
    if (!(rate_a > 0.0)) {
        return 0.0;
    }
    return std::max(flow.s_from(), flow.s_to()) / rate_a;
}

inline std::vector<double> branch_loading(std::span<const BranchFlow> flows,
                                          std::span<const double> rate_a) {
    std::vector<double> out(flows.size());
    for (std::size_t e = 0; e < flows.size(); ++e) {
        out[e] = branch_loading(flows[e], rate_a[e]);
    }
    return out;
}

inline std::vector<double> branch_loading(const Grid& grid, std::span<const BranchFlow> flows) {
    std::vector<double> rates(grid.branches.size());
    for (std::size_t e = 0; e < rates.size(); ++e) {
        rates[e] = grid.branches[e].rate_a;
    }
    return branch_loading(flows, rates);
}

}  // namespace gridsynth
