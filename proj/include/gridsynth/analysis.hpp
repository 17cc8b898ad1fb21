#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <utility>
#include <vector>

#include "gridsynth/acpf.hpp"
#include "gridsynth/error.hpp"
#include "gridsynth/flows.hpp"
#include "gridsynth/grid.hpp"

namespace gridsynth {

struct ViolationReport {
    std::vector<int> branch_overloads;  // branch ids
    std::vector<int> vm_violations;     // bus ids
    std::vector<int> angle_violations;  // branch ids
    std::vector<int> qg_violations;     // generator ids
    bool slack_pg_violation = false;
    double tolerance = 1e-5;

    bool empty() const {
        return branch_overloads.empty() && vm_violations.empty() && angle_violations.empty() &&
               qg_violations.empty() && !slack_pg_violation;
    }
    std::size_t count() const {
        return branch_overloads.size() + vm_violations.size() + angle_violations.size() +
               qg_violations.size() + (slack_pg_violation ? 1 : 0);
    }
    bool operator==(const ViolationReport& o) const {
        return branch_overloads == o.branch_overloads && vm_violations == o.vm_violations &&
               angle_violations == o.angle_violations && qg_violations == o.qg_violations &&
               slack_pg_violation == o.slack_pg_violation;
    }
};

// Limit checks on a solved state. Exceedances are measured in p.u. (powers
// divided by base_mva, angles in rad) and count only when larger than `tol`.
inline ViolationReport detect_violations(const Grid& grid, const PfSolution& s, double tol = 1e-5) {
    ViolationReport rep;
    rep.tolerance = tol;
    const BusIndex index(grid);
    const double base = grid.base_mva;
    for (std::size_t e = 0; e < grid.branches.size(); ++e) {
        const auto& br = grid.branches[e];
        if (!br.in_service()) continue;
        if (br.has_rate()) {
            const auto& f = s.branch_flows[e];
            const double smax = std::max(std::abs(f.s_from()), std::abs(f.s_to()));
            if ((smax - br.rate_a) / base > tol) rep.branch_overloads.push_back(br.id);
        }
        if (br.has_angle_limits()) {
            const double d = s.va[index[br.from_bus]] - s.va[index[br.to_bus]];
            if (d - br.ang_max > tol || br.ang_min - d > tol) rep.angle_violations.push_back(br.id);
        }
    }
    for (std::size_t i = 0; i < grid.buses.size(); ++i) {
        const auto& bus = grid.buses[i];
        if (bus.role == BusRole::Isolated) continue;
        if (s.vm[i] - bus.vm_max > tol || bus.vm_min - s.vm[i] > tol) rep.vm_violations.push_back(bus.id);
    }
    const std::size_t ref = reference_position(grid, index);
    for (std::size_t g = 0; g < grid.generators.size(); ++g) {
        const auto& gen = grid.generators[g];
        if (!gen.in_service()) continue;
        if ((s.qg[g] - gen.q_max) / base > tol || (gen.q_min - s.qg[g]) / base > tol) {
            rep.qg_violations.push_back(gen.id);
        }
        if (index[gen.bus] == ref &&
            ((s.pg[g] - gen.p_max) / base > tol || (gen.p_min - s.pg[g]) / base > tol)) {
            rep.slack_pg_violation = true;
        }
    }
    return rep;
}

// ---------------------------------------------------------------- entropy

struct Domain {
    double lo = 0.0;
    double hi = 0.0;
};

inline constexpr Domain kAngleDomain{-std::numbers::pi, std::numbers::pi};

inline double wrap_angle(double a) {
    a = std::remainder(a, 2.0 * std::numbers::pi);  // [-pi, pi]
    return a <= -std::numbers::pi ? a + 2.0 * std::numbers::pi : a;
}

// Bin of x in a half-open-left (lo, hi] domain when `left_open`, else in
// [lo, hi]. Values outside the domain land in the edge bins.
inline std::size_t bin_of(double x, const Domain& d, std::size_t bins, bool left_open) {
    const double w = d.hi - d.lo;
    double pos = (x - d.lo) / w * static_cast<double>(bins);
    long long b = left_open ? static_cast<long long>(std::ceil(pos)) - 1
                            : static_cast<long long>(std::floor(pos));
    return static_cast<std::size_t>(std::clamp<long long>(b, 0, static_cast<long long>(bins) - 1));
}

// Shannon entropy (bits) of the histogram of `xs` over `d`.
inline double histogram_entropy(const std::vector<double>& xs, const Domain& d, std::size_t bins,
                                bool left_open = false) {
    if (xs.empty() || !(d.hi > d.lo)) {
        return 0.0;
    }
    std::vector<std::size_t> counts(bins, 0);
    for (double x : xs) ++counts[bin_of(x, d, bins, left_open)];
    const double n = static_cast<double>(xs.size());
    double h = 0.0;
    for (std::size_t c : counts) {
        if (c == 0) continue;
        const double p = static_cast<double>(c) / n;
        h -= p * std::log2(p);
    }
    return h;
}

struct FeatureEntropy {
    std::vector<double> per_bus;  // bits
    std::vector<Domain> domains;
    std::vector<std::size_t> samples;
    double mean = 0.0;        // bits
    double normalized = 0.0;  // mean / log2(bins)
    std::size_t bins = 100;
};

// `columns[b]` holds every observed value of the feature at bus b. Domains
// default to the per-column empirical range; angle features use (-pi, pi].
inline FeatureEntropy entropy_of_columns(const std::vector<std::vector<double>>& columns,
                                         std::size_t bins = 100, bool angle = false,
                                         const std::vector<Domain>* external = nullptr) {
    if (bins < 2) {
        throw ConfigError("entropy needs at least 2 bins");
    }
    if (columns.empty()) {
        throw DatasetCorrupt("entropy of an empty feature");
    }
    if (external != nullptr && external->size() != columns.size()) {
        throw ConfigError("external entropy domains do not match the bus count");
    }
    FeatureEntropy out;
    out.bins = bins;
    for (std::size_t b = 0; b < columns.size(); ++b) {
        std::vector<double> xs = columns[b];
        Domain d;
        if (angle) {
            for (double& x : xs) x = wrap_angle(x);
            d = kAngleDomain;
        } else if (!xs.empty()) {
            const auto [lo, hi] = std::minmax_element(xs.begin(), xs.end());
            d = {*lo, *hi};
        }
        if (external != nullptr) d = (*external)[b];
        out.domains.push_back(d);
        out.samples.push_back(xs.size());
        out.per_bus.push_back(histogram_entropy(xs, d, bins, angle));
    }
    double sum = 0.0;
    for (double h : out.per_bus) sum += h;
    out.mean = sum / static_cast<double>(out.per_bus.size());
    out.normalized = out.mean / std::log2(static_cast<double>(bins));
    return out;
}

}  // namespace gridsynth
