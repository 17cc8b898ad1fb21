#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "gridsynth/acopf.hpp"
#include "gridsynth/error.hpp"
#include "gridsynth/grid.hpp"
#include "gridsynth/rng.hpp"
#include "gridsynth/text.hpp"
#include "gridsynth/topology.hpp"

namespace gridsynth {

// ---------------------------------------------------------------- loads

struct LoadProfile {
    std::string name;
    std::vector<double> values;
};

// One nonnegative number per line; blank lines and lines starting with '#'
// are skipped.
inline LoadProfile parse_load_profile(std::string_view text, std::string name = "profile") {
    LoadProfile profile{std::move(name), {}};
    std::size_t line_no = 0;
    for (auto line : split(text, '\n')) {
        ++line_no;
        line = trim(line);
        if (line.empty() || line.front() == '#') {
            continue;
        }
        const auto v = parse_double(line);
        if (!v || !std::isfinite(*v) || *v < 0.0) {
            throw ConfigError("load profile '" + profile.name + "' line " + std::to_string(line_no) +
                              ": expected a nonnegative number, got '" + std::string(line) + "'");
        }
        profile.values.push_back(*v);
    }
    if (profile.values.empty()) {
        throw ConfigError("load profile '" + profile.name + "' has no values");
    }
    if (!(*std::max_element(profile.values.begin(), profile.values.end()) > 0.0)) {
        throw ConfigError("load profile '" + profile.name + "' is all zero");
    }
    return profile;
}

inline LoadProfile read_load_profile(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoFailure("cannot read load profile " + path);
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_load_profile(buf.str(), path);
}

struct LoadRange {
    double l = 1.0;
    double u = 1.0;
    double r = 0.0;
};

inline LoadRange make_load_range(double u, double r) { return {(1.0 - r) * u, u, r}; }

struct LoadScenario {
    std::size_t scenario_index = 0;
    double ref = 1.0;
    std::vector<double> pd;  // MW, per load
    std::vector<double> qd;  // MVAr, per load
};

inline Grid scale_loads(const Grid& grid, double factor) {
    Grid out = grid;
    for (auto& load : out.loads) {
        load.pd *= factor;
        load.qd *= factor;
    }
    return out;
}

inline Grid apply_load_scenario(const Grid& grid, const LoadScenario& s) {
    Grid out = grid;
    for (std::size_t i = 0; i < out.loads.size(); ++i) {
        out.loads[i].pd = s.pd[i];
        out.loads[i].qd = s.qd[i];
    }
    return out;
}

// Ladder search 1, 1+step, 1+2*step, ... with a caller-supplied feasibility
// test. u is the last feasible rung.
inline LoadRange calibrate_load_range(const std::function<bool(double)>& feasible, double r,
                                      double step, int max_steps = 100) {
    if (!(r >= 0.0 && r < 1.0)) {
        throw ConfigError("r must lie in [0, 1)");
    }
    if (!(step > 0.0)) {
        throw ConfigError("calibration step must be positive");
    }
    if (!feasible(1.0)) {
        throw BaseCaseInfeasible("OPF does not converge on the nominal loads");
    }
    double u = 1.0;
    for (int k = 1; k <= max_steps; ++k) {
        const double m = 1.0 + k * step;
        if (!feasible(m)) {
            break;
        }
        u = m;
    }
    return make_load_range(u, r);
}

inline LoadRange calibrate_load_range(const Grid& grid, double r = 0.4, double step = 0.1,
                                      const OpfOptions& options = {}, int max_steps = 100) {
    return calibrate_load_range(
        [&](double m) { return solve_ac_opf(scale_loads(grid, m), options).feasible; }, r, step,
        max_steps);
}

// Min-max rescale of the profile onto [l, u], cycling past its end. A flat
// profile maps to u.
inline double profile_reference(const LoadProfile& profile, const LoadRange& range, std::size_t t) {
    const auto [lo, hi] = std::minmax_element(profile.values.begin(), profile.values.end());
    const double v = profile.values[t % profile.values.size()];
    if (!(*hi > *lo)) {
        return range.u;
    }
    if (v == *lo) {
        return range.l;
    }
    if (v == *hi) {
        return range.u;
    }
    const double ref = range.l + (range.u - range.l) * (v - *lo) / (*hi - *lo);
    return std::clamp(ref, range.l, range.u);
}

inline LoadScenario generate_load_scenario(const Grid& grid, double ref, std::size_t t, double sigma,
                                           Rng& rng) {
    LoadScenario s{t, ref, {}, {}};
    s.pd.reserve(grid.loads.size());
    s.qd.reserve(grid.loads.size());
    for (const auto& load : grid.loads) {
        const double ep = rng.uniform(1.0 - sigma, 1.0 + sigma);
        const double eq = rng.uniform(1.0 - sigma, 1.0 + sigma);
        s.pd.push_back(load.pd * ref * ep);
        s.qd.push_back(load.qd * ref * eq);
    }
    return s;
}

inline std::vector<LoadScenario> generate_load_scenarios(const Grid& grid, const LoadProfile& profile,
                                                         const LoadRange& range, std::size_t n,
                                                         double sigma, std::uint64_t seed) {
    std::vector<LoadScenario> out;
    out.reserve(n);
    for (std::size_t t = 0; t < n; ++t) {
        Rng rng = derive_scenario_rng(seed, t, 0, Stream::Load);
        out.push_back(generate_load_scenario(grid, profile_reference(profile, range, t), t, sigma, rng));
    }
    return out;
}

// ------------------------------------------------------------- topology

namespace perturb_detail {

struct Component {
    bool branch;
    int id;
};

// In-service branches in grid order, then in-service generators.
inline std::vector<Component> outage_candidates(const Grid& grid) {
    std::vector<Component> out;
    for (const auto& br : grid.branches) {
        if (br.in_service()) out.push_back({true, br.id});
    }
    for (const auto& g : grid.generators) {
        if (g.in_service()) out.push_back({false, g.id});
    }
    return out;
}

inline TopologyPerturbation make_perturbation(const std::vector<Component>& comps,
                                              const std::vector<std::size_t>& pick) {
    TopologyPerturbation p;
    for (std::size_t i : pick) {
        (comps[i].branch ? p.disabled_branches : p.disabled_generators).push_back(comps[i].id);
    }
    std::sort(p.disabled_branches.begin(), p.disabled_branches.end());
    std::sort(p.disabled_generators.begin(), p.disabled_generators.end());
    return p;
}

}  // namespace perturb_detail

// All admissible outage sets of size 0..k, by size and then lexicographically
// over (in-service branches, in-service generators) in grid order.
inline std::vector<TopologyPerturbation> enumerate_topologies(const Grid& grid, std::size_t k,
                                                              std::size_t cap = 1'000'000) {
    const auto comps = perturb_detail::outage_candidates(grid);
    const OutageChecker checker(grid);
    const std::size_t m = comps.size();
    std::vector<TopologyPerturbation> out;
    for (std::size_t s = 0; s <= std::min(k, m); ++s) {
        std::vector<std::size_t> pick(s);
        for (std::size_t i = 0; i < s; ++i) pick[i] = i;
        while (true) {
            auto p = perturb_detail::make_perturbation(comps, pick);
            if (checker.admissible(p)) {
                if (out.size() == cap) {
                    throw CombinatorialBlowup("more than " + std::to_string(cap) +
                                              " admissible topologies for k=" + std::to_string(k));
                }
                out.push_back(std::move(p));
            }
            // next combination
            std::size_t i = s;
            while (i > 0 && pick[i - 1] == m - s + i - 1) --i;
            if (i == 0) break;
            ++pick[i - 1];
            for (std::size_t j = i; j < s; ++j) pick[j] = pick[j - 1] + 1;
        }
    }
    return out;
}

// One draw: size uniform on {0..k}, then uniform subsets of that size until
// one is admissible.
class TopologySampler {
  public:
    TopologySampler(const Grid& grid, std::size_t k, std::size_t max_attempts = 1000)
        : comps_(perturb_detail::outage_candidates(grid)),
          checker_(grid),
          k_(std::min(k, comps_.size())),
          max_attempts_(max_attempts) {}

    TopologyPerturbation operator()(Rng& rng) const {
        const std::size_t s = static_cast<std::size_t>(rng.below(k_ + 1));
        std::vector<std::size_t> order(comps_.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        for (std::size_t attempt = 0; attempt < max_attempts_; ++attempt) {
            // partial Fisher-Yates: first s entries are a uniform s-subset
            for (std::size_t i = 0; i < s; ++i) {
                const std::size_t j = i + static_cast<std::size_t>(rng.below(order.size() - i));
                std::swap(order[i], order[j]);
            }
            std::vector<std::size_t> pick(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(s));
            auto p = perturb_detail::make_perturbation(comps_, pick);
            if (checker_.admissible(p)) {
                return p;
            }
        }
        throw RejectionExhausted("no admissible outage set of size " + std::to_string(s) + " after " +
                                 std::to_string(max_attempts_) + " attempts");
    }

  private:
    std::vector<perturb_detail::Component> comps_;
    OutageChecker checker_;
    std::size_t k_;
    std::size_t max_attempts_;
};

inline std::vector<TopologyPerturbation> sample_topologies(const Grid& grid, std::size_t k,
                                                           std::size_t n, Rng& rng,
                                                           std::size_t max_attempts = 1000) {
    const TopologySampler sampler(grid, k, max_attempts);
    std::vector<TopologyPerturbation> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(sampler(rng));
    return out;
}

// ------------------------------------------------------ admittance, cost

inline Grid perturb_admittance(const Grid& grid, double sigma, Rng& rng) {
    Grid out = grid;
    if (sigma == 0.0) {
        return out;
    }
    const double lo = std::max(0.0, 1.0 - sigma);
    const double hi = 1.0 + sigma;
    for (auto& br : out.branches) {
        if (!br.in_service()) continue;
        br.r *= rng.uniform(lo, hi);
        br.x *= rng.uniform(lo, hi);
    }
    return out;
}

enum class CostMode { None, Permute, Scale };

inline std::string_view to_string(CostMode m) {
    switch (m) {
        case CostMode::None: return "none";
        case CostMode::Permute: return "permute";
        case CostMode::Scale: return "scale";
    }
    return "?";
}

struct CostPerturbation {
    CostMode mode = CostMode::None;
    double lo = 1.0;
    double hi = 1.0;
};

inline Grid perturb_costs(const Grid& grid, const CostPerturbation& how, Rng& rng) {
    Grid out = grid;
    switch (how.mode) {
        case CostMode::None:
            break;
        case CostMode::Permute: {
            std::vector<std::size_t> live;
            for (std::size_t g = 0; g < out.generators.size(); ++g) {
                if (out.generators[g].in_service()) live.push_back(g);
            }
            std::vector<CostPoly> costs;
            for (std::size_t g : live) costs.push_back(out.generators[g].cost);
            for (std::size_t i = costs.size(); i > 1; --i) {
                std::swap(costs[i - 1], costs[static_cast<std::size_t>(rng.below(i))]);
            }
            for (std::size_t i = 0; i < live.size(); ++i) out.generators[live[i]].cost = costs[i];
            break;
        }
        case CostMode::Scale:
            if (!(how.lo > 0.0 && how.lo <= how.hi)) {
                throw ConfigError("cost scale bounds must satisfy 0 < lo <= hi");
            }
            for (auto& g : out.generators) {
                const double f = rng.uniform(how.lo, how.hi);
                g.cost.c2 *= f;
                g.cost.c1 *= f;
                g.cost.c0 *= f;
            }
            break;
    }
    return out;
}

}  // namespace gridsynth
