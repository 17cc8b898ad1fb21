#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "gridsynth/error.hpp"

namespace gridsynth {

enum class BusRole { Slack, PV, PQ, Isolated };
enum class Status { InService, OutOfService };

// Angle limits at or beyond a full turn are treated as "no limit".
inline constexpr double kUnlimitedAngle = 2.0 * std::numbers::pi;

struct Bus {
    int id = 0;
    BusRole role = BusRole::PQ;
    double shunt_g = 0.0;  // p.u. at 1 p.u. voltage
    double shunt_b = 0.0;  // p.u. at 1 p.u. voltage
    double vm_min = 0.9;
    double vm_max = 1.1;
    double base_kv = 0.0;

    bool operator==(const Bus&) const = default;
};

struct Branch {
    int id = 0;
    int from_bus = 0;
    int to_bus = 0;
    double r = 0.0;
    double x = 0.0;
    double b_charge = 0.0;
    double tap = 0.0;    // 0 means nominal ratio 1.0
    double shift = 0.0;  // radians
    double rate_a = 0.0; // MVA, 0 means unlimited
    double ang_min = -kUnlimitedAngle;
    double ang_max = kUnlimitedAngle;
    Status status = Status::InService;

    bool in_service() const { return status == Status::InService; }
    double ratio() const { return tap == 0.0 ? 1.0 : tap; }
    bool has_rate() const { return rate_a > 0.0; }
    bool has_angle_limits() const {
        return ang_min > -kUnlimitedAngle || ang_max < kUnlimitedAngle;
    }

    bool operator==(const Branch&) const = default;
};

// Polynomial cost c2*p^2 + c1*p + c0 with p in MW, result in $/h.
struct CostPoly {
    double c2 = 0.0;
    double c1 = 1.0;
    double c0 = 0.0;

    double operator()(double p_mw) const { return (c2 * p_mw + c1) * p_mw + c0; }
    bool operator==(const CostPoly&) const = default;
};

struct Generator {
    int id = 0;
    int bus = 0;
    double pg = 0.0;  // MW
    double qg = 0.0;  // MVAr
    double p_min = 0.0;
    double p_max = 0.0;
    double q_min = 0.0;
    double q_max = 0.0;
    double vg = 1.0;
    Status status = Status::InService;
    CostPoly cost;

    bool in_service() const { return status == Status::InService; }
    bool operator==(const Generator&) const = default;
};

struct Load {
    int id = 0;
    int bus = 0;
    double pd = 0.0;  // MW
    double qd = 0.0;  // MVAr

    bool operator==(const Load&) const = default;
};

struct Grid {
    double base_mva = 100.0;
    std::vector<Bus> buses;
    std::vector<Branch> branches;
    std::vector<Generator> generators;
    std::vector<Load> loads;

    bool operator==(const Grid&) const = default;
};

// Maps external bus ids to positions in `Grid::buses`.
class BusIndex {
  public:
    BusIndex() = default;
    explicit BusIndex(const Grid& grid) {
        index_.reserve(grid.buses.size());
        for (std::size_t i = 0; i < grid.buses.size(); ++i) {
            index_.emplace(grid.buses[i].id, i);
        }
    }

    bool contains(int bus_id) const { return index_.contains(bus_id); }
    std::size_t operator[](int bus_id) const {
        auto it = index_.find(bus_id);
        if (it == index_.end()) {
            throw DanglingReference("unknown bus id " + std::to_string(bus_id));
        }
        return it->second;
    }
    std::size_t size() const { return index_.size(); }

  private:
    std::unordered_map<int, std::size_t> index_;
};

inline std::size_t slack_position(const Grid& grid) {
    for (std::size_t i = 0; i < grid.buses.size(); ++i) {
        if (grid.buses[i].role == BusRole::Slack) {
            return i;
        }
    }
    throw NoSlack("grid has no slack bus");
}

// Bus hosting the reference angle and the balancing generator. Normally the
// slack bus; if every generator there is out of service, the bus of the
// in-service generator with the largest p_max takes over.
inline std::size_t reference_position(const Grid& grid, const BusIndex& index) {
    const std::size_t slack = slack_position(grid);
    const Generator* best = nullptr;
    for (const auto& gen : grid.generators) {
        if (!gen.in_service()) {
            continue;
        }
        if (index[gen.bus] == slack) {
            return slack;
        }
        if (best == nullptr || gen.p_max > best->p_max) {
            best = &gen;
        }
    }
    return best == nullptr ? slack : index[best->bus];
}

// Throws on any violated grid invariant.
inline void validate_grid(const Grid& grid) {
    if (!(grid.base_mva > 0.0)) {
        throw MalformedCase("baseMVA must be positive");
    }
    std::unordered_set<int> ids;
    int slack_count = 0;
    for (const auto& bus : grid.buses) {
        if (!ids.insert(bus.id).second) {
            throw MalformedCase("duplicate bus id " + std::to_string(bus.id));
        }
        if (!(bus.vm_min > 0.0 && bus.vm_min <= bus.vm_max)) {
            throw MalformedCase("bus " + std::to_string(bus.id) + ": need 0 < Vmin <= Vmax");
        }
        if (bus.role == BusRole::Slack) {
            ++slack_count;
        }
    }
    if (slack_count == 0) {
        throw NoSlack("no slack (type 3) bus");
    }
    if (slack_count > 1) {
        throw MalformedCase("more than one slack bus");
    }
    auto require_bus = [&](int bus, const std::string& what) {
        if (!ids.contains(bus)) {
            throw DanglingReference(what + " references unknown bus " + std::to_string(bus));
        }
    };
    for (const auto& br : grid.branches) {
        const std::string name = "branch " + std::to_string(br.id);
        require_bus(br.from_bus, name);
        require_bus(br.to_bus, name);
        if (br.from_bus == br.to_bus) {
            throw MalformedCase(name + " is a self loop");
        }
        if (!(br.r >= 0.0)) {
            throw MalformedCase(name + " has negative resistance");
        }
        if (br.x == 0.0 || !std::isfinite(br.x)) {
            throw MalformedCase(name + " has zero reactance");
        }
        if (!(br.ang_min <= br.ang_max)) {
            throw MalformedCase(name + " has angmin > angmax");
        }
    }
    for (const auto& gen : grid.generators) {
        const std::string name = "generator " + std::to_string(gen.id);
        require_bus(gen.bus, name);
        if (!(gen.p_min <= gen.p_max)) {
            throw MalformedCase(name + " has Pmin > Pmax");
        }
        if (!(gen.q_min <= gen.q_max)) {
            throw MalformedCase(name + " has Qmin > Qmax");
        }
        if (!(gen.cost.c2 >= 0.0)) {
            throw MalformedCase(name + " has non-convex cost");
        }
    }
    for (const auto& load : grid.loads) {
        require_bus(load.bus, "load " + std::to_string(load.id));
    }
}

namespace detail {

inline bool close(double a, double b, double rel) {
    if (a == b) {
        return true;
    }
    return std::abs(a - b) <= rel * std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace detail

// Field-wise comparison with a relative tolerance on floating-point values.
// Unit conversions on serialization (degrees, MW shunts) may perturb the
// last bit, so exact equality is too strict for round trips.
inline bool approx_equal(const Grid& a, const Grid& b, double rel = 1e-12) {
    using detail::close;
    if (!close(a.base_mva, b.base_mva, rel) || a.buses.size() != b.buses.size() ||
        a.branches.size() != b.branches.size() || a.generators.size() != b.generators.size() ||
        a.loads.size() != b.loads.size()) {
        return false;
    }
    for (std::size_t i = 0; i < a.buses.size(); ++i) {
        const auto& x = a.buses[i];
        const auto& y = b.buses[i];
        if (x.id != y.id || x.role != y.role || !close(x.shunt_g, y.shunt_g, rel) ||
            !close(x.shunt_b, y.shunt_b, rel) || !close(x.vm_min, y.vm_min, rel) ||
            !close(x.vm_max, y.vm_max, rel) || !close(x.base_kv, y.base_kv, rel)) {
            return false;
        }
    }
    for (std::size_t i = 0; i < a.branches.size(); ++i) {
        const auto& x = a.branches[i];
        const auto& y = b.branches[i];
        if (x.id != y.id || x.from_bus != y.from_bus || x.to_bus != y.to_bus ||
            x.status != y.status || !close(x.r, y.r, rel) || !close(x.x, y.x, rel) ||
            !close(x.b_charge, y.b_charge, rel) || !close(x.tap, y.tap, rel) ||
            !close(x.shift, y.shift, rel) || !close(x.rate_a, y.rate_a, rel) ||
            !close(x.ang_min, y.ang_min, rel) || !close(x.ang_max, y.ang_max, rel)) {
            return false;
        }
    }
    for (std::size_t i = 0; i < a.generators.size(); ++i) {
        const auto& x = a.generators[i];
        const auto& y = b.generators[i];
        if (x.id != y.id || x.bus != y.bus || x.status != y.status || !close(x.pg, y.pg, rel) ||
            !close(x.qg, y.qg, rel) || !close(x.p_min, y.p_min, rel) ||
            !close(x.p_max, y.p_max, rel) || !close(x.q_min, y.q_min, rel) ||
            !close(x.q_max, y.q_max, rel) || !close(x.vg, y.vg, rel) ||
            !close(x.cost.c2, y.cost.c2, rel) || !close(x.cost.c1, y.cost.c1, rel) ||
            !close(x.cost.c0, y.cost.c0, rel)) {
            return false;
        }
    }
    for (std::size_t i = 0; i < a.loads.size(); ++i) {
        const auto& x = a.loads[i];
        const auto& y = b.loads[i];
        if (x.id != y.id || x.bus != y.bus || !close(x.pd, y.pd, rel) || !close(x.qd, y.qd, rel)) {
            return false;
        }
    }
    return true;
}

// Per-bus load totals in MW / MVAr, indexed by bus position.
inline void bus_demand(const Grid& grid, const BusIndex& index, std::vector<double>& pd,
                       std::vector<double>& qd) {
    pd.assign(grid.buses.size(), 0.0);
    qd.assign(grid.buses.size(), 0.0);
    for (const auto& load : grid.loads) {
        const std::size_t i = index[load.bus];
        pd[i] += load.pd;
        qd[i] += load.qd;
    }
}

}  // namespace gridsynth
