#pragma once

#include <algorithm>
#include <cstddef>
#include <set>
#include <utility>
#include <vector>

#include "gridsynth/grid.hpp"

namespace gridsynth {

// Set of elements taken out of service on top of a grid.
struct TopologyPerturbation {
    std::vector<int> disabled_branches;   // branch ids, ascending
    std::vector<int> disabled_generators; // generator ids, ascending

    std::size_t k() const { return disabled_branches.size() + disabled_generators.size(); }
    bool empty() const { return k() == 0; }
    bool operator==(const TopologyPerturbation&) const = default;
    auto operator<=>(const TopologyPerturbation&) const = default;
};

// Bus adjacency over in-service branches, built once and queried with
// different outage masks.
class NetworkGraph {
  public:
    explicit NetworkGraph(const Grid& grid) : index_(grid), adjacency_(grid.buses.size()) {
        slack_ = slack_position(grid);
        for (std::size_t e = 0; e < grid.branches.size(); ++e) {
            const auto& br = grid.branches[e];
            if (!br.in_service()) {
                continue;
            }
            const std::size_t f = index_[br.from_bus];
            const std::size_t t = index_[br.to_bus];
            adjacency_[f].push_back({t, e});
            adjacency_[t].push_back({f, e});
        }
    }

    // Marks buses reachable from the slack when branches with
    // `branch_out[position] != 0` are removed.
    std::vector<char> reachable(const std::vector<char>& branch_out) const {
        std::vector<char> seen(adjacency_.size(), 0);
        std::vector<std::size_t> stack{slack_};
        seen[slack_] = 1;
        while (!stack.empty()) {
            const std::size_t u = stack.back();
            stack.pop_back();
            for (const auto& [v, e] : adjacency_[u]) {
                if (!seen[v] && (branch_out.empty() || !branch_out[e])) {
                    seen[v] = 1;
                    stack.push_back(v);
                }
            }
        }
        return seen;
    }

    bool all_connected(const std::vector<char>& branch_out) const {
        const auto seen = reachable(branch_out);
        return std::all_of(seen.begin(), seen.end(), [](char c) { return c != 0; });
    }

    const BusIndex& index() const { return index_; }

  private:
    struct Edge {
        std::size_t to;
        std::size_t branch;
    };
    BusIndex index_;
    std::vector<std::vector<Edge>> adjacency_;
    std::size_t slack_ = 0;
};

namespace topology_detail {

inline std::vector<char> branch_mask(const Grid& grid, const std::vector<int>& ids) {
    std::vector<char> mask(grid.branches.size(), 0);
    for (int id : ids) {
        for (std::size_t e = 0; e < grid.branches.size(); ++e) {
            if (grid.branches[e].id == id) {
                mask[e] = 1;
            }
        }
    }
    return mask;
}

}  // namespace topology_detail

// Bus ids reachable from the slack bus through in-service branches that are
// not disabled by `disabled`.
inline std::set<int> connected_component_of_slack(const Grid& grid,
                                                  const TopologyPerturbation& disabled = {}) {
    const NetworkGraph graph(grid);
    const auto seen = graph.reachable(topology_detail::branch_mask(grid, disabled.disabled_branches));
    std::set<int> out;
    for (std::size_t i = 0; i < seen.size(); ++i) {
        if (seen[i]) {
            out.insert(grid.buses[i].id);
        }
    }
    return out;
}

// Decides admissibility of many perturbations of one grid without rebuilding
// the graph each time. A perturbation is admissible when every bus connected
// to the slack in the base topology stays connected, and at least one
// generator remains in service.
class OutageChecker {
  public:
    explicit OutageChecker(const Grid& grid) : grid_(&grid), graph_(grid) {
        const auto seen = graph_.reachable({});
        base_reached_ = static_cast<std::size_t>(std::count(seen.begin(), seen.end(), 1));
        for (std::size_t e = 0; e < grid.branches.size(); ++e) {
            branch_position_.emplace_back(grid.branches[e].id, e);
        }
        std::sort(branch_position_.begin(), branch_position_.end());
    }

    bool admissible(const TopologyPerturbation& p) const {
        std::size_t remaining = 0;
        for (const auto& g : grid_->generators) {
            if (g.in_service() && !std::binary_search(p.disabled_generators.begin(),
                                                      p.disabled_generators.end(), g.id)) {
                ++remaining;
            }
        }
        if (remaining == 0) {
            return false;
        }
        if (p.disabled_branches.empty()) {
            return true;
        }
        std::vector<char> out(grid_->branches.size(), 0);
        for (int id : p.disabled_branches) {
            auto it = std::lower_bound(branch_position_.begin(), branch_position_.end(),
                                       std::pair<int, std::size_t>{id, 0});
            for (; it != branch_position_.end() && it->first == id; ++it) {
                out[it->second] = 1;
            }
        }
        const auto seen = graph_.reachable(out);
        return static_cast<std::size_t>(std::count(seen.begin(), seen.end(), 1)) == base_reached_;
    }

  private:
    const Grid* grid_;
    NetworkGraph graph_;
    std::size_t base_reached_ = 0;
    std::vector<std::pair<int, std::size_t>> branch_position_;
};

inline bool is_admissible(const Grid& grid, const TopologyPerturbation& p) {
    return OutageChecker(grid).admissible(p);
}

// Copy of `grid` with the perturbation's elements switched out of service.
inline Grid apply_topology(const Grid& grid, const TopologyPerturbation& p) {
    Grid out = grid;
    for (auto& br : out.branches) {
        if (std::find(p.disabled_branches.begin(), p.disabled_branches.end(), br.id) !=
            p.disabled_branches.end()) {
            br.status = Status::OutOfService;
        }
    }
    for (auto& g : out.generators) {
        if (std::find(p.disabled_generators.begin(), p.disabled_generators.end(), g.id) !=
            p.disabled_generators.end()) {
            g.status = Status::OutOfService;
        }
    }
    return out;
}

}  // namespace gridsynth
