#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "gridsynth/admittance.hpp"
#include "gridsynth/analysis.hpp"
#include "gridsynth/dataset.hpp"
#include "gridsynth/flows.hpp"
#include "gridsynth/power_equations.hpp"
#include "gridsynth/text.hpp"

namespace gridsynth {

inline constexpr double kFlowConsistencyTol = 1e-6;  // p.u.
inline constexpr double kBalanceFactor = 10.0;       // times the solver tolerance

struct ValidationFailure {
    std::size_t scenario_id = 0;
    std::size_t topology_id = 0;
    std::string check;
    std::string detail;
};

struct ValidationReport {
    std::size_t samples = 0;
    std::size_t checked = 0;  // converged samples recomputed
    double max_balance_residual = 0.0;
    double max_flow_error = 0.0;
    double balance_limit = 0.0;
    std::vector<ValidationFailure> failures;
    std::vector<std::string> dataset_issues;  // not tied to one sample

    bool ok() const { return failures.empty() && dataset_issues.empty(); }
};

// Largest per-bus complex power-balance residual (p.u.) of a stored state:
// generation - demand - injection into the network.
inline double balance_residual(const Grid& g, const SampleRecord& r) {
    const BusIndex index(g);
    const AdmittanceMatrix adm = build_admittance(g, index);
    std::vector<double> vm(r.buses.size()), va(r.buses.size());
    for (std::size_t i = 0; i < r.buses.size(); ++i) {
        vm[i] = r.buses[i].vm;
        va[i] = r.buses[i].va;
    }
    const auto s = bus_injections(adm.y, voltage_phasors(vm, va));
    std::vector<Complex> net(g.buses.size());
    for (std::size_t i = 0; i < r.buses.size(); ++i) net[i] = -Complex(r.buses[i].pd, r.buses[i].qd);
    for (const auto& gen : r.gens) {
        if (gen.in_service) net[index[gen.bus_id]] += Complex(gen.pg, gen.qg);
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < net.size(); ++i) {
        if (g.buses[i].role == BusRole::Isolated) continue;
        worst = std::max(worst, std::abs(net[i] / g.base_mva - s[i]));
    }
    return worst;
}

// Stored state of a record as a solver result, with the stored flows.
inline PfSolution stored_state(const SampleRecord& r) {
    PfSolution s;
    for (const auto& b : r.buses) {
        s.vm.push_back(b.vm);
        s.va.push_back(b.va);
    }
    for (const auto& g : r.gens) {
        s.pg.push_back(g.pg);
        s.qg.push_back(g.qg);
    }
    for (const auto& b : r.branches) s.branch_flows.push_back(b.flow);
    s.converged = r.converged();
    return s;
}

// Recomputes every stored quantity of every converged sample from the stored
// voltages and the rebuilt grid.
inline ValidationReport validate_dataset(const Dataset& ds) {
    ValidationReport rep;
    rep.samples = ds.records.size();
    const auto& m = ds.manifest;
    if (!m.value("complete", false)) rep.dataset_issues.push_back("manifest marks the dataset incomplete");
    double solver_tol = 1e-8;
    double violation_tol = 1e-5;
    try {
        const auto& cfg = m.at("config");
        solver_tol = cfg.at("mode") == "pf" ? cfg.at("solver").at("pf_tol").get<double>()
                                            : cfg.at("solver").at("opf_tol").get<double>();
        violation_tol = cfg.at("violation_tol").get<double>();
        const std::size_t expected = cfg.at("n_load_scenarios").get<std::size_t>() *
                                     m.at("topologies_per_scenario").get<std::size_t>();
        if (expected != ds.records.size()) {
            rep.dataset_issues.push_back("expected " + std::to_string(expected) + " samples, found " +
                                         std::to_string(ds.records.size()));
        }
        if (m.contains("counts")) {
            std::size_t converged = 0;
            for (const auto& r : ds.records) converged += r.converged() ? 1 : 0;
            if (m.at("counts").at("converged").get<std::size_t>() != converged) {
                rep.dataset_issues.push_back("manifest converged count disagrees with sample.csv");
            }
        }
    } catch (const nlohmann::json::exception& e) {
        rep.dataset_issues.push_back(std::string("manifest is missing fields: ") + e.what());
    }
    rep.balance_limit = kBalanceFactor * solver_tol;

    for (const auto& r : ds.records) {
        auto fail = [&](const std::string& check, const std::string& detail) {
            rep.failures.push_back({r.scenario_id, r.topology_id, check, detail});
        };
        if (!r.converged()) {
            if (r.violation_count() != 0) fail("flags", "non-converged sample carries violation flags");
            continue;
        }
        ++rep.checked;
        const Grid g = rebuild_grid(ds.base, r);
        const BusIndex index(g);
        const AdmittanceMatrix adm = build_admittance(g, index);
        std::vector<double> vm, va;
        for (const auto& b : r.buses) {
            vm.push_back(b.vm);
            va.push_back(b.va);
        }
        const auto flows = compute_branch_flows(g, adm, vm, va);
        const auto loading = branch_loading(g, flows);
        double flow_err = 0.0;
        double loading_err = 0.0;
        for (std::size_t e = 0; e < flows.size(); ++e) {
            const auto& s = r.branches[e].flow;
            const auto& c = flows[e];
            flow_err = std::max({flow_err, std::abs(s.p_from - c.p_from), std::abs(s.q_from - c.q_from),
                                 std::abs(s.p_to - c.p_to), std::abs(s.q_to - c.q_to)});
            loading_err = std::max(loading_err, std::abs(r.branches[e].loading - loading[e]));
        }
        flow_err /= g.base_mva;
        rep.max_flow_error = std::max(rep.max_flow_error, flow_err);
        if (!(flow_err <= kFlowConsistencyTol)) fail("flow", "max flow deviation " + format_double(flow_err) + " p.u.");
        if (!(loading_err <= kFlowConsistencyTol)) fail("loading", "max loading deviation " + format_double(loading_err));

        const double bal = balance_residual(g, r);
        rep.max_balance_residual = std::max(rep.max_balance_residual, bal);
        if (!(bal <= rep.balance_limit)) fail("balance", "residual " + format_double(bal) + " p.u.");

        const ViolationReport v = detect_violations(g, stored_state(r), violation_tol);
        auto flagged = [](const auto& rows, auto pred, auto id) {
            std::vector<int> out;
            for (const auto& row : rows) {
                if (pred(row)) out.push_back(id(row));
            }
            return out;
        };
        const auto overloads = flagged(r.branches, [](const BranchRecord& b) { return b.overload; },
                                       [](const BranchRecord& b) { return b.branch_id; });
        const auto angles = flagged(r.branches, [](const BranchRecord& b) { return b.angle_violation; },
                                    [](const BranchRecord& b) { return b.branch_id; });
        const auto vms = flagged(r.buses, [](const BusRecord& b) { return b.vm_violation; },
                                 [](const BusRecord& b) { return b.bus_id; });
        const auto qgs = flagged(r.gens, [](const GenRecord& x) { return x.qg_violation; },
                                 [](const GenRecord& x) { return x.gen_id; });
        if (overloads != v.branch_overloads || angles != v.angle_violations || vms != v.vm_violations ||
            qgs != v.qg_violations || r.slack_pg_violation != v.slack_pg_violation) {
            fail("violations", "stored flags differ from recomputed limit checks");
        }
        if (r.n_overloads != static_cast<int>(overloads.size()) || r.n_angle_violations != static_cast<int>(angles.size()) ||
            r.n_vm_violations != static_cast<int>(vms.size()) || r.n_qg_violations != static_cast<int>(qgs.size())) {
            fail("violation_counts", "sample.csv counts differ from element flags");
        }
        if (r.dcpf_ok && !(r.dc_balance <= 1e-9)) fail("dc_balance", "DC residual " + format_double(r.dc_balance));
    }
    return rep;
}

inline ValidationReport validate_dataset(const std::filesystem::path& dir) {
    return validate_dataset(read_dataset(dir));
}

}  // namespace gridsynth
