#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "gridsynth/acopf.hpp"
#include "gridsynth/acpf.hpp"
#include "gridsynth/analysis.hpp"
#include "gridsynth/config.hpp"
#include "gridsynth/dataset.hpp"
#include "gridsynth/dcopf.hpp"
#include "gridsynth/dcpf.hpp"
#include "gridsynth/matpower.hpp"
#include "gridsynth/perturbations.hpp"
#include "gridsynth/rng.hpp"
#include "gridsynth/topology.hpp"

namespace gridsynth {

struct RunSummary {
    std::size_t samples = 0;
    std::size_t converged = 0;
    std::size_t not_converged = 0;
    std::size_t skipped = 0;
    std::size_t with_violation = 0;  // converged samples with >= 1 violation
    std::size_t with_overload = 0;
    LoadRange range;
    double wall_time = 0.0;

    double convergence_rate() const {
        return samples == 0 ? 0.0 : static_cast<double>(converged) / static_cast<double>(samples);
    }
    double violation_fraction() const {
        return converged == 0 ? 0.0 : static_cast<double>(with_violation) / static_cast<double>(converged);
    }
};

// Optional hooks; both are called from the writer thread only.
struct RunObserver {
    std::function<void(const std::string&)> message;
    std::function<void(std::size_t done, std::size_t total, const std::vector<SampleRecord>&)> scenario_done;
};

namespace pipeline_detail {

inline double dispatch_cost(const Grid& g, const std::vector<double>& pg) {
    double total = 0.0;
    for (std::size_t k = 0; k < g.generators.size(); ++k) {
        if (g.generators[k].in_service()) total += g.generators[k].cost(pg[k]);
    }
    return total;
}

// Net injections (MW) for DC power flow from a per-generator dispatch.
inline std::vector<double> net_injections(const Grid& g, const BusIndex& index, const std::vector<double>& pg) {
    std::vector<double> pd, qd;
    bus_demand(g, index, pd, qd);
    std::vector<double> inj(g.buses.size(), 0.0);
    for (std::size_t i = 0; i < inj.size(); ++i) inj[i] = -pd[i];
    for (std::size_t k = 0; k < g.generators.size(); ++k) {
        if (g.generators[k].in_service()) inj[index[g.generators[k].bus]] += pg[k];
    }
    return inj;
}

// Largest nodal flow-conservation error (p.u.) of a DC solution, excluding the
// reference bus which absorbs the imbalance.
inline double dc_balance(const Grid& g, const BusIndex& index, const std::vector<double>& inj,
                         const DcPfSolution& dc) {
    const std::size_t ref = reference_position(g, index);
    std::vector<double> out(g.buses.size(), 0.0);
    for (std::size_t e = 0; e < g.branches.size(); ++e) {
        if (!g.branches[e].in_service()) continue;
        out[index[g.branches[e].from_bus]] += dc.flows[e];
        out[index[g.branches[e].to_bus]] -= dc.flows[e];
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (i == ref || g.buses[i].role == BusRole::Isolated) continue;
        worst = std::max(worst, std::abs(out[i] - inj[i]) / g.base_mva);
    }
    return worst;
}

// Fills every field of a record that depends on the solved grid `g`.
inline SampleRecord make_record(const Grid& g, std::size_t scenario, std::size_t topology,
                                const LoadScenario& load, const TopologyPerturbation& topo,
                                const std::string& adm_hash, CostMode cost_mode, const PfSolution& ac,
                                std::optional<std::vector<double>> dc_dispatch, double violation_tol) {
    const BusIndex index(g);
    SampleRecord r;
    r.scenario_id = scenario;
    r.topology_id = topology;
    r.status = ac.converged ? SampleStatus::Converged : SampleStatus::NotConverged;
    r.reason = ac.reason;
    r.load_ref = load.ref;
    r.topology = topo;
    r.admittance_hash = adm_hash;
    r.cost_mode = cost_mode;
    r.iterations = ac.iterations;
    r.max_mismatch = std::isfinite(ac.max_mismatch) ? ac.max_mismatch : std::numeric_limits<double>::infinity();
    r.runtime.ac_pf = ac.runtime;

    std::vector<double> pd, qd;
    bus_demand(g, index, pd, qd);
    const bool ok = ac.converged;
    ViolationReport viol;
    if (ok) {
        viol = detect_violations(g, ac, violation_tol);
        r.objective = dispatch_cost(g, ac.pg);
    }
    auto has = [](const std::vector<int>& ids, int id) { return std::find(ids.begin(), ids.end(), id) != ids.end(); };

    for (std::size_t i = 0; i < g.buses.size(); ++i) {
        BusRecord b;
        b.bus_id = g.buses[i].id;
        b.pd = pd[i];
        b.qd = qd[i];
        if (ok) {
            b.vm = ac.vm[i];
            b.va = ac.va[i];
            b.vm_violation = has(viol.vm_violations, b.bus_id);
        }
        r.buses.push_back(b);
    }
    for (std::size_t k = 0; k < g.generators.size(); ++k) {
        const auto& gen = g.generators[k];
        GenRecord rec;
        rec.gen_id = gen.id;
        rec.bus_id = gen.bus;
        rec.in_service = gen.in_service();
        rec.cost = gen.cost;
        if (ok && rec.in_service) {
            rec.pg = ac.pg[k];
            rec.qg = ac.qg[k];
            rec.qg_violation = has(viol.qg_violations, gen.id);
        }
        r.gens.push_back(rec);
    }
    const auto loading = ok ? branch_loading(g, ac.branch_flows) : std::vector<double>(g.branches.size(), 0.0);
    for (std::size_t e = 0; e < g.branches.size(); ++e) {
        const auto& br = g.branches[e];
        BranchRecord rec;
        rec.branch_id = br.id;
        rec.from_bus = br.from_bus;
        rec.to_bus = br.to_bus;
        rec.in_service = br.in_service();
        rec.r = br.r;
        rec.x = br.x;
        if (ok) {
            rec.flow = ac.branch_flows[e];
            rec.loading = loading[e];
            rec.overload = has(viol.branch_overloads, br.id);
            rec.angle_violation = has(viol.angle_violations, br.id);
        }
        r.branches.push_back(rec);
    }
    r.n_overloads = static_cast<int>(viol.branch_overloads.size());
    r.n_vm_violations = static_cast<int>(viol.vm_violations.size());
    r.n_angle_violations = static_cast<int>(viol.angle_violations.size());
    r.n_qg_violations = static_cast<int>(viol.qg_violations.size());
    r.slack_pg_violation = viol.slack_pg_violation;

    // DC baselines.
    const DcOpfSolution dcopf = solve_dc_opf(g);
    r.runtime.dc_opf = dcopf.runtime;
    r.dcopf_feasible = dcopf.feasible;
    if (dcopf.feasible) {
        r.dcopf_objective = dcopf.objective;
        for (std::size_t k = 0; k < g.generators.size(); ++k) r.gens[k].pg_dcopf = dcopf.pg[k];
        for (std::size_t e = 0; e < g.branches.size(); ++e) r.branches[e].pf_dcopf = dcopf.flows[e];
        if (!dc_dispatch) dc_dispatch = dcopf.pg;
    }
    if (dc_dispatch) {
        try {
            const auto inj = net_injections(g, index, *dc_dispatch);
            const DcPfSolution dc = solve_dc_pf(g, inj);
            r.runtime.dc_pf = dc.runtime;
            r.dcpf_ok = true;
            r.dc_balance = dc_balance(g, index, inj, dc);
            for (std::size_t i = 0; i < g.buses.size(); ++i) r.buses[i].va_dc = dc.va[i];
            for (std::size_t e = 0; e < g.branches.size(); ++e) r.branches[e].pf_dc = dc.flows[e];
        } catch (const SingularSystem&) {
            r.dcpf_ok = false;
        }
    }
    return r;
}

// A record for a sample with no solved state.
inline SampleRecord skipped_record(const Grid& g, std::size_t scenario, std::size_t topology,
                                   const LoadScenario& load, const TopologyPerturbation& topo,
                                   const std::string& adm_hash, CostMode cost_mode, const std::string& reason) {
    PfSolution none;
    none.reason = reason;
    none.max_mismatch = std::numeric_limits<double>::infinity();
    SampleRecord r = make_record(g, scenario, topology, load, topo, adm_hash, cost_mode, none, std::nullopt, 1.0);
    r.status = SampleStatus::Skipped;
    return r;
}

struct Plan {
    GenerationConfig config;
    Grid base;
    LoadProfile profile;
    LoadRange range;
    std::vector<TopologyPerturbation> enumerated;  // Enumerate mode only
    std::size_t topologies = 1;                    // per load scenario
    std::optional<TopologySampler> sampler;
};

inline TopologyPerturbation topology_for(const Plan& plan, std::size_t t, std::size_t j) {
    if (plan.config.topology_mode == TopologyMode::Enumerate) return plan.enumerated[j];
    Rng rng = derive_scenario_rng(plan.config.seed, t, j, Stream::Topology);
    return (*plan.sampler)(rng);
}

// All samples of one load scenario, in topology order.
inline std::vector<SampleRecord> run_scenario(const Plan& plan, std::size_t t) {
    const auto& c = plan.config;
    Rng load_rng = derive_scenario_rng(c.seed, t, 0, Stream::Load);
    const LoadScenario load = generate_load_scenario(plan.base, profile_reference(plan.profile, plan.range, t), t,
                                                     c.sigma_load, load_rng);
    Rng adm_rng = derive_scenario_rng(c.seed, t, 0, Stream::Admittance);
    Grid grid_t = perturb_admittance(apply_load_scenario(plan.base, load), c.sigma_admittance, adm_rng);
    const std::string adm_hash = admittance_hash(grid_t);

    std::vector<SampleRecord> out;
    out.reserve(plan.topologies);
    if (c.mode == Mode::OPF) {
        for (std::size_t j = 0; j < plan.topologies; ++j) {
            const TopologyPerturbation topo = topology_for(plan, t, j);
            Rng cost_rng = derive_scenario_rng(c.seed, t, j, Stream::Cost);
            const Grid g = perturb_costs(apply_topology(grid_t, topo), c.cost, cost_rng);
            const OpfSolution opf = solve_ac_opf(g, c.solver.opf);
            std::optional<std::vector<double>> dispatch;
            if (opf.converged) dispatch = opf.pg;
            SampleRecord r = make_record(g, t, j, load, topo, adm_hash, c.cost.mode, opf, dispatch, c.violation_tol);
            r.runtime.ac_opf = opf.runtime;
            r.runtime.ac_pf = 0.0;
            if (opf.converged) r.objective = opf.objective;
            out.push_back(std::move(r));
        }
        return out;
    }

    // PF mode: dispatch once on the base topology, then hold it fixed.
    Rng cost_rng = derive_scenario_rng(c.seed, t, 0, Stream::Cost);
    grid_t = perturb_costs(grid_t, c.cost, cost_rng);
    const OpfSolution base_opf = solve_ac_opf(grid_t, c.solver.opf);
    Setpoints sp;
    if (base_opf.converged) {
        const BusIndex index(grid_t);
        sp.pg = base_opf.pg;
        for (const auto& gen : grid_t.generators) sp.vm.push_back(base_opf.vm[index[gen.bus]]);
    }
    for (std::size_t j = 0; j < plan.topologies; ++j) {
        const TopologyPerturbation topo = topology_for(plan, t, j);
        const Grid g = apply_topology(grid_t, topo);
        if (!base_opf.converged) {
            SampleRecord r = skipped_record(g, t, j, load, topo, adm_hash, c.cost.mode,
                                            "base_opf_" + (base_opf.reason.empty() ? std::string("failed") : base_opf.reason));
            r.runtime.ac_opf = base_opf.runtime;
            out.push_back(std::move(r));
            continue;
        }
        const PfSolution pf = solve_ac_pf(g, sp, c.solver.pf, &base_opf);
        SampleRecord r = make_record(g, t, j, load, topo, adm_hash, c.cost.mode, pf, sp.pg, c.violation_tol);
        r.runtime.ac_opf = base_opf.runtime;
        out.push_back(std::move(r));
    }
    return out;
}

inline Plan make_plan(const GenerationConfig& config, const RunObserver& obs) {
    Plan plan;
    plan.config = config;
    std::vector<std::string> warnings;
    plan.base = read_matpower_file(config.grid_path, &warnings);
    if (obs.message) {
        for (const auto& w : warnings) obs.message("warning: " + w);
    }
    plan.profile = read_load_profile(config.profile_path);
    plan.range = config.load_u ? make_load_range(*config.load_u, config.r)
                               : calibrate_load_range(plan.base, config.r, config.calibration_step, config.solver.opf);
    if (obs.message) {
        obs.message("load range l=" + format_double(plan.range.l) + " u=" + format_double(plan.range.u));
    }
    if (config.topology_mode == TopologyMode::Enumerate) {
        plan.enumerated = enumerate_topologies(plan.base, config.k, config.enumeration_cap);
        plan.topologies = plan.enumerated.size();
    } else {
        plan.sampler.emplace(plan.base, config.k, config.rejection_attempts);
        plan.topologies = config.topologies_per_scenario;
    }
    return plan;
}

}  // namespace pipeline_detail

// Generates the dataset described by `config` into config.output_dir.
// Scenarios are solved in parallel; records are written in canonical
// (scenario, topology) order, so output is independent of worker count.
inline RunSummary run_generation(const GenerationConfig& config, const RunObserver& obs = {}) {
    using namespace pipeline_detail;
    const auto started = std::chrono::steady_clock::now();
    const Plan plan = make_plan(config, obs);
    const std::size_t n = config.n_load_scenarios;

    nlohmann::json manifest;
    manifest["format"] = "gridsynth-dataset";
    manifest["format_version"] = 1;
    manifest["config"] = config_echo(config);
    manifest["seed"] = config.seed;
    manifest["load_range"] = {{"l", plan.range.l}, {"u", plan.range.u}, {"r", plan.range.r}};
    manifest["topologies_per_scenario"] = plan.topologies;
    manifest["elements"] = {{"buses", plan.base.buses.size()},
                            {"branches", plan.base.branches.size()},
                            {"generators", plan.base.generators.size()},
                            {"loads", plan.base.loads.size()}};
    DatasetWriter writer(config.output_dir, plan.base, manifest);

    const std::size_t workers = std::max<std::size_t>(1, std::min(config.workers, n));
    const std::size_t window = 4 * workers;  // scenarios in flight ahead of the writer
    std::mutex mu;
    std::condition_variable cv;
    std::map<std::size_t, std::vector<SampleRecord>> ready;
    std::size_t next_task = 0;
    std::size_t next_write = 0;
    std::exception_ptr failure;

    auto worker = [&] {
        while (true) {
            std::size_t t;
            {
                std::unique_lock lock(mu);
                cv.wait(lock, [&] { return failure || next_task >= n || next_task < next_write + window; });
                if (failure || next_task >= n) return;
                t = next_task++;
            }
            try {
                auto records = run_scenario(plan, t);
                std::lock_guard lock(mu);
                ready.emplace(t, std::move(records));
            } catch (...) {
                std::lock_guard lock(mu);
                if (!failure) failure = std::current_exception();
            }
            cv.notify_all();
        }
    };

    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);

    RunSummary summary;
    summary.range = plan.range;
    while (next_write < n) {
        std::vector<SampleRecord> batch;
        {
            std::unique_lock lock(mu);
            cv.wait(lock, [&] { return failure || ready.contains(next_write); });
            if (failure) break;
            batch = std::move(ready[next_write]);
            ready.erase(next_write);
        }
        try {
            for (const auto& r : batch) {
                writer.append(r);
                ++summary.samples;
                switch (r.status) {
                    case SampleStatus::Converged: ++summary.converged; break;
                    case SampleStatus::NotConverged: ++summary.not_converged; break;
                    case SampleStatus::Skipped: ++summary.skipped; break;
                }
                if (r.converged() && r.violation_count() > 0) ++summary.with_violation;
                if (r.converged() && r.n_overloads > 0) ++summary.with_overload;
            }
        } catch (...) {
            std::lock_guard lock(mu);
            failure = std::current_exception();
        }
        {
            std::lock_guard lock(mu);
            ++next_write;
        }
        cv.notify_all();
        if (obs.scenario_done) obs.scenario_done(next_write, n, batch);
    }
    cv.notify_all();
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);

    writer.finish({{"counts",
                    {{"samples", summary.samples},
                     {"converged", summary.converged},
                     {"not_converged", summary.not_converged},
                     {"skipped", summary.skipped},
                     {"with_violation", summary.with_violation},
                     {"with_overload", summary.with_overload}}},
                   {"convergence_rate", summary.convergence_rate()}});
    summary.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return summary;
}

inline RunSummary run_pf_mode(GenerationConfig config, const RunObserver& obs = {}) {
    config.mode = Mode::PF;
    return run_generation(config, obs);
}

inline RunSummary run_opf_mode(GenerationConfig config, const RunObserver& obs = {}) {
    config.mode = Mode::OPF;
    return run_generation(config, obs);
}

}  // namespace gridsynth
