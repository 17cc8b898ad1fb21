#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/SparseCore>

#include "gridsynth/acpf.hpp"
#include "gridsynth/admittance.hpp"
#include "gridsynth/flows.hpp"
#include "gridsynth/grid.hpp"
#include "gridsynth/interior_point.hpp"
#include "gridsynth/power_equations.hpp"

namespace gridsynth {

struct OpfProblem {
    Grid grid;
    bool enforce_branch_limits = true;
    bool enforce_angle_limits = true;
};

struct OpfOptions {
    double tol = 1e-6;
    int max_iter = 200;
};

struct OpfSolution : PfSolution {
    double objective = 0.0;  // $/h
    bool feasible = false;
    int barrier_iterations = 0;
    double stationarity = 0.0;  // scaled KKT gradient residual at the returned point
};

// Polar AC-OPF as a smooth NLP. Variables, all p.u./rad:
//   [ va (n) | vm (n) | pg (m) | qg (m) ]  with m = in-service generators.
class AcOpfModel {
  public:
    explicit AcOpfModel(const OpfProblem& problem)
        : grid_(problem.grid), index_(grid_), adm_(build_admittance(grid_, index_)) {
        n_ = grid_.buses.size();
        ref_ = reference_position(grid_, index_);
        for (std::size_t g = 0; g < grid_.generators.size(); ++g) {
            if (grid_.generators[g].in_service()) {
                gens_.push_back(g);
            }
        }
        bus_demand(grid_, index_, pd_, qd_);
        for (std::size_t e = 0; e < grid_.branches.size(); ++e) {
            const auto& br = grid_.branches[e];
            if (!br.in_service()) continue;
            if (problem.enforce_branch_limits && br.has_rate()) {
                limited_.push_back(e);
            }
            if (problem.enforce_angle_limits && br.has_angle_limits()) {
                angled_.push_back(e);
            }
        }
        build_bounds();
    }

    Eigen::Index num_variables() const { return static_cast<Eigen::Index>(2 * n_ + 2 * gens_.size()); }

    std::size_t va(std::size_t i) const { return i; }
    std::size_t vm(std::size_t i) const { return n_ + i; }
    std::size_t pg(std::size_t k) const { return 2 * n_ + k; }
    std::size_t qg(std::size_t k) const { return 2 * n_ + gens_.size() + k; }

    Eigen::VectorXd initial_point() const {
        Eigen::VectorXd x = Eigen::VectorXd::Zero(num_variables());
        for (std::size_t i = 0; i < n_; ++i) {
            x[vm(i)] = 1.0;
        }
        const double base = grid_.base_mva;
        for (std::size_t k = 0; k < gens_.size(); ++k) {
            const auto& g = grid_.generators[gens_[k]];
            x[pg(k)] = midpoint(g.p_min, g.p_max) / base;
            x[qg(k)] = midpoint(g.q_min, g.q_max) / base;
        }
        return x;
    }

    void evaluate(const Eigen::VectorXd& x, NlpEvaluation& out) const {
        const double base = grid_.base_mva;
        const auto [vmag, vang] = voltages(x);
        const auto v = voltage_phasors(vmag, vang);
        const Eigen::Index nx = num_variables();

        out.f = 0.0;
        out.grad = Eigen::VectorXd::Zero(nx);
        for (std::size_t k = 0; k < gens_.size(); ++k) {
            const auto& c = grid_.generators[gens_[k]].cost;
            const double p = x[pg(k)] * base;
            out.f += c(p);
            out.grad[pg(k)] = (2.0 * c.c2 * p + c.c1) * base;
        }

        // Equalities: P balance, Q balance, reference angle, fixed variables.
        const auto s = bus_injections(adm_.y, v);
        const std::size_t neq = 2 * n_ + 1 + fixed_.size();
        out.g.resize(static_cast<Eigen::Index>(neq));
        for (std::size_t i = 0; i < n_; ++i) {
            out.g[i] = s[i].real() + pd_[i] / base;
            out.g[n_ + i] = s[i].imag() + qd_[i] / base;
        }
        for (std::size_t k = 0; k < gens_.size(); ++k) {
            const std::size_t i = index_[grid_.generators[gens_[k]].bus];
            out.g[i] -= x[pg(k)];
            out.g[n_ + i] -= x[qg(k)];
        }
        out.g[2 * n_] = x[va(ref_)];
        for (std::size_t f = 0; f < fixed_.size(); ++f) {
            out.g[2 * n_ + 1 + f] = x[fixed_[f].var] - fixed_[f].value;
        }

        triplets_.clear();
        visit_injection_jacobian(adm_.y, v, [&](std::size_t i, std::size_t k, Complex d_va,
                                                Complex d_vm) {
            const int ki = static_cast<int>(k);
            triplets_.emplace_back(static_cast<int>(i), ki, d_va.real());
            triplets_.emplace_back(static_cast<int>(i), static_cast<int>(vm(k)), d_vm.real());
            triplets_.emplace_back(static_cast<int>(n_ + i), ki, d_va.imag());
            triplets_.emplace_back(static_cast<int>(n_ + i), static_cast<int>(vm(k)), d_vm.imag());
        });
        for (std::size_t k = 0; k < gens_.size(); ++k) {
            const auto i = static_cast<int>(index_[grid_.generators[gens_[k]].bus]);
            triplets_.emplace_back(i, static_cast<int>(pg(k)), -1.0);
            triplets_.emplace_back(static_cast<int>(n_) + i, static_cast<int>(qg(k)), -1.0);
        }
        triplets_.emplace_back(static_cast<int>(2 * n_), static_cast<int>(va(ref_)), 1.0);
        for (std::size_t f = 0; f < fixed_.size(); ++f) {
            triplets_.emplace_back(static_cast<int>(2 * n_ + 1 + f), static_cast<int>(fixed_[f].var), 1.0);
        }
        out.jac_g.resize(static_cast<Eigen::Index>(neq), nx);
        out.jac_g.setFromTriplets(triplets_.begin(), triplets_.end());

        // Inequalities: branch flows (both ends), angle differences, bounds.
        const std::size_t niq = 2 * limited_.size() + 2 * angled_.size() + bounds_.size();
        out.h.resize(static_cast<Eigen::Index>(niq));
        triplets_.clear();
        std::size_t row = 0;
        for (std::size_t e : limited_) {
            const double rate = grid_.branches[e].rate_a / base;
            for (int end = 0; end < 2; ++end) {
                const PairTerm term = end == 0 ? from_end(adm_.branches[e], vmag, vang)
                                               : to_end(adm_.branches[e], vmag, vang);
                const Complex sv = term.power();
                out.h[static_cast<Eigen::Index>(row)] = std::norm(sv) - rate * rate;
                const auto gp = term.gradient(Complex(1.0, 0.0));
                const auto gq = term.gradient(Complex(0.0, -1.0));
                const auto idx = end_vars(e, end == 0);
                for (int p = 0; p < 4; ++p) {
                    triplets_.emplace_back(static_cast<int>(row), static_cast<int>(idx[p]),
                                           2.0 * (sv.real() * gp[p] + sv.imag() * gq[p]));
                }
                ++row;
            }
        }
        for (std::size_t e : angled_) {
            const auto& br = grid_.branches[e];
            const std::size_t f = adm_.branches[e].from;
            const std::size_t t = adm_.branches[e].to;
            const double diff = x[va(f)] - x[va(t)];
            out.h[static_cast<Eigen::Index>(row)] = diff - br.ang_max;
            triplets_.emplace_back(static_cast<int>(row), static_cast<int>(va(f)), 1.0);
            triplets_.emplace_back(static_cast<int>(row), static_cast<int>(va(t)), -1.0);
            ++row;
            out.h[static_cast<Eigen::Index>(row)] = br.ang_min - diff;
            triplets_.emplace_back(static_cast<int>(row), static_cast<int>(va(f)), -1.0);
            triplets_.emplace_back(static_cast<int>(row), static_cast<int>(va(t)), 1.0);
            ++row;
        }
        for (const auto& b : bounds_) {
            out.h[static_cast<Eigen::Index>(row)] = b.sign * (x[b.var] - b.value);
            triplets_.emplace_back(static_cast<int>(row), static_cast<int>(b.var), b.sign);
            ++row;
        }
        out.jac_h.resize(static_cast<Eigen::Index>(niq), nx);
        out.jac_h.setFromTriplets(triplets_.begin(), triplets_.end());
    }

    void hessian(const Eigen::VectorXd& x, double cost_weight, const Eigen::VectorXd& lam,
                 const Eigen::VectorXd& mu, std::vector<Eigen::Triplet<double>>& out) const {
        const double base = grid_.base_mva;
        for (std::size_t k = 0; k < gens_.size(); ++k) {
            const double c2 = grid_.generators[gens_[k]].cost.c2;
            const auto j = static_cast<int>(pg(k));
            out.emplace_back(j, j, cost_weight * 2.0 * c2 * base * base);
        }
        const auto [vmag, vang] = voltages(x);
        std::vector<Complex> weight(n_);
        for (std::size_t i = 0; i < n_; ++i) {
            weight[i] = Complex(lam[static_cast<Eigen::Index>(i)], -lam[static_cast<Eigen::Index>(n_ + i)]);
        }
        visit_injection_hessian(adm_.y, vmag, vang, weight,
                                [&](std::size_t r, std::size_t c, double value) {
                                    out.emplace_back(static_cast<int>(r), static_cast<int>(c), value);
                                });
        std::size_t row = 0;
        for (std::size_t e : limited_) {
            for (int end = 0; end < 2; ++end) {
                const double m = mu[static_cast<Eigen::Index>(row++)];
                const PairTerm term = end == 0 ? from_end(adm_.branches[e], vmag, vang)
                                               : to_end(adm_.branches[e], vmag, vang);
                const auto idx = end_vars(e, end == 0);
                const Complex sv = term.power();
                const auto gp = term.gradient(Complex(1.0, 0.0));
                const auto gq = term.gradient(Complex(0.0, -1.0));
                const auto hs = term.hessian(2.0 * std::conj(sv));
                for (int p = 0; p < 4; ++p) {
                    for (int q = 0; q < 4; ++q) {
                        const double value =
                            m * (2.0 * (gp[p] * gp[q] + gq[p] * gq[q]) + hs[p][q]);
                        out.emplace_back(static_cast<int>(idx[p]), static_cast<int>(idx[q]), value);
                    }
                }
            }
        }
    }

    OpfSolution extract(const IpmResult& r) const {
        const double base = grid_.base_mva;
        OpfSolution sol;
        auto [vmag, vang] = voltages(r.x);
        sol.vm = std::move(vmag);
        sol.va = std::move(vang);
        sol.pg.assign(grid_.generators.size(), 0.0);
        sol.qg.assign(grid_.generators.size(), 0.0);
        for (std::size_t k = 0; k < gens_.size(); ++k) {
            sol.pg[gens_[k]] = r.x[pg(k)] * base;
            sol.qg[gens_[k]] = r.x[qg(k)] * base;
        }
        sol.branch_flows = compute_branch_flows(grid_, adm_, sol.vm, sol.va);
        sol.objective = r.f;
        sol.feasible = r.converged;
        sol.converged = r.converged;
        sol.iterations = r.iterations;
        sol.barrier_iterations = r.iterations;
        sol.stationarity = r.stationarity;
        sol.reason = r.reason;

        // Power balance residual of the returned point.
        const auto s = bus_injections(adm_.y, voltage_phasors(sol.vm, sol.va));
        std::vector<Complex> balance(n_);
        for (std::size_t i = 0; i < n_; ++i) {
            balance[i] = s[i] + Complex(pd_[i], qd_[i]) / base;
        }
        for (std::size_t k = 0; k < gens_.size(); ++k) {
            balance[index_[grid_.generators[gens_[k]].bus]] -= Complex(r.x[pg(k)], r.x[qg(k)]);
        }
        sol.max_mismatch = 0.0;
        for (const auto& b : balance) {
            sol.max_mismatch = std::max({sol.max_mismatch, std::abs(b.real()), std::abs(b.imag())});
        }
        return sol;
    }

  private:
    struct Bound {
        std::size_t var;
        double value;
        double sign;  // +1: x <= value, -1: x >= value
    };
    struct Fixed {
        std::size_t var;
        double value;
    };

    static double midpoint(double lo, double hi) {
        if (std::isfinite(lo) && std::isfinite(hi)) return 0.5 * (lo + hi);
        if (std::isfinite(lo)) return std::max(lo, 0.0);
        if (std::isfinite(hi)) return std::min(hi, 0.0);
        return 0.0;
    }

    void add_range(std::size_t var, double lo, double hi) {
        if (std::isfinite(lo) && std::isfinite(hi) && hi - lo <= 1e-10) {
            fixed_.push_back({var, 0.5 * (lo + hi)});
            return;
        }
        if (std::isfinite(lo)) bounds_.push_back({var, lo, -1.0});
        if (std::isfinite(hi)) bounds_.push_back({var, hi, 1.0});
    }

    void build_bounds() {
        const double base = grid_.base_mva;
        for (std::size_t i = 0; i < n_; ++i) {
            const auto& bus = grid_.buses[i];
            if (bus.role == BusRole::Isolated) {
                fixed_.push_back({vm(i), 1.0});
                if (i != ref_) fixed_.push_back({va(i), 0.0});
                continue;
            }
            add_range(vm(i), bus.vm_min, bus.vm_max);
        }
        for (std::size_t k = 0; k < gens_.size(); ++k) {
            const auto& g = grid_.generators[gens_[k]];
            add_range(pg(k), g.p_min / base, g.p_max / base);
            add_range(qg(k), g.q_min / base, g.q_max / base);
        }
    }

    std::pair<std::vector<double>, std::vector<double>> voltages(const Eigen::VectorXd& x) const {
        std::vector<double> vmag(n_);
        std::vector<double> vang(n_);
        for (std::size_t i = 0; i < n_; ++i) {
            vang[i] = x[va(i)];
            vmag[i] = x[vm(i)];
        }
        return {std::move(vmag), std::move(vang)};
    }

    // Global variable indices for the local (th_i, th_k, v_i, v_k) of a branch end.
    std::array<std::size_t, 4> end_vars(std::size_t e, bool from_side) const {
        const std::size_t f = adm_.branches[e].from;
        const std::size_t t = adm_.branches[e].to;
        if (from_side) return {va(f), va(t), vm(f), vm(t)};
        return {va(t), va(f), vm(t), vm(f)};
    }

    Grid grid_;
    BusIndex index_;
    AdmittanceMatrix adm_;
    std::size_t n_ = 0;
    std::size_t ref_ = 0;
    std::vector<std::size_t> gens_;
    std::vector<double> pd_;
    std::vector<double> qd_;
    std::vector<std::size_t> limited_;
    std::vector<std::size_t> angled_;
    std::vector<Bound> bounds_;
    std::vector<Fixed> fixed_;
    mutable std::vector<Eigen::Triplet<double>> triplets_;
};

// Minimizes total generation cost subject to AC power balance and operating
// limits. A solve that does not converge is returned with feasible == false
// and the last iterate.
inline OpfSolution solve_ac_opf(const OpfProblem& problem, const OpfOptions& options = {}) {
    const auto started = std::chrono::steady_clock::now();
    const AcOpfModel model(problem);
    IpmOptions ipm;
    ipm.tol = options.tol;
    ipm.max_iter = options.max_iter;
    const IpmResult r = solve_interior_point(model, model.initial_point(), ipm);
    OpfSolution sol = model.extract(r);
    sol.runtime = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return sol;
}

inline OpfSolution solve_ac_opf(const Grid& grid, const OpfOptions& options = {}) {
    return solve_ac_opf(OpfProblem{grid, true, true}, options);
}

}  // namespace gridsynth
