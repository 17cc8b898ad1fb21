#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/SparseCore>

#include "gridsynth/dcpf.hpp"
#include "gridsynth/grid.hpp"
#include "gridsynth/interior_point.hpp"

namespace gridsynth {

struct DcOpfSolution {
    std::vector<double> pg;     // MW per generator, 0 when out of service
    std::vector<double> va;     // rad per bus
    std::vector<double> flows;  // MW per branch
    double objective = 0.0;
    bool feasible = false;
    int iterations = 0;
    double runtime = 0.0;
    std::string reason;
};

// Lossless dispatch QP over [ theta (n) | pg (m) ] in p.u.
class DcOpfModel {
  public:
    explicit DcOpfModel(const Grid& grid)
        : grid_(grid), index_(grid_), dc_(build_dc_model(grid_, index_)) {
        n_ = grid_.buses.size();
        for (std::size_t g = 0; g < grid_.generators.size(); ++g) {
            if (grid_.generators[g].in_service()) gens_.push_back(g);
        }
        std::vector<double> qd;
        bus_demand(grid_, index_, pd_, qd);
        for (std::size_t e = 0; e < grid_.branches.size(); ++e) {
            if (grid_.branches[e].in_service() && grid_.branches[e].has_rate()) limited_.push_back(e);
        }
        const double base = grid_.base_mva;
        for (std::size_t i = 0; i < n_; ++i) {
            if (grid_.buses[i].role == BusRole::Isolated && i != dc_.ref) fixed_.push_back({i, 0.0});
        }
        for (std::size_t k = 0; k < gens_.size(); ++k) {
            const auto& g = grid_.generators[gens_[k]];
            const double lo = g.p_min / base;
            const double hi = g.p_max / base;
            if (std::isfinite(lo) && std::isfinite(hi) && hi - lo <= 1e-10) {
                fixed_.push_back({n_ + k, 0.5 * (lo + hi)});
                continue;
            }
            if (std::isfinite(lo)) bounds_.push_back({n_ + k, lo, -1.0});
            if (std::isfinite(hi)) bounds_.push_back({n_ + k, hi, 1.0});
        }
    }

    Eigen::Index num_variables() const { return static_cast<Eigen::Index>(n_ + gens_.size()); }

    Eigen::VectorXd initial_point() const {
        Eigen::VectorXd x = Eigen::VectorXd::Zero(num_variables());
        const double base = grid_.base_mva;
        for (std::size_t k = 0; k < gens_.size(); ++k) {
            const auto& g = grid_.generators[gens_[k]];
            x[static_cast<Eigen::Index>(n_ + k)] =
                (std::isfinite(g.p_min) && std::isfinite(g.p_max) ? 0.5 * (g.p_min + g.p_max) : 0.0) / base;
        }
        return x;
    }

    void evaluate(const Eigen::VectorXd& x, NlpEvaluation& out) const {
        const double base = grid_.base_mva;
        const Eigen::Index nx = num_variables();
        out.f = 0.0;
        out.grad = Eigen::VectorXd::Zero(nx);
        for (std::size_t k = 0; k < gens_.size(); ++k) {
            const auto& c = grid_.generators[gens_[k]].cost;
            const double p = x[static_cast<Eigen::Index>(n_ + k)] * base;
            out.f += c(p);
            out.grad[static_cast<Eigen::Index>(n_ + k)] = (2.0 * c.c2 * p + c.c1) * base;
        }
        if (evaluated_) {
            // Constraints are linear: only values change.
            out.g = jac_g_ * x - g_rhs_;
            out.h = jac_h_ * x - h_rhs_;
            out.jac_g = jac_g_;
            out.jac_h = jac_h_;
            return;
        }
        std::vector<Eigen::Triplet<double>> t;
        const std::size_t neq = n_ + 1 + fixed_.size();
        g_rhs_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(neq));
        for (int k = 0; k < dc_.b_bus.outerSize(); ++k) {
            for (Eigen::SparseMatrix<double>::InnerIterator it(dc_.b_bus, k); it; ++it) {
                t.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
            }
        }
        for (std::size_t i = 0; i < n_; ++i) {
            g_rhs_[static_cast<Eigen::Index>(i)] = -pd_[i] / base - dc_.p_bus_shift[i];
        }
        for (std::size_t k = 0; k < gens_.size(); ++k) {
            t.emplace_back(static_cast<int>(index_[grid_.generators[gens_[k]].bus]),
                           static_cast<int>(n_ + k), -1.0);
        }
        t.emplace_back(static_cast<int>(n_), static_cast<int>(dc_.ref), 1.0);
        for (std::size_t f = 0; f < fixed_.size(); ++f) {
            t.emplace_back(static_cast<int>(n_ + 1 + f), static_cast<int>(fixed_[f].var), 1.0);
            g_rhs_[static_cast<Eigen::Index>(n_ + 1 + f)] = fixed_[f].value;
        }
        jac_g_.resize(static_cast<Eigen::Index>(neq), nx);
        jac_g_.setFromTriplets(t.begin(), t.end());

        t.clear();
        const std::size_t niq = 2 * limited_.size() + bounds_.size();
        h_rhs_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(niq));
        std::size_t row = 0;
        for (std::size_t e : limited_) {
            const double b = dc_.susceptance[e];
            const double rate = grid_.branches[e].rate_a / base;
            for (double sign : {1.0, -1.0}) {
                t.emplace_back(static_cast<int>(row), static_cast<int>(dc_.from[e]), sign * b);
                t.emplace_back(static_cast<int>(row), static_cast<int>(dc_.to[e]), -sign * b);
                h_rhs_[static_cast<Eigen::Index>(row)] = rate - sign * dc_.p_branch_shift[e];
                ++row;
            }
        }
        for (const auto& bd : bounds_) {
            t.emplace_back(static_cast<int>(row), static_cast<int>(bd.var), bd.sign);
            h_rhs_[static_cast<Eigen::Index>(row)] = bd.sign * bd.value;
            ++row;
        }
        jac_h_.resize(static_cast<Eigen::Index>(niq), nx);
        jac_h_.setFromTriplets(t.begin(), t.end());
        evaluated_ = true;
        evaluate(x, out);
    }

    void hessian(const Eigen::VectorXd&, double cost_weight, const Eigen::VectorXd&,
                 const Eigen::VectorXd&, std::vector<Eigen::Triplet<double>>& out) const {
        const double base = grid_.base_mva;
        for (std::size_t k = 0; k < gens_.size(); ++k) {
            const double c2 = grid_.generators[gens_[k]].cost.c2;
            out.emplace_back(static_cast<int>(n_ + k), static_cast<int>(n_ + k),
                             cost_weight * 2.0 * c2 * base * base);
        }
    }

    DcOpfSolution extract(const IpmResult& r) const {
        const double base = grid_.base_mva;
        DcOpfSolution sol;
        sol.va.assign(n_, 0.0);
        for (std::size_t i = 0; i < n_; ++i) sol.va[i] = r.x[static_cast<Eigen::Index>(i)];
        sol.pg.assign(grid_.generators.size(), 0.0);
        for (std::size_t k = 0; k < gens_.size(); ++k) {
            sol.pg[gens_[k]] = r.x[static_cast<Eigen::Index>(n_ + k)] * base;
        }
        sol.flows.assign(grid_.branches.size(), 0.0);
        for (std::size_t e = 0; e < grid_.branches.size(); ++e) {
            if (dc_.susceptance[e] == 0.0) continue;
            sol.flows[e] = (dc_.susceptance[e] * (sol.va[dc_.from[e]] - sol.va[dc_.to[e]]) +
                            dc_.p_branch_shift[e]) * base;
        }
        sol.objective = r.f;
        sol.feasible = r.converged;
        sol.iterations = r.iterations;
        sol.reason = r.reason;
        return sol;
    }

  private:
    struct Bound {
        std::size_t var;
        double value;
        double sign;
    };
    struct Fixed {
        std::size_t var;
        double value;
    };

    Grid grid_;
    BusIndex index_;
    DcModel dc_;
    std::size_t n_ = 0;
    std::vector<std::size_t> gens_;
    std::vector<double> pd_;
    std::vector<std::size_t> limited_;
    std::vector<Bound> bounds_;
    std::vector<Fixed> fixed_;
    mutable bool evaluated_ = false;
    mutable SparseReal jac_g_;
    mutable SparseReal jac_h_;
    mutable Eigen::VectorXd g_rhs_;
    mutable Eigen::VectorXd h_rhs_;
};

// Cost-minimizing lossless dispatch with DC branch limits. An infeasible or
// unsolved instance returns feasible == false; it is data, not an error.
inline DcOpfSolution solve_dc_opf(const Grid& grid, const IpmOptions& options = {}) {
    const auto started = std::chrono::steady_clock::now();
    const DcOpfModel model(grid);
    const IpmResult r = solve_interior_point(model, model.initial_point(), options);
    DcOpfSolution sol = model.extract(r);
    sol.runtime = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return sol;
}

}  // namespace gridsynth
