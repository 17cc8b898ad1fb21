#pragma once

// Primal-dual interior-point method for
//
//     min f(x)  subject to  g(x) = 0,  h(x) <= 0
//
// Inequalities get slacks z > 0 (h + z = 0) and multipliers mu > 0; the
// barrier parameter follows gamma <- sigma * z'mu / m. Each iteration solves
// the reduced Newton system
//
//     [ Lxx + Jh' diag(mu/z) Jh   Jg' ] [ dx   ]   [ -(Lx + Jh' diag(1/z)(mu.*h + gamma)) ]
//     [ Jg                        0   ] [ dlam ] = [ -g                                   ]
//
// and takes separate primal and dual steps limited by a fraction-to-boundary
// rule. Convergence needs absolute feasibility plus scaled stationarity,
// complementarity and cost-change measures below the tolerance.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

namespace gridsynth {

using SparseReal = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;

struct NlpEvaluation {
    double f = 0.0;
    Eigen::VectorXd grad;
    Eigen::VectorXd g;  // equalities
    SparseReal jac_g;   // rows = equalities
    Eigen::VectorXd h;  // inequalities, feasible when <= 0
    SparseReal jac_h;
};

// A problem type provides
//   Eigen::Index num_variables() const;
//   void evaluate(const Eigen::VectorXd& x, NlpEvaluation& out) const;
//   void hessian(const Eigen::VectorXd& x, double cost_weight, const Eigen::VectorXd& lam,
//                const Eigen::VectorXd& mu, std::vector<Eigen::Triplet<double>>& out) const;
// where `hessian` appends the lower and upper triangle of
// cost_weight * f'' + sum lam_i g_i'' + sum mu_j h_j''.
template <class P>
concept NlpProblem = requires(const P& p, const Eigen::VectorXd& x, NlpEvaluation& e,
                              std::vector<Eigen::Triplet<double>>& t) {
    { p.num_variables() } -> std::convertible_to<Eigen::Index>;
    p.evaluate(x, e);
    p.hessian(x, 1.0, x, x, t);
};

struct IpmOptions {
    double tol = 1e-6;        // feasibility, stationarity, complementarity, cost change
    int max_iter = 200;
    double sigma = 0.1;       // centering
    double step_fraction = 0.995;
    double slack_margin = 1e-2;
    double min_step = 1e-12;
};

struct IpmResult {
    Eigen::VectorXd x;
    Eigen::VectorXd lam;
    Eigen::VectorXd mu;
    Eigen::VectorXd z;
    double f = 0.0;
    bool converged = false;
    int iterations = 0;
    double feasibility = 0.0;
    double stationarity = 0.0;
    double complementarity = 0.0;
    std::string reason;
};

namespace ipm_detail {

inline double inf_norm(const Eigen::VectorXd& v) {
    return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>();
}

}  // namespace ipm_detail

template <NlpProblem Problem>
IpmResult solve_interior_point(const Problem& problem, Eigen::VectorXd x,
                               const IpmOptions& options = {}) {
    using ipm_detail::inf_norm;
    const Eigen::Index n = problem.num_variables();

    NlpEvaluation ev;
    problem.evaluate(x, ev);
    const Eigen::Index neq = ev.g.size();
    const Eigen::Index niq = ev.h.size();

    // Objective normalization: multiplying every cost by a constant yields
    // the same iterates.
    const double grad_norm = inf_norm(ev.grad);
    const double cost_weight = grad_norm > 0.0 ? 1.0 / grad_norm : 1.0;

    IpmResult r;
    r.lam = Eigen::VectorXd::Zero(neq);
    r.z = (-ev.h).cwiseMax(options.slack_margin);
    r.mu = Eigen::VectorXd::Ones(niq);
    double gamma = 1.0;

    auto measures = [&](const Eigen::VectorXd& grad_scaled) {
        const Eigen::VectorXd lx = grad_scaled + ev.jac_g.transpose() * r.lam +
                                   ev.jac_h.transpose() * r.mu;
        const double max_h = niq > 0 ? std::max(ev.h.maxCoeff(), 0.0) : 0.0;
        // Absolute, so a converged point meets every constraint to within tol.
        r.feasibility = std::max(inf_norm(ev.g), max_h);
        r.stationarity = inf_norm(lx) / (1.0 + std::max(inf_norm(r.lam), inf_norm(r.mu)));
        r.complementarity = niq > 0 ? r.z.dot(r.mu) / (1.0 + inf_norm(x)) : 0.0;
        return lx;
    };

    Eigen::VectorXd lx = measures(cost_weight * ev.grad);
    double f_prev = cost_weight * ev.f;
    std::vector<Eigen::Triplet<double>> triplets;
    Eigen::SparseLU<SparseReal, Eigen::COLAMDOrdering<int>> lu;

    for (r.iterations = 0; r.iterations < options.max_iter;) {
        // Assemble the reduced KKT matrix.
        triplets.clear();
        problem.hessian(x, cost_weight, r.lam, r.mu, triplets);
        const Eigen::VectorXd d = r.mu.cwiseQuotient(r.z);
        {
            // Jh' D Jh, one dense outer product per inequality row.
            Eigen::SparseMatrix<double, Eigen::RowMajor, int> jh_rows = ev.jac_h;
            for (Eigen::Index i = 0; i < niq; ++i) {
                for (decltype(jh_rows)::InnerIterator a(jh_rows, i); a; ++a) {
                    for (decltype(jh_rows)::InnerIterator b(jh_rows, i); b; ++b) {
                        triplets.emplace_back(static_cast<int>(a.col()), static_cast<int>(b.col()),
                                              d[i] * a.value() * b.value());
                    }
                }
            }
        }
        for (int k = 0; k < ev.jac_g.outerSize(); ++k) {
            for (SparseReal::InnerIterator a(ev.jac_g, k); a; ++a) {
                triplets.emplace_back(static_cast<int>(n + a.row()), k, a.value());
                triplets.emplace_back(k, static_cast<int>(n + a.row()), a.value());
            }
        }
        const Eigen::Index dim = n + neq;
        Eigen::VectorXd rhs(dim);
        const Eigen::VectorXd zinv_term =
            (r.mu.cwiseProduct(ev.h) + Eigen::VectorXd::Constant(niq, gamma)).cwiseQuotient(r.z);
        rhs.head(n) = -(lx + ev.jac_h.transpose() * zinv_term);
        rhs.tail(neq) = -ev.g;

        Eigen::VectorXd step;
        bool solved = false;
        for (double reg : {0.0, 1e-10, 1e-8, 1e-6}) {
            std::vector<Eigen::Triplet<double>> with_reg = triplets;
            if (reg > 0.0) {
                for (Eigen::Index i = 0; i < n; ++i) {
                    with_reg.emplace_back(static_cast<int>(i), static_cast<int>(i), reg);
                }
                for (Eigen::Index i = n; i < dim; ++i) {
                    with_reg.emplace_back(static_cast<int>(i), static_cast<int>(i), -reg);
                }
            }
            SparseReal kkt(dim, dim);
            kkt.setFromTriplets(with_reg.begin(), with_reg.end());
            kkt.makeCompressed();
            lu.analyzePattern(kkt);
            lu.factorize(kkt);
            if (lu.info() != Eigen::Success) {
                continue;
            }
            step = lu.solve(rhs);
            if (lu.info() == Eigen::Success && step.allFinite()) {
                solved = true;
                break;
            }
        }
        if (!solved) {
            r.reason = "singular_kkt";
            break;
        }
        const Eigen::VectorXd dx = step.head(n);
        const Eigen::VectorXd dlam = step.tail(neq);
        const Eigen::VectorXd dz = -ev.h - r.z - ev.jac_h * dx;
        const Eigen::VectorXd dmu =
            -r.mu + (Eigen::VectorXd::Constant(niq, gamma) - r.mu.cwiseProduct(dz)).cwiseQuotient(r.z);

        double alpha_p = 1.0;
        double alpha_d = 1.0;
        for (Eigen::Index i = 0; i < niq; ++i) {
            if (dz[i] < 0.0) alpha_p = std::min(alpha_p, options.step_fraction * r.z[i] / -dz[i]);
            if (dmu[i] < 0.0) alpha_d = std::min(alpha_d, options.step_fraction * r.mu[i] / -dmu[i]);
        }
        x += alpha_p * dx;
        r.z += alpha_p * dz;
        r.lam += alpha_d * dlam;
        r.mu += alpha_d * dmu;
        if (niq > 0) {
            gamma = options.sigma * r.z.dot(r.mu) / static_cast<double>(niq);
        }
        ++r.iterations;

        problem.evaluate(x, ev);
        lx = measures(cost_weight * ev.grad);
        const double f_now = cost_weight * ev.f;
        const double cost_change = std::abs(f_now - f_prev) / (1.0 + std::abs(f_prev));
        f_prev = f_now;

        if (!x.allFinite()) {
            r.reason = "numerical_failure";
            break;
        }
        if (r.feasibility < options.tol && r.stationarity < options.tol &&
            r.complementarity < options.tol && cost_change < options.tol) {
            r.converged = true;
            break;
        }
        if (alpha_p < options.min_step || alpha_d < options.min_step) {
            r.reason = "stalled";
            break;
        }
        if (niq > 0 && (gamma < std::numeric_limits<double>::epsilon() ||
                        gamma > 1.0 / std::numeric_limits<double>::epsilon())) {
            r.reason = "numerical_failure";
            break;
        }
    }
    if (!r.converged && r.reason.empty()) {
        r.reason = "iteration_limit";
    }
    r.x = std::move(x);
    r.f = ev.f;
    return r;
}

}  // namespace gridsynth
