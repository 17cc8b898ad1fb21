#pragma once

// Polar-coordinate power expressions shared by the power flow and OPF
// solvers.
//
// Every complex power in the network has the form
//     S = v_i^2 * conj(Y_self) + v_i * v_k * conj(Y_mutual) * exp(j*(th_i - th_k))
// (a bus injection is a sum of such terms, a branch end is exactly one).
// For a complex weight w, Re(w * S) with w = lamP - j*lamQ equals
// lamP * P + lamQ * Q, which gives first and second derivatives of any
// weighted combination of P and Q from one routine.

#include <array>
#include <complex>
#include <cstddef>
#include <vector>

#include <Eigen/SparseCore>

#include "gridsynth/admittance.hpp"

namespace gridsynth {

// Local variable order for one pair term: (th_i, th_k, v_i, v_k).
using PairGradient = std::array<double, 4>;
using PairHessian = std::array<std::array<double, 4>, 4>;

struct PairTerm {
    Complex self;    // Y_self, contributes only through v_i^2
    Complex mutual;  // Y_mutual
    double vi = 1.0;
    double vk = 1.0;
    double dtheta = 0.0;  // th_i - th_k

    Complex power() const {
        return vi * vi * std::conj(self) + vi * vk * std::conj(mutual) * std::polar(1.0, dtheta);
    }

    // Gradient of Re(w * S).
    PairGradient gradient(Complex w) const {
        const Complex e = w * std::conj(mutual) * std::polar(1.0, dtheta);
        const double a = e.real();
        const double da = -e.imag();  // d/dtheta of Re(e)
        const double self_weight = (w * std::conj(self)).real();
        return {vi * vk * da, -vi * vk * da, 2.0 * vi * self_weight + vk * a, vi * a};
    }

    // Hessian of Re(w * S).
    PairHessian hessian(Complex w) const {
        const Complex e = w * std::conj(mutual) * std::polar(1.0, dtheta);
        const double a = e.real();
        const double da = -e.imag();
        const double dda = -a;
        const double self_weight = (w * std::conj(self)).real();
        PairHessian h{};
        h[0][0] = vi * vk * dda;
        h[1][1] = vi * vk * dda;
        h[0][1] = h[1][0] = -vi * vk * dda;
        h[0][2] = h[2][0] = vk * da;
        h[0][3] = h[3][0] = vi * da;
        h[1][2] = h[2][1] = -vk * da;
        h[1][3] = h[3][1] = -vi * da;
        h[2][3] = h[3][2] = a;
        h[2][2] = 2.0 * self_weight;
        h[3][3] = 0.0;
        return h;
    }
};

inline PairTerm from_end(const BranchAdmittance& a, const std::vector<double>& vm,
                         const std::vector<double>& va) {
    return PairTerm{a.yff, a.yft, vm[a.from], vm[a.to], va[a.from] - va[a.to]};
}

inline PairTerm to_end(const BranchAdmittance& a, const std::vector<double>& vm,
                       const std::vector<double>& va) {
    return PairTerm{a.ytt, a.ytf, vm[a.to], vm[a.from], va[a.to] - va[a.from]};
}

inline std::vector<Complex> voltage_phasors(const std::vector<double>& vm,
                                            const std::vector<double>& va) {
    std::vector<Complex> v(vm.size());
    for (std::size_t i = 0; i < vm.size(); ++i) {
        v[i] = std::polar(vm[i], va[i]);
    }
    return v;
}

// Complex bus injections V .* conj(Y V), p.u.
inline std::vector<Complex> bus_injections(const SparseComplex& y, const std::vector<Complex>& v) {
    std::vector<Complex> current(v.size(), Complex{});
    for (int k = 0; k < y.outerSize(); ++k) {
        for (SparseComplex::InnerIterator it(y, k); it; ++it) {
            current[static_cast<std::size_t>(it.row())] += it.value() * v[static_cast<std::size_t>(k)];
        }
    }
    std::vector<Complex> s(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        s[i] = v[i] * std::conj(current[i]);
    }
    return s;
}

// Visits every nonzero of dS/dVa and dS/dVm as (row, col, dS_dVa, dS_dVm).
template <class Visitor>
void visit_injection_jacobian(const SparseComplex& y, const std::vector<Complex>& v,
                              Visitor&& visit) {
    const std::size_t n = v.size();
    std::vector<Complex> current(n, Complex{});
    for (int k = 0; k < y.outerSize(); ++k) {
        for (SparseComplex::InnerIterator it(y, k); it; ++it) {
            current[static_cast<std::size_t>(it.row())] += it.value() * v[static_cast<std::size_t>(k)];
        }
    }
    const Complex j(0.0, 1.0);
    for (int kk = 0; kk < y.outerSize(); ++kk) {
        const auto k = static_cast<std::size_t>(kk);
        const Complex vk_unit = v[k] / std::abs(v[k]);
        for (SparseComplex::InnerIterator it(y, kk); it; ++it) {
            const auto i = static_cast<std::size_t>(it.row());
            Complex d_va = -j * v[i] * std::conj(it.value() * v[k]);
            Complex d_vm = v[i] * std::conj(it.value() * vk_unit);
            if (i == k) {
                d_va += j * v[i] * std::conj(current[i]);
                d_vm += std::conj(current[i]) * vk_unit;
            }
            visit(i, k, d_va, d_vm);
        }
    }
}

// Adds the Hessian of sum_i Re(w_i * S_i) with respect to (va, vm) into
// `visit(row_var, col_var, value)`, where angle variables are indexed by bus
// position and magnitude variables by n + bus position.
template <class Visitor>
void visit_injection_hessian(const SparseComplex& y, const std::vector<double>& vm,
                             const std::vector<double>& va, const std::vector<Complex>& weight,
                             Visitor&& visit) {
    const std::size_t n = vm.size();
    for (int kk = 0; kk < y.outerSize(); ++kk) {
        const auto k = static_cast<std::size_t>(kk);
        for (SparseComplex::InnerIterator it(y, kk); it; ++it) {
            const auto i = static_cast<std::size_t>(it.row());
            if (weight[i] == Complex{}) {
                continue;
            }
            if (i == k) {
                visit(n + i, n + i, 2.0 * (weight[i] * std::conj(it.value())).real());
                continue;
            }
            const PairTerm term{Complex{}, it.value(), vm[i], vm[k], va[i] - va[k]};
            const auto h = term.hessian(weight[i]);
            const std::array<std::size_t, 4> var{i, k, n + i, n + k};
            for (int p = 0; p < 4; ++p) {
                for (int q = 0; q < 4; ++q) {
                    if (h[p][q] != 0.0) {
                        visit(var[p], var[q], h[p][q]);
                    }
                }
            }
        }
    }
}

}  // namespace gridsynth
