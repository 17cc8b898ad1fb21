#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include "gridsynth/acpf.hpp"
#include "gridsynth/dcpf.hpp"
#include "support.hpp"

using namespace gridsynth;
using Catch::Approx;

namespace {

// Dense bus admittance assembled straight from the pi-model formulas.
Eigen::MatrixXcd dense_ybus(const Grid& g) {
    const BusIndex index(g);
    const auto n = static_cast<Eigen::Index>(g.buses.size());
    Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n, n);
    for (const auto& br : g.branches) {
        if (!br.in_service()) continue;
        const auto f = static_cast<Eigen::Index>(index[br.from_bus]);
        const auto t = static_cast<Eigen::Index>(index[br.to_bus]);
        const Complex ys = 1.0 / Complex(br.r, br.x);
        const Complex bc(0.0, br.b_charge / 2.0);
        const double a = br.tap == 0.0 ? 1.0 : br.tap;
        const Complex tap = a * Complex(std::cos(br.shift), std::sin(br.shift));
        y(f, f) += (ys + bc) / (a * a);
        y(f, t) += -ys / std::conj(tap);
        y(t, f) += -ys / tap;
        y(t, t) += ys + bc;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        y(i, i) += Complex(g.buses[static_cast<std::size_t>(i)].shunt_g, g.buses[static_cast<std::size_t>(i)].shunt_b);
    }
    return y;
}

Eigen::MatrixXcd to_dense(const SparseComplex& s) { return Eigen::MatrixXcd(s); }

Grid two_bus(double r, double x, double pd, double qd) {
    Grid g;
    Bus a;
    a.id = 1;
    a.role = BusRole::Slack;
    Bus b;
    b.id = 2;
    g.buses = {a, b};
    Branch br;
    br.id = 1;
    br.from_bus = 1;
    br.to_bus = 2;
    br.r = r;
    br.x = x;
    g.branches = {br};
    Generator gen;
    gen.id = 1;
    gen.bus = 1;
    gen.p_max = 1000;
    gen.q_min = -1000;
    gen.q_max = 1000;
    g.generators = {gen};
    g.loads = {{1, 2, pd, qd}};
    return g;
}

double bisect(const std::function<double(double)>& f, double lo, double hi) {
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        if ((f(lo) < 0) == (f(mid) < 0)) lo = mid; else hi = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("admittance of a single reactive branch", "[powerflow]") {
    const Grid g = two_bus(0.0, 0.1, 0.0, 0.0);
    const auto y = to_dense(build_admittance(g).y);
    CHECK(std::abs(y(0, 1) - Complex(0.0, 10.0)) < 1e-12);
    CHECK(std::abs(y(1, 0) - Complex(0.0, 10.0)) < 1e-12);
    CHECK(std::abs(y(0, 0) - Complex(0.0, -10.0)) < 1e-12);
    CHECK(std::abs(y(1, 1) - Complex(0.0, -10.0)) < 1e-12);
}

TEST_CASE("out-of-service branch contributes nothing", "[powerflow]") {
    Rng rng = derive_scenario_rng(1, 0, 0, Stream::Test);
    Grid g = testing::random_grid(rng);
    Grid without = g;
    without.branches.pop_back();
    g.branches.back().status = Status::OutOfService;
    const auto a = to_dense(build_admittance(g).y);
    const auto b = to_dense(build_admittance(without).y);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sparse admittance matches the dense oracle", "[powerflow]") {
    for (std::uint64_t i = 0; i < 20; ++i) {
        Rng rng = derive_scenario_rng(2, i, 0, Stream::Test);
        Grid g = testing::random_grid(rng);
        g.branches[1].status = Status::OutOfService;
        CHECK((to_dense(build_admittance(g).y) - dense_ybus(g)).cwiseAbs().maxCoeff() < 1e-12);
    }
    SECTION("rows sum to zero without shunts, charging or taps") {
        Rng rng = derive_scenario_rng(2, 99, 0, Stream::Test);
        testing::RandomGridOptions o;
        o.shunts = o.charging = o.taps = false;
        const auto y = to_dense(build_admittance(testing::random_grid(rng, o)).y);
        CHECK(y.rowwise().sum().cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("two-bus AC power flow against the closed form", "[powerflow]") {
    // Lossless line, slack at 1.0/0: Q balance gives V2 = cos(th), P balance 5 sin(2 th) = -0.5.
    const Grid g = two_bus(0.0, 0.1, 50.0, 0.0);
    const auto sol = solve_ac_pf(g);
    REQUIRE(sol.converged);
    const double th = bisect([](double t) { return 5.0 * std::sin(2.0 * t) + 0.5; }, -std::numbers::pi / 4, 0.0);
    CHECK(sol.va[1] == Approx(th).margin(1e-9));
    CHECK(sol.vm[1] == Approx(std::cos(th)).margin(1e-9));
    CHECK(sol.pg[0] == Approx(50.0).margin(1e-6));
    CHECK(sol.branch_flows[0].p_from == Approx(50.0).margin(1e-6));
    CHECK(sol.branch_flows[0].p_to == Approx(-50.0).margin(1e-6));
}

TEST_CASE("no load gives the flat solution", "[powerflow]") {
    Rng rng = derive_scenario_rng(3, 0, 0, Stream::Test);
    testing::RandomGridOptions o;
    o.shunts = o.charging = o.taps = false;
    Grid g = testing::random_grid(rng, o);
    g.loads.clear();
    for (auto& gen : g.generators) {
        gen.pg = 0.0;
        gen.vg = 1.0;
    }
    const auto sol = solve_ac_pf(g);
    REQUIRE(sol.converged);
    CHECK(sol.iterations <= 1);
    for (std::size_t i = 0; i < g.buses.size(); ++i) {
        CHECK(sol.vm[i] == Approx(1.0).margin(1e-12));
        CHECK(sol.va[i] == Approx(0.0).margin(1e-12));
    }
    for (const auto& f : sol.branch_flows) {
        CHECK(std::abs(f.p_from) + std::abs(f.q_from) + std::abs(f.p_to) + std::abs(f.q_to) < 1e-9);
    }
}

TEST_CASE("fixture solutions satisfy the dense power balance", "[powerflow]") {
    for (const auto& name : testing::bundled_cases()) {
        INFO(name);
        const Grid g = testing::load_case(name);
        const auto sol = solve_ac_pf(g);
        REQUIRE(sol.converged);
        CHECK(sol.iterations <= 6);
        const BusIndex index(g);
        const auto y = dense_ybus(g);
        const auto n = static_cast<Eigen::Index>(g.buses.size());
        Eigen::VectorXcd v(n);
        for (Eigen::Index i = 0; i < n; ++i) v[i] = std::polar(sol.vm[static_cast<std::size_t>(i)], sol.va[static_cast<std::size_t>(i)]);
        const Eigen::VectorXcd s = v.cwiseProduct((y * v).conjugate());
        Eigen::VectorXcd net = Eigen::VectorXcd::Zero(n);
        for (const auto& l : g.loads) net[static_cast<Eigen::Index>(index[l.bus])] -= Complex(l.pd, l.qd) / g.base_mva;
        for (std::size_t k = 0; k < g.generators.size(); ++k) {
            if (!g.generators[k].in_service()) continue;
            net[static_cast<Eigen::Index>(index[g.generators[k].bus])] += Complex(sol.pg[k], sol.qg[k]) / g.base_mva;
        }
        CHECK((s - net).cwiseAbs().maxCoeff() < 1e-8);

        // non-reference generators keep their setpoints, PV voltages hold
        const std::size_t ref = reference_position(g, index);
        for (std::size_t k = 0; k < g.generators.size(); ++k) {
            const auto& gen = g.generators[k];
            if (!gen.in_service() || index[gen.bus] == ref) continue;
            CHECK(sol.pg[k] == Approx(gen.pg).margin(1e-9));
            CHECK(sol.vm[index[gen.bus]] == Approx(gen.vg).margin(1e-9));
        }

        // losses: flows into both ends equal generation - demand - shunt draw
        double losses = 0.0;
        for (const auto& f : sol.branch_flows) losses += f.p_from + f.p_to;
        double balance = 0.0;
        for (std::size_t k = 0; k < g.generators.size(); ++k) balance += sol.pg[k];
        for (const auto& l : g.loads) balance -= l.pd;
        for (std::size_t i = 0; i < g.buses.size(); ++i) balance -= g.buses[i].shunt_g * sol.vm[i] * sol.vm[i] * g.base_mva;
        CHECK(losses == Approx(balance).margin(1e-5));
        CHECK(losses >= 0.0);
    }
}

TEST_CASE("reactive split respects limits", "[powerflow]") {
    Grid g = two_bus(0.0, 0.1, 0.0, 0.0);
    Generator second = g.generators[0];
    second.id = 2;
    g.generators[0].q_min = -10;
    g.generators[0].q_max = 30;
    second.q_min = 0;
    second.q_max = 20;
    g.generators.push_back(second);
    std::vector<double> qg(2, 0.0);
    acpf_detail::split_reactive(g, {0, 1}, 40.0, qg);
    // q_min sum -10, ranges 40 and 20: the remaining 50 splits 2:1
    CHECK(qg[0] == Approx(-10.0 + 50.0 * 2.0 / 3.0));
    CHECK(qg[1] == Approx(50.0 / 3.0));
    CHECK(qg[0] + qg[1] == Approx(40.0));
}

TEST_CASE("DC power flow on two buses", "[powerflow]") {
    const Grid g = two_bus(0.0, 0.1, 0.0, 0.0);
    const auto sol = solve_dc_pf(g, {0.0, -100.0});
    CHECK(sol.va[1] == Approx(-0.1).margin(1e-12));
    CHECK(sol.flows[0] == Approx(100.0).margin(1e-9));
    CHECK(sol.reference_injection == Approx(100.0).margin(1e-9));

    const auto zero = solve_dc_pf(g, {0.0, 0.0});
    CHECK(zero.va == std::vector<double>{0.0, 0.0});
}

TEST_CASE("DC power flow matches a dense solve", "[powerflow]") {
    for (std::uint64_t i = 0; i < 100; ++i) {
        Rng rng = derive_scenario_rng(4, i, 0, Stream::Test);
        const Grid g = testing::random_grid(rng);
        const BusIndex index(g);
        const std::size_t n = g.buses.size();
        std::vector<double> inj(n);
        for (auto& p : inj) p = rng.uniform(-100.0, 100.0);

        // dense B and phase-shift injections
        const std::size_t ref = slack_position(g);
        Eigen::MatrixXd b = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
        Eigen::VectorXd shift = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
        for (const auto& br : g.branches) {
            const auto f = static_cast<Eigen::Index>(index[br.from_bus]);
            const auto t = static_cast<Eigen::Index>(index[br.to_bus]);
            const double s = 1.0 / (br.x * (br.tap == 0.0 ? 1.0 : br.tap));
            b(f, f) += s;
            b(t, t) += s;
            b(f, t) -= s;
            b(t, f) -= s;
            shift[f] -= s * br.shift;
            shift[t] += s * br.shift;
        }
        std::vector<Eigen::Index> keep;
        for (std::size_t k = 0; k < n; ++k) {
            if (k != ref) keep.push_back(static_cast<Eigen::Index>(k));
        }
        const auto m = static_cast<Eigen::Index>(keep.size());
        Eigen::MatrixXd br_red(m, m);
        Eigen::VectorXd rhs(m);
        for (Eigen::Index r = 0; r < m; ++r) {
            rhs[r] = inj[static_cast<std::size_t>(keep[static_cast<std::size_t>(r)])] / g.base_mva - shift[keep[static_cast<std::size_t>(r)]];
            for (Eigen::Index c = 0; c < m; ++c) br_red(r, c) = b(keep[static_cast<std::size_t>(r)], keep[static_cast<std::size_t>(c)]);
        }
        const Eigen::VectorXd theta = br_red.fullPivLu().solve(rhs);

        const auto sol = solve_dc_pf(g, inj);
        INFO("instance " << i);
        CHECK(sol.va[ref] == 0.0);
        double err = 0.0;
        for (Eigen::Index r = 0; r < m; ++r) err = std::max(err, std::abs(sol.va[static_cast<std::size_t>(keep[static_cast<std::size_t>(r)])] - theta[r]));
        CHECK(err <= 1e-9);

        // flows conserve injections at every non-reference bus
        std::vector<double> net(n, 0.0);
        for (std::size_t e = 0; e < g.branches.size(); ++e) {
            net[index[g.branches[e].from_bus]] += sol.flows[e];
            net[index[g.branches[e].to_bus]] -= sol.flows[e];
        }
        double cons = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            if (k != ref) cons = std::max(cons, std::abs(net[k] - inj[k]) / g.base_mva);
        }
        CHECK(cons <= 1e-9);
        CHECK(net[ref] == Approx(sol.reference_injection).margin(1e-7));
    }
}

TEST_CASE("DC power flow on a disconnected grid", "[powerflow]") {
    Grid g = two_bus(0.0, 0.1, 0.0, 0.0);
    g.branches[0].status = Status::OutOfService;
    CHECK_THROWS_AS(solve_dc_pf(g, {0.0, -10.0}), SingularSystem);
}

TEST_CASE("branch loading", "[powerflow]") {
    CHECK(branch_loading(BranchFlow{80.0, 60.0, -79.0, -58.0}, 100.0) == Approx(1.0));
    CHECK(branch_loading(BranchFlow{-50.0, 0.0, 80.0, 60.0}, 50.0) == Approx(2.0));
    CHECK(branch_loading(BranchFlow{80.0, 60.0, 0.0, 0.0}, 0.0) == 0.0);
}

TEST_CASE("pair term derivatives agree with finite differences", "[powerflow]") {
    Rng rng = derive_scenario_rng(6, 0, 0, Stream::Test);
    for (int trial = 0; trial < 20; ++trial) {
        PairTerm t{Complex(rng.uniform(-2, 2), rng.uniform(-2, 2)), Complex(rng.uniform(-5, 5), rng.uniform(-5, 5)),
                   rng.uniform(0.9, 1.1), rng.uniform(0.9, 1.1), rng.uniform(-0.5, 0.5)};
        const Complex w(rng.uniform(-1, 1), rng.uniform(-1, 1));
        auto f = [&](std::array<double, 4> x) {
            PairTerm p = t;
            p.dtheta = x[0] - x[1];
            p.vi = x[2];
            p.vk = x[3];
            return (w * p.power()).real();
        };
        const std::array<double, 4> x0{t.dtheta, 0.0, t.vi, t.vk};
        const double h = 1e-5;
        const auto grad = t.gradient(w);
        const auto hess = t.hessian(w);
        for (int a = 0; a < 4; ++a) {
            auto xp = x0, xm = x0;
            xp[a] += h;
            xm[a] -= h;
            CHECK(grad[a] == Approx((f(xp) - f(xm)) / (2 * h)).margin(1e-8));
            for (int b = 0; b < 4; ++b) {
                auto pp = x0, pm = x0, mp = x0, mm = x0;
                pp[a] += h; pp[b] += h;
                pm[a] += h; pm[b] -= h;
                mp[a] -= h; mp[b] += h;
                mm[a] -= h; mm[b] -= h;
                const double fd = (f(pp) - f(pm) - f(mp) + f(mm)) / (4 * h * h);
                CHECK(hess[a][b] == Approx(fd).margin(1e-4));
            }
        }
    }
}

TEST_CASE("injection Jacobian and Hessian agree with finite differences", "[powerflow]") {
    Rng rng = derive_scenario_rng(7, 0, 0, Stream::Test);
    testing::RandomGridOptions o;
    o.buses = 5;
    o.extra_branches = 3;
    const Grid g = testing::random_grid(rng, o);
    const auto adm = build_admittance(g);
    const std::size_t n = g.buses.size();
    std::vector<double> vm(n), va(n);
    std::vector<Complex> w(n);
    for (std::size_t i = 0; i < n; ++i) {
        vm[i] = rng.uniform(0.95, 1.05);
        va[i] = rng.uniform(-0.3, 0.3);
        w[i] = Complex(rng.uniform(-1, 1), rng.uniform(-1, 1));
    }
    auto injections = [&](const std::vector<double>& m, const std::vector<double>& a) {
        return bus_injections(adm.y, voltage_phasors(m, a));
    };
    auto objective = [&](const std::vector<double>& x) {
        const std::vector<double> a(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(n));
        const std::vector<double> m(x.begin() + static_cast<std::ptrdiff_t>(n), x.end());
        const auto s = injections(m, a);
        double f = 0.0;
        for (std::size_t i = 0; i < n; ++i) f += (w[i] * s[i]).real();
        return f;
    };
    const double h = 1e-5;

    Eigen::MatrixXcd jac_va = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    Eigen::MatrixXcd jac_vm = jac_va;
    visit_injection_jacobian(adm.y, voltage_phasors(vm, va), [&](std::size_t i, std::size_t k, Complex dva, Complex dvm) {
        jac_va(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) += dva;
        jac_vm(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) += dvm;
    });
    for (std::size_t k = 0; k < n; ++k) {
        auto ap = va, am = va, mp = vm, mm = vm;
        ap[k] += h;
        am[k] -= h;
        mp[k] += h;
        mm[k] -= h;
        const auto sap = injections(vm, ap), sam = injections(vm, am);
        const auto smp = injections(mp, va), smm = injections(mm, va);
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(std::abs(jac_va(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) - (sap[i] - sam[i]) / (2 * h)) < 1e-7);
            CHECK(std::abs(jac_vm(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) - (smp[i] - smm[i]) / (2 * h)) < 1e-7);
        }
    }

    Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(2 * n), static_cast<Eigen::Index>(2 * n));
    visit_injection_hessian(adm.y, vm, va, w, [&](std::size_t r, std::size_t c, double v) {
        hess(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) += v;
    });
    std::vector<double> x0(va);
    x0.insert(x0.end(), vm.begin(), vm.end());
    for (std::size_t a = 0; a < 2 * n; ++a) {
        for (std::size_t b = 0; b < 2 * n; ++b) {
            auto pp = x0, pm = x0, mp = x0, mm = x0;
            pp[a] += h; pp[b] += h;
            pm[a] += h; pm[b] -= h;
            mp[a] -= h; mp[b] += h;
            mm[a] -= h; mm[b] -= h;
            const double fd = (objective(pp) - objective(pm) - objective(mp) + objective(mm)) / (4 * h * h);
            CHECK(hess(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) == Approx(fd).margin(1e-3));
        }
    }
}
