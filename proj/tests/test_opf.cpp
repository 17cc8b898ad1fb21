#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include "gridsynth/acopf.hpp"
#include "gridsynth/analysis.hpp"
#include "gridsynth/dcopf.hpp"
#include "support.hpp"

using namespace gridsynth;
using Catch::Approx;

namespace {

Bus make_bus(int id, BusRole role) {
    Bus b;
    b.id = id;
    b.role = role;
    return b;
}

Generator make_gen(int id, int bus, double p_max, CostPoly cost) {
    Generator g;
    g.id = id;
    g.bus = bus;
    g.p_max = p_max;
    g.q_min = -500;
    g.q_max = 500;
    g.cost = cost;
    return g;
}

Branch make_branch(int id, int f, int t, double r, double x, double rate) {
    Branch br;
    br.id = id;
    br.from_bus = f;
    br.to_bus = t;
    br.r = r;
    br.x = x;
    br.rate_a = rate;
    return br;
}

// One generator, one remote load, two identical lines.
Grid parallel_pair(double load, double rate) {
    Grid g;
    g.buses = {make_bus(1, BusRole::Slack), make_bus(2, BusRole::PQ)};
    g.generators = {make_gen(1, 1, 1000, {0, 10, 0})};
    g.branches = {make_branch(1, 1, 2, 0, 0.1, rate), make_branch(2, 1, 2, 0, 0.1, rate)};
    g.loads = {{1, 2, load, 0}};
    return g;
}

// Minimum of c.pg over the DC feasible set by enumerating basic solutions:
// with m generators, every choice of m-1 tight inequalities plus the balance
// row defines a candidate vertex.
double lp_vertex_oracle(const Grid& g, bool& feasible) {
    const BusIndex index(g);
    const std::size_t n = g.buses.size();
    const std::size_t m = g.generators.size();
    const std::size_t ref = slack_position(g);
    // PTDF from the dense reduced B matrix
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (const auto& br : g.branches) {
        const auto f = static_cast<Eigen::Index>(index[br.from_bus]);
        const auto t = static_cast<Eigen::Index>(index[br.to_bus]);
        const double s = 1.0 / (br.x * br.ratio());
        b(f, f) += s;
        b(t, t) += s;
        b(f, t) -= s;
        b(t, f) -= s;
    }
    Eigen::MatrixXd reduced = b;
    reduced.row(static_cast<Eigen::Index>(ref)).setZero();
    reduced.col(static_cast<Eigen::Index>(ref)).setZero();
    reduced(static_cast<Eigen::Index>(ref), static_cast<Eigen::Index>(ref)) = 1.0;
    // theta = X * P with theta_ref = 0; the reference injection does not enter
    Eigen::MatrixXd x_inv = reduced.inverse();
    x_inv.row(static_cast<Eigen::Index>(ref)).setZero();
    x_inv.col(static_cast<Eigen::Index>(ref)).setZero();
    std::vector<double> pd(n, 0.0);
    for (const auto& l : g.loads) pd[index[l.bus]] += l.pd;

    // inequality rows a.pg <= c in MW
    std::vector<Eigen::VectorXd> rows;
    std::vector<double> rhs;
    for (std::size_t k = 0; k < m; ++k) {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m));
        e[static_cast<Eigen::Index>(k)] = 1.0;
        rows.push_back(e);
        rhs.push_back(g.generators[k].p_max);
        rows.push_back(-e);
        rhs.push_back(-g.generators[k].p_min);
    }
    for (const auto& br : g.branches) {
        if (!br.has_rate()) continue;
        const auto f = static_cast<Eigen::Index>(index[br.from_bus]);
        const auto t = static_cast<Eigen::Index>(index[br.to_bus]);
        const double s = 1.0 / (br.x * br.ratio());
        // flow = s * (X_f - X_t) . (Cg pg - pd)
        const Eigen::RowVectorXd sens = s * (x_inv.row(f) - x_inv.row(t));
        Eigen::VectorXd a(static_cast<Eigen::Index>(m));
        for (std::size_t k = 0; k < m; ++k) a[static_cast<Eigen::Index>(k)] = sens[static_cast<Eigen::Index>(index[g.generators[k].bus])];
        double offset = 0.0;
        for (std::size_t i = 0; i < n; ++i) offset -= sens[static_cast<Eigen::Index>(i)] * pd[i];
        rows.push_back(a);
        rhs.push_back(br.rate_a - offset);
        rows.push_back(-a);
        rhs.push_back(br.rate_a + offset);
    }
    double total = 0.0;
    for (double p : pd) total += p;

    double best = std::numeric_limits<double>::infinity();
    feasible = false;
    const std::size_t nr = rows.size();
    std::vector<std::size_t> pick(m - 1);
    for (std::size_t i = 0; i + 1 < m; ++i) pick[i] = i;
    while (true) {
        Eigen::MatrixXd a(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
        Eigen::VectorXd c(static_cast<Eigen::Index>(m));
        a.row(0).setOnes();
        c[0] = total;
        for (std::size_t i = 0; i + 1 < m; ++i) {
            a.row(static_cast<Eigen::Index>(i + 1)) = rows[pick[i]].transpose();
            c[static_cast<Eigen::Index>(i + 1)] = rhs[pick[i]];
        }
        Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
        if (lu.isInvertible()) {
            const Eigen::VectorXd pg = lu.solve(c);
            bool ok = true;
            for (std::size_t r = 0; r < nr && ok; ++r) ok = rows[r].dot(pg) <= rhs[r] + 1e-7;
            if (ok) {
                feasible = true;
                double cost = 0.0;
                for (std::size_t k = 0; k < m; ++k) cost += g.generators[k].cost(pg[static_cast<Eigen::Index>(k)]);
                best = std::min(best, cost);
            }
        }
        std::size_t i = m - 1;
        while (i > 0 && pick[i - 1] == nr - (m - 1) + i - 1) --i;
        if (i == 0) break;
        ++pick[i - 1];
        for (std::size_t j = i; j < m - 1; ++j) pick[j] = pick[j - 1] + 1;
    }
    return best;
}

}  // namespace

TEST_CASE("single-bus AC-OPF serves the local load", "[opf]") {
    Grid g;
    g.buses = {make_bus(1, BusRole::Slack)};
    g.generators = {make_gen(1, 1, 500, {0.01, 20, 100})};
    g.loads = {{1, 1, 120, 30}};
    const auto sol = solve_ac_opf(g);
    REQUIRE(sol.feasible);
    CHECK(sol.pg[0] == Approx(120.0).margin(1e-4));
    CHECK(sol.qg[0] == Approx(30.0).margin(1e-4));
    CHECK(sol.objective == Approx(0.01 * 120 * 120 + 20 * 120 + 100).epsilon(1e-6));
}

TEST_CASE("merit order with a capacity-limited cheap unit", "[opf]") {
    Grid g;
    g.buses = {make_bus(1, BusRole::Slack), make_bus(2, BusRole::PQ)};
    g.generators = {make_gen(1, 1, 60, {0, 10, 0}), make_gen(2, 1, 500, {0, 20, 0})};
    g.branches = {make_branch(1, 1, 2, 0.01, 0.1, 0)};
    g.loads = {{1, 2, 100, 20}};
    const auto sol = solve_ac_opf(g);
    REQUIRE(sol.feasible);
    CHECK(sol.pg[0] == Approx(60.0).margin(1e-3));
    const double losses = sol.branch_flows[0].p_from + sol.branch_flows[0].p_to;
    CHECK(losses > 0.0);
    CHECK(sol.pg[1] == Approx(40.0 + losses).margin(1e-3));
}

TEST_CASE("3-bus AC-OPF against the dispatch mesh", "[opf]") {
    const Grid g = testing::load_case("case3_mesh.m");
    const auto sol = solve_ac_opf(g);
    REQUIRE(sol.feasible);
    const auto mesh = testing::mesh_opf_oracle(g);
    REQUIRE(std::isfinite(mesh.objective));
    // the mesh only samples feasible points, so it cannot beat the optimum
    CHECK(sol.objective <= mesh.objective * (1 + 1e-6));
    CHECK(std::abs(sol.objective - mesh.objective) / mesh.objective <= 0.005);
}

TEST_CASE("DC-OPF with one generator serves the load exactly", "[opf]") {
    Grid g = parallel_pair(100, 0);
    g.loads.push_back({2, 1, 25, 0});
    const auto sol = solve_dc_opf(g);
    REQUIRE(sol.feasible);
    CHECK(sol.pg[0] == Approx(125.0).margin(1e-6));
    CHECK(sol.objective == Approx(1250.0).margin(1e-4));
}

TEST_CASE("parallel lines carry exactly their capacity", "[opf]") {
    const Grid g = parallel_pair(100, 50);
    const auto sol = solve_dc_opf(g);
    REQUIRE(sol.feasible);
    CHECK(sol.flows[0] == Approx(50.0).margin(1e-4));
    CHECK(sol.flows[1] == Approx(50.0).margin(1e-4));

    Grid one = g;
    one.branches[1].status = Status::OutOfService;
    CHECK_FALSE(solve_dc_opf(one).feasible);
}

TEST_CASE("DC-OPF matches vertex enumeration on random 5-bus LPs", "[opf]") {
    int feasible_count = 0;
    for (std::uint64_t i = 0; i < 30; ++i) {
        Rng rng = derive_scenario_rng(8, i, 0, Stream::Test);
        testing::RandomGridOptions o;
        o.buses = 5;
        o.extra_branches = 3;
        Grid g = testing::random_grid(rng, o);
        for (auto& br : g.branches) {
            br.shift = 0.0;
            br.rate_a = rng.uniform(20.0, 120.0);
        }
        g.generators.clear();
        for (int k = 0; k < 3; ++k) {
            Generator gen = make_gen(k + 1, g.buses[static_cast<std::size_t>(2 * k)].id, 0.0, {});
            gen.p_max = rng.uniform(40, 150);
            gen.p_min = rng.uniform(0, 10);
            gen.cost = {0.0, rng.uniform(5, 40), rng.uniform(0, 50)};
            g.generators.push_back(gen);
        }
        bool feasible = false;
        const double oracle = lp_vertex_oracle(g, feasible);
        const auto sol = solve_dc_opf(g);
        INFO("instance " << i);
        CHECK(sol.feasible == feasible);
        if (feasible && sol.feasible) {
            ++feasible_count;
            CHECK(sol.objective == Approx(oracle).epsilon(1e-5));
        }
    }
    CHECK(feasible_count >= 10);
}

TEST_CASE("bundled fixtures: objectives, feasibility and bounds", "[opf]") {
    // Reference objectives of the standard cases ($/h)
    const std::vector<std::pair<std::string, double>> expected{
        {"case5.m", 17551.89}, {"case9.m", 5296.69}, {"case14.m", 8081.53},
        {"case24_ieee_rts.m", 63352.21}, {"case30.m", 576.89}, {"case24_tight.m", 65479.51}};
    // published to two decimals
    for (const auto& [name, objective] : expected) {
        INFO(name);
        const Grid g = testing::load_case(name);
        const OpfOptions opts;
        const auto sol = solve_ac_opf(g, opts);
        REQUIRE(sol.feasible);
        CHECK(sol.objective == Approx(objective).margin(0.005));
        CHECK(sol.stationarity <= opts.tol);
        CHECK(sol.max_mismatch <= opts.tol);
        CHECK(detect_violations(g, sol, 1e-5).empty());

        const auto dc = solve_dc_opf(g);
        REQUIRE(dc.feasible);
        CHECK(sol.objective >= 0.95 * dc.objective);
    }
}

TEST_CASE("scaling every cost leaves the dispatch unchanged", "[opf]") {
    const Grid g = testing::load_case("case9.m");
    Grid scaled = g;
    for (auto& gen : scaled.generators) {
        gen.cost.c2 *= 7.0;
        gen.cost.c1 *= 7.0;
        gen.cost.c0 *= 7.0;
    }
    const auto a = solve_ac_opf(g);
    const auto b = solve_ac_opf(scaled);
    REQUIRE(a.feasible);
    REQUIRE(b.feasible);
    CHECK(b.objective == Approx(7.0 * a.objective).epsilon(1e-6));
    for (std::size_t k = 0; k < g.generators.size(); ++k) CHECK(b.pg[k] == Approx(a.pg[k]).margin(1e-3));
}

TEST_CASE("infeasible AC-OPF is reported, not thrown", "[opf]") {
    Grid g = testing::load_case("case3_mesh.m");
    for (auto& l : g.loads) l.pd *= 10.0;
    const auto sol = solve_ac_opf(g, OpfOptions{1e-6, 60});
    CHECK_FALSE(sol.feasible);
    CHECK_FALSE(sol.reason.empty());
}
