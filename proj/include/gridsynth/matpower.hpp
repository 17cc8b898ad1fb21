#pragma once

// Reader and writer for the MATPOWER `.m` case format (version 2 column
// layout). Supported fields: baseMVA, bus, gen, branch, gencost. Anything
// else is skipped and reported through the optional warnings sink.

#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "gridsynth/error.hpp"
#include "gridsynth/grid.hpp"
#include "gridsynth/text.hpp"

namespace gridsynth {

namespace matpower_detail {

using Matrix = std::vector<std::vector<double>>;

inline constexpr double kDegToRad = std::numbers::pi / 180.0;
inline constexpr double kRadToDeg = 180.0 / std::numbers::pi;

// Drops `%` comments, leaving quoted strings intact.
inline std::string strip_comments(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool in_quote = false;
    bool in_comment = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (c == '\n') {
            in_comment = false;
            in_quote = false;
            out.push_back(c);
            continue;
        }
        if (in_comment) {
            continue;
        }
        if (c == '\'' && !in_quote) {
            // A quote directly after an identifier or closing bracket is a transpose.
            const char prev = out.empty() ? ' ' : out.back();
            const bool transpose = std::isalnum(static_cast<unsigned char>(prev)) || prev == ']' ||
                                   prev == ')' || prev == '_' || prev == '.';
            in_quote = !transpose;
        } else if (c == '\'' && in_quote) {
            in_quote = false;
        } else if (c == '%' && !in_quote) {
            in_comment = true;
            continue;
        }
        out.push_back(c);
    }
    return out;
}

// Removes MATLAB `...` continuations along with the rest of their line.
inline std::string join_continuations(std::string_view body) {
    std::string out;
    std::size_t i = 0;
    while (i < body.size()) {
        if (body.compare(i, 3, "...") == 0) {
            const auto eol = body.find('\n', i);
            i = eol == std::string_view::npos ? body.size() : eol + 1;
            out.push_back(' ');
            continue;
        }
        out.push_back(body[i++]);
    }
    return out;
}

inline Matrix parse_matrix(std::string_view name, std::string_view body) {
    const std::string joined = join_continuations(body);
    Matrix rows;
    std::string_view rest = joined;
    std::size_t width = 0;
    while (!rest.empty()) {
        const auto stop = rest.find_first_of(";\n");
        std::string_view row = rest.substr(0, stop);
        rest = stop == std::string_view::npos ? std::string_view{} : rest.substr(stop + 1);
        std::vector<double> cells;
        std::size_t pos = 0;
        while (pos < row.size()) {
            const auto start = row.find_first_not_of(" \t\r,", pos);
            if (start == std::string_view::npos) {
                break;
            }
            auto end = row.find_first_of(" \t\r,", start);
            if (end == std::string_view::npos) {
                end = row.size();
            }
            const auto token = row.substr(start, end - start);
            const auto value = parse_double(token);
            if (!value) {
                throw MalformedCase("non-numeric cell '" + std::string(token) + "' in " +
                                    std::string(name));
            }
            cells.push_back(*value);
            pos = end;
        }
        if (cells.empty()) {
            continue;
        }
        if (width == 0) {
            width = cells.size();
        } else if (cells.size() != width) {
            throw MalformedCase("ragged row in " + std::string(name));
        }
        rows.push_back(std::move(cells));
    }
    return rows;
}

struct Assignments {
    std::map<std::string, Matrix> matrices;
    std::map<std::string, double> scalars;
    std::vector<std::string> warnings;
};

inline Assignments collect(std::string_view text) {
    const std::string clean = strip_comments(text);
    std::string_view src = clean;
    Assignments out;
    std::size_t i = 0;
    auto skip_space = [&] {
        while (i < src.size() && std::isspace(static_cast<unsigned char>(src[i]))) {
            ++i;
        }
    };
    auto skip_line = [&] {
        const auto eol = src.find('\n', i);
        i = eol == std::string_view::npos ? src.size() : eol + 1;
    };
    auto find_closing = [&](char open, char close) {
        int depth = 0;
        for (std::size_t j = i; j < src.size(); ++j) {
            if (src[j] == open) {
                ++depth;
            } else if (src[j] == close) {
                if (--depth == 0) {
                    return j;
                }
            }
        }
        throw MalformedCase(std::string("unbalanced '") + open + "'");
    };

    while (true) {
        skip_space();
        if (i >= src.size()) {
            break;
        }
        if (src[i] == ']' || src[i] == '}') {
            throw MalformedCase(std::string("unbalanced '") + src[i] + "'");
        }
        const std::size_t start = i;
        while (i < src.size() && (std::isalnum(static_cast<unsigned char>(src[i])) ||
                                  src[i] == '_' || src[i] == '.')) {
            ++i;
        }
        const std::string lhs(src.substr(start, i - start));
        if (lhs.empty() || lhs == "function") {
            skip_line();
            continue;
        }
        skip_space();
        if (i >= src.size() || src[i] != '=') {
            skip_line();
            continue;
        }
        ++i;
        skip_space();
        const auto dot = lhs.rfind('.');
        const std::string field = dot == std::string::npos ? lhs : lhs.substr(dot + 1);
        if (i < src.size() && src[i] == '[') {
            const std::size_t close = find_closing('[', ']');
            const auto body = src.substr(i + 1, close - i - 1);
            if (body.find('[') != std::string_view::npos) {
                throw MalformedCase("nested '[' in " + field);
            }
            i = close + 1;
            if (field == "bus" || field == "gen" || field == "branch" || field == "gencost" ||
                field == "baseMVA") {
                out.matrices[field] = parse_matrix(field, body);
            } else {
                out.warnings.push_back("ignoring unsupported field '" + lhs + "'");
            }
        } else if (i < src.size() && src[i] == '{') {
            i = find_closing('{', '}') + 1;
            out.warnings.push_back("ignoring unsupported field '" + lhs + "'");
        } else {
            auto eos = src.find_first_of(";\n", i);
            if (eos == std::string_view::npos) {
                eos = src.size();
            }
            const auto rhs = trim(src.substr(i, eos - i));
            i = eos;
            if (field == "baseMVA") {
                const auto v = parse_double(rhs);
                if (!v) {
                    throw MalformedCase("non-numeric baseMVA '" + std::string(rhs) + "'");
                }
                out.scalars[field] = *v;
            } else if (field != "version") {
                out.warnings.push_back("ignoring unsupported field '" + lhs + "'");
            }
        }
        skip_space();
        if (i < src.size() && src[i] == ';') {
            ++i;
        }
    }
    return out;
}

inline const Matrix& require(const Assignments& a, const std::string& name, std::size_t min_cols) {
    auto it = a.matrices.find(name);
    if (it == a.matrices.end()) {
        throw MalformedCase("missing required matrix '" + name + "'");
    }
    for (const auto& row : it->second) {
        if (row.size() < min_cols) {
            throw MalformedCase("matrix '" + name + "' needs at least " +
                                std::to_string(min_cols) + " columns");
        }
    }
    return it->second;
}

inline int as_id(double v, std::string_view what) {
    if (v != std::floor(v) || std::abs(v) > 2e9) {
        throw MalformedCase("non-integer " + std::string(what));
    }
    return static_cast<int>(v);
}

inline CostPoly cost_from_row(const std::vector<double>& row, int gen_id,
                              std::vector<std::string>& warnings) {
    const std::string name = "gencost row for generator " + std::to_string(gen_id);
    if (row.size() < 4) {
        throw MalformedCase(name + " is too short");
    }
    const int model = as_id(row[0], "gencost model");
    const int n = as_id(row[3], "gencost count");
    if (n < 0) {
        throw MalformedCase(name + " has negative coefficient count");
    }
    if (model == 2) {
        if (row.size() < 4 + static_cast<std::size_t>(n)) {
            throw MalformedCase(name + " is missing coefficients");
        }
        CostPoly cost{0.0, 0.0, 0.0};
        const double* c = row.data() + 4;  // highest order first
        if (n >= 1) cost.c0 = c[n - 1];
        if (n >= 2) cost.c1 = c[n - 2];
        if (n >= 3) cost.c2 = c[n - 3];
        if (n > 3) {
            warnings.push_back(name + " has degree " + std::to_string(n - 1) +
                               ", truncated to quadratic");
        }
        return cost;
    }
    if (model == 1) {
        if (n < 2 || row.size() < 4 + 2 * static_cast<std::size_t>(n)) {
            throw MalformedCase(name + " has too few piecewise-linear points");
        }
        const double x0 = row[4], y0 = row[5];
        const double x1 = row[4 + 2 * (n - 1)], y1 = row[5 + 2 * (n - 1)];
        if (x1 == x0) {
            throw MalformedCase(name + " has a degenerate piecewise-linear cost");
        }
        const double slope = (y1 - y0) / (x1 - x0);
        warnings.push_back(name + " is piecewise linear, replaced by its end-to-end secant");
        return CostPoly{0.0, slope, y0 - slope * x0};
    }
    throw MalformedCase(name + " has unknown cost model " + std::to_string(model));
}

inline double angle_limit(double degrees, double unlimited) {
    if (degrees == 0.0 || std::abs(degrees) >= 360.0) {
        return unlimited;
    }
    return degrees * kDegToRad;
}

inline std::string angle_limit_text(double radians) {
    if (radians <= -kUnlimitedAngle) {
        return "-360";
    }
    if (radians >= kUnlimitedAngle) {
        return "360";
    }
    return format_double(radians * kRadToDeg);
}

}  // namespace matpower_detail

// Parses MATPOWER case text. Loads are synthesized from the bus Pd/Qd columns,
// one per bus with nonzero demand. Bus shunts are converted to p.u., angles to
// radians. Angle limits of 0 or beyond +/-360 degrees mean "unlimited".
inline Grid parse_matpower(std::string_view text, std::vector<std::string>* warnings = nullptr) {
    using namespace matpower_detail;
    Assignments a = collect(text);

    Grid grid;
    if (auto it = a.scalars.find("baseMVA"); it != a.scalars.end()) {
        grid.base_mva = it->second;
    } else if (auto m = a.matrices.find("baseMVA");
               m != a.matrices.end() && m->second.size() == 1 && m->second[0].size() == 1) {
        grid.base_mva = m->second[0][0];
    } else {
        throw MalformedCase("missing required scalar 'baseMVA'");
    }
    if (!(grid.base_mva > 0.0)) {
        throw MalformedCase("baseMVA must be positive");
    }

    const Matrix& bus = require(a, "bus", 13);
    const Matrix& gen = require(a, "gen", 10);
    const Matrix& branch = require(a, "branch", 11);

    int load_id = 0;
    for (const auto& row : bus) {
        Bus b;
        b.id = as_id(row[0], "bus id");
        switch (as_id(row[1], "bus type")) {
            case 1: b.role = BusRole::PQ; break;
            case 2: b.role = BusRole::PV; break;
            case 3: b.role = BusRole::Slack; break;
            case 4: b.role = BusRole::Isolated; break;
            default: throw MalformedCase("bus " + std::to_string(b.id) + " has unknown type");
        }
        b.shunt_g = row[4] / grid.base_mva;
        b.shunt_b = row[5] / grid.base_mva;
        b.base_kv = row[9];
        b.vm_max = row[11];
        b.vm_min = row[12];
        grid.buses.push_back(b);
        if (row[2] != 0.0 || row[3] != 0.0) {
            grid.loads.push_back(Load{++load_id, b.id, row[2], row[3]});
        }
    }

    const BusIndex index(grid);
    int gen_id = 0;
    for (const auto& row : gen) {
        Generator g;
        g.id = ++gen_id;
        g.bus = as_id(row[0], "generator bus");
        if (!index.contains(g.bus)) {
            throw DanglingReference("generator " + std::to_string(g.id) +
                                    " references unknown bus " + std::to_string(g.bus));
        }
        g.pg = row[1];
        g.qg = row[2];
        g.q_max = row[3];
        g.q_min = row[4];
        g.vg = row[5];
        g.status = row[7] > 0.0 ? Status::InService : Status::OutOfService;
        g.p_max = row[8];
        g.p_min = row[9];
        grid.generators.push_back(g);
    }

    int branch_id = 0;
    for (const auto& row : branch) {
        Branch br;
        br.id = ++branch_id;
        br.from_bus = as_id(row[0], "branch from bus");
        br.to_bus = as_id(row[1], "branch to bus");
        for (int end : {br.from_bus, br.to_bus}) {
            if (!index.contains(end)) {
                throw DanglingReference("branch " + std::to_string(br.id) +
                                        " references unknown bus " + std::to_string(end));
            }
        }
        br.r = row[2];
        br.x = row[3];
        br.b_charge = row[4];
        br.rate_a = row[5];
        br.tap = row[8];
        br.shift = row[9] * kDegToRad;
        br.status = row[10] > 0.0 ? Status::InService : Status::OutOfService;
        if (row.size() >= 13) {
            br.ang_min = angle_limit(row[11], -kUnlimitedAngle);
            br.ang_max = angle_limit(row[12], kUnlimitedAngle);
        }
        grid.branches.push_back(br);
    }

    std::vector<std::string> local_warnings = std::move(a.warnings);
    if (auto it = a.matrices.find("gencost"); it != a.matrices.end()) {
        const Matrix& costs = it->second;
        if (costs.size() < grid.generators.size()) {
            throw MalformedCase("gencost has fewer rows than gen");
        }
        if (costs.size() > grid.generators.size()) {
            local_warnings.push_back("ignoring " +
                                     std::to_string(costs.size() - grid.generators.size()) +
                                     " extra gencost rows (reactive costs)");
        }
        for (std::size_t g = 0; g < grid.generators.size(); ++g) {
            grid.generators[g].cost =
                cost_from_row(costs[g], grid.generators[g].id, local_warnings);
        }
    } else {
        for (auto& g : grid.generators) {
            g.cost = CostPoly{0.0, 1.0, 0.0};
        }
    }

    validate_grid(grid);
    if (warnings != nullptr) {
        warnings->insert(warnings->end(), local_warnings.begin(), local_warnings.end());
    }
    return grid;
}

inline Grid read_matpower_file(const std::string& path,
                               std::vector<std::string>* warnings = nullptr) {
    std::ifstream in(path);
    if (!in) {
        throw IoFailure("cannot read case file '" + path + "'");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_matpower(buf.str(), warnings);
}

// Writes a grid as MATPOWER text. Loads sharing a bus are summed into that
// bus's Pd/Qd, so grids with at most one load per bus round-trip exactly.
inline std::string serialize_matpower(const Grid& grid, std::string_view name = "gridsynth_case") {
    using namespace matpower_detail;
    const BusIndex index(grid);
    std::vector<double> pd;
    std::vector<double> qd;
    bus_demand(grid, index, pd, qd);

    std::ostringstream out;
    const auto f = [](double v) { return format_double(v); };
    out << "function mpc = " << name << "\n";
    out << "mpc.version = '2';\n";
    out << "mpc.baseMVA = " << f(grid.base_mva) << ";\n\n";

    out << "%% bus data\n";
    out << "%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin\n";
    out << "mpc.bus = [\n";
    for (std::size_t i = 0; i < grid.buses.size(); ++i) {
        const auto& b = grid.buses[i];
        int type = 1;
        switch (b.role) {
            case BusRole::PQ: type = 1; break;
            case BusRole::PV: type = 2; break;
            case BusRole::Slack: type = 3; break;
            case BusRole::Isolated: type = 4; break;
        }
        out << '\t' << b.id << '\t' << type << '\t' << f(pd[i]) << '\t' << f(qd[i]) << '\t'
            << f(b.shunt_g * grid.base_mva) << '\t' << f(b.shunt_b * grid.base_mva)
            << "\t1\t1\t0\t" << f(b.base_kv) << "\t1\t" << f(b.vm_max) << '\t' << f(b.vm_min)
            << ";\n";
    }
    out << "];\n\n";

    out << "%% generator data\n";
    out << "%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin\n";
    out << "mpc.gen = [\n";
    for (const auto& g : grid.generators) {
        out << '\t' << g.bus << '\t' << f(g.pg) << '\t' << f(g.qg) << '\t' << f(g.q_max) << '\t'
            << f(g.q_min) << '\t' << f(g.vg) << '\t' << f(grid.base_mva) << '\t'
            << (g.in_service() ? 1 : 0) << '\t' << f(g.p_max) << '\t' << f(g.p_min)
            << "\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0;\n";
    }
    out << "];\n\n";

    out << "%% branch data\n";
    out << "%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax\n";
    out << "mpc.branch = [\n";
    for (const auto& br : grid.branches) {
        out << '\t' << br.from_bus << '\t' << br.to_bus << '\t' << f(br.r) << '\t' << f(br.x)
            << '\t' << f(br.b_charge) << '\t' << f(br.rate_a) << "\t0\t0\t" << f(br.tap) << '\t'
            << f(br.shift * kRadToDeg) << '\t' << (br.in_service() ? 1 : 0) << '\t'
            << angle_limit_text(br.ang_min) << '\t' << angle_limit_text(br.ang_max) << ";\n";
    }
    out << "];\n\n";

    out << "%% generator cost data\n";
    out << "%\t2\tstartup\tshutdown\tn\tc2\tc1\tc0\n";
    out << "mpc.gencost = [\n";
    for (const auto& g : grid.generators) {
        out << "\t2\t0\t0\t3\t" << f(g.cost.c2) << '\t' << f(g.cost.c1) << '\t' << f(g.cost.c0)
            << ";\n";
    }
    out << "];\n";
    return out.str();
}

}  // namespace gridsynth
