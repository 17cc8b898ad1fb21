#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gridsynth/error.hpp"
#include "gridsynth/grid.hpp"
#include "gridsynth/matpower.hpp"
#include "gridsynth/perturbations.hpp"
#include "gridsynth/text.hpp"
#include "gridsynth/topology.hpp"

namespace gridsynth {

// Dataset layout: one row per (sample, element) in bus/gen/branch.csv, one
// row per sample in sample.csv and runtime.csv. Everything except
// runtime.csv is a pure function of the configuration.

struct BusRecord {
    int bus_id = 0;
    double pd = 0.0;     // MW
    double qd = 0.0;     // MVAr
    double vm = 0.0;     // p.u.
    double va = 0.0;     // rad
    double va_dc = 0.0;  // rad, DC power flow
    bool vm_violation = false;
    bool operator==(const BusRecord&) const = default;
};

struct GenRecord {
    int gen_id = 0;
    int bus_id = 0;
    bool in_service = true;
    double pg = 0.0;        // MW
    double qg = 0.0;        // MVAr
    double pg_dcopf = 0.0;  // MW
    CostPoly cost;
    bool qg_violation = false;
    bool operator==(const GenRecord&) const = default;
};

struct BranchRecord {
    int branch_id = 0;
    int from_bus = 0;
    int to_bus = 0;
    bool in_service = true;
    double r = 0.0;
    double x = 0.0;
    BranchFlow flow;
    double loading = 0.0;
    double pf_dc = 0.0;     // MW, DC power flow
    double pf_dcopf = 0.0;  // MW, DC-OPF
    bool overload = false;
    bool angle_violation = false;
    bool operator==(const BranchRecord&) const = default;
};

enum class SampleStatus { Converged, NotConverged, Skipped };

inline std::string_view to_string(SampleStatus s) {
    switch (s) {
        case SampleStatus::Converged: return "converged";
        case SampleStatus::NotConverged: return "not_converged";
        case SampleStatus::Skipped: return "skipped";
    }
    return "?";
}

struct Runtimes {
    double ac_pf = 0.0;
    double ac_opf = 0.0;
    double dc_pf = 0.0;
    double dc_opf = 0.0;
    bool operator==(const Runtimes&) const = default;
};

struct SampleRecord {
    std::size_t scenario_id = 0;
    std::size_t topology_id = 0;
    SampleStatus status = SampleStatus::Skipped;
    std::string reason;  // solver reason tag; empty when converged
    double load_ref = 1.0;
    TopologyPerturbation topology;
    std::string admittance_hash;
    CostMode cost_mode = CostMode::None;
    double objective = 0.0;  // $/h of the recorded dispatch
    int iterations = 0;
    double max_mismatch = 0.0;  // p.u.
    bool dcpf_ok = false;
    double dc_balance = 0.0;  // p.u.
    bool dcopf_feasible = false;
    double dcopf_objective = 0.0;
    int n_overloads = 0;
    int n_vm_violations = 0;
    int n_angle_violations = 0;
    int n_qg_violations = 0;
    bool slack_pg_violation = false;
    Runtimes runtime;
    std::vector<BusRecord> buses;
    std::vector<GenRecord> gens;
    std::vector<BranchRecord> branches;

    bool converged() const { return status == SampleStatus::Converged; }
    int violation_count() const {
        return n_overloads + n_vm_violations + n_angle_violations + n_qg_violations +
               (slack_pg_violation ? 1 : 0);
    }
    bool operator==(const SampleRecord&) const = default;
};

struct Dataset {
    Grid base;
    nlohmann::json manifest;
    std::vector<SampleRecord> records;
};

// FNV-1a over the bit patterns of every branch's (r, x).
inline std::string admittance_hash(const Grid& grid) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&](double v) {
        std::uint64_t bits = 0;
        std::memcpy(&bits, &v, sizeof bits);
        for (int i = 0; i < 8; ++i) {
            h ^= (bits >> (8 * i)) & 0xffU;
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& br : grid.branches) {
        mix(br.r);
        mix(br.x);
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace dataset_detail {

inline constexpr std::string_view kBusHeader =
    "scenario_id,topology_id,bus_id,Pd,Qd,Vm,Va,Va_dc,vm_violation";
inline constexpr std::string_view kGenHeader =
    "scenario_id,topology_id,gen_id,bus_id,status,Pg,Qg,Pg_dcopf,c2,c1,c0,qg_violation";
inline constexpr std::string_view kBranchHeader =
    "scenario_id,topology_id,branch_id,from_bus,to_bus,status,r,x,Pf,Qf,Pt,Qt,loading,Pf_dc,"
    "Pf_dcopf,overload,angle_violation";
inline constexpr std::string_view kSampleHeader =
    "scenario_id,topology_id,status,reason,load_ref,disabled_branches,disabled_generators,"
    "admittance_hash,cost_mode,objective,iterations,max_mismatch,dcpf_ok,dc_balance,"
    "dcopf_feasible,dcopf_objective,n_overloads,n_vm_violations,n_angle_violations,"
    "n_qg_violations,slack_pg_violation";
inline constexpr std::string_view kRuntimeHeader = "scenario_id,topology_id,ac_pf,ac_opf,dc_pf,dc_opf";

class Row {
  public:
    Row& operator<<(double v) { return add(format_double(v)); }
    Row& operator<<(int v) { return add(std::to_string(v)); }
    Row& operator<<(std::size_t v) { return add(std::to_string(v)); }
    Row& operator<<(bool v) { return add(v ? "1" : "0"); }
    Row& operator<<(std::string_view v) { return add(v); }
    Row& operator<<(const std::vector<int>& ids) {
        std::string s;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (i) s += ';';
            s += std::to_string(ids[i]);
        }
        return add(s);
    }
    std::string str() const { return text_ + '\n'; }

  private:
    Row& add(std::string_view s) {
        if (!first_) text_ += ',';
        first_ = false;
        text_ += s;
        return *this;
    }
    std::string text_;
    bool first_ = true;
};

// Cursor over the cells of one CSV line with typed getters.
class Cells {
  public:
    Cells(std::string_view line, std::string file, std::size_t line_no)
        : cells_(split(line, ',')), file_(std::move(file)), line_no_(line_no) {}

    std::size_t size() const { return cells_.size(); }

    std::string_view text() { return next(); }
    double real() {
        const auto c = next();
        const auto v = parse_double(c);
        if (!v) fail("non-numeric cell '" + std::string(c) + "'");
        return *v;
    }
    long long integer() {
        const auto c = next();
        const auto v = parse_integer(c);
        if (!v) fail("non-integer cell '" + std::string(c) + "'");
        return *v;
    }
    int id() { return static_cast<int>(integer()); }
    std::size_t count() {
        const long long v = integer();
        if (v < 0) fail("negative count");
        return static_cast<std::size_t>(v);
    }
    bool flag() {
        const long long v = integer();
        if (v != 0 && v != 1) fail("flag must be 0 or 1");
        return v == 1;
    }
    std::vector<int> ids() {
        std::vector<int> out;
        const auto c = next();
        if (c.empty()) return out;
        for (auto part : split(c, ';')) {
            const auto v = parse_integer(part);
            if (!v) fail("bad id list '" + std::string(c) + "'");
            out.push_back(static_cast<int>(*v));
        }
        return out;
    }
    [[noreturn]] void fail(const std::string& what) const {
        throw DatasetCorrupt(file_ + ":" + std::to_string(line_no_) + ": " + what);
    }

  private:
    std::string_view next() {
        if (pos_ >= cells_.size()) fail("too few cells");
        return cells_[pos_++];
    }
    std::vector<std::string_view> cells_;
    std::size_t pos_ = 0;
    std::string file_;
    std::size_t line_no_;
};

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) {
        throw DatasetCorrupt("missing dataset file " + p.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// Calls `fn(Cells&)` for every data line after checking the header.
template <typename Fn>
void for_each_row(const std::filesystem::path& p, std::string_view header, std::size_t columns, Fn&& fn) {
    const std::string text = read_file(p);
    const auto lines = split(text, '\n');
    if (lines.empty() || trim(lines[0]) != header) {
        throw DatasetCorrupt(p.string() + ": unexpected header");
    }
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto line = trim(lines[i]);
        if (line.empty()) {
            if (i + 1 == lines.size()) break;
            throw DatasetCorrupt(p.string() + ":" + std::to_string(i + 1) + ": blank line");
        }
        Cells cells(line, p.filename().string(), i + 1);
        if (cells.size() != columns) {
            cells.fail("expected " + std::to_string(columns) + " cells, got " + std::to_string(cells.size()));
        }
        fn(cells);
    }
}

inline std::size_t column_count(std::string_view header) { return split(header, ',').size(); }

}  // namespace dataset_detail

// Streams records to disk in the order they are appended. The manifest is
// written up front with "complete": false and rewritten by finish().
class DatasetWriter {
  public:
    DatasetWriter(const std::filesystem::path& dir, const Grid& base, nlohmann::json manifest)
        : dir_(dir), manifest_(std::move(manifest)) {
        using namespace dataset_detail;
        std::error_code ec;
        std::filesystem::create_directories(dir_, ec);
        if (ec) {
            throw IoFailure("cannot create output directory " + dir_.string() + ": " + ec.message());
        }
        manifest_["complete"] = false;
        write_manifest();
        write_text(dir_ / "base_grid.m", serialize_matpower(base, "base_grid"));
        open(bus_, "bus.csv", kBusHeader);
        open(gen_, "gen.csv", kGenHeader);
        open(branch_, "branch.csv", kBranchHeader);
        open(sample_, "sample.csv", kSampleHeader);
        open(runtime_, "runtime.csv", kRuntimeHeader);
    }

    void append(const SampleRecord& r) {
        using dataset_detail::Row;
        for (const auto& b : r.buses) {
            bus_ << (Row() << r.scenario_id << r.topology_id << b.bus_id << b.pd << b.qd << b.vm << b.va
                           << b.va_dc << b.vm_violation)
                        .str();
        }
        for (const auto& g : r.gens) {
            gen_ << (Row() << r.scenario_id << r.topology_id << g.gen_id << g.bus_id << g.in_service << g.pg
                           << g.qg << g.pg_dcopf << g.cost.c2 << g.cost.c1 << g.cost.c0 << g.qg_violation)
                        .str();
        }
        for (const auto& b : r.branches) {
            branch_ << (Row() << r.scenario_id << r.topology_id << b.branch_id << b.from_bus << b.to_bus
                              << b.in_service << b.r << b.x << b.flow.p_from << b.flow.q_from << b.flow.p_to
                              << b.flow.q_to << b.loading << b.pf_dc << b.pf_dcopf << b.overload
                              << b.angle_violation)
                           .str();
        }
        sample_ << (Row() << r.scenario_id << r.topology_id << to_string(r.status) << std::string_view(r.reason)
                          << r.load_ref << r.topology.disabled_branches << r.topology.disabled_generators
                          << std::string_view(r.admittance_hash) << to_string(r.cost_mode) << r.objective
                          << r.iterations << r.max_mismatch << r.dcpf_ok << r.dc_balance << r.dcopf_feasible
                          << r.dcopf_objective << r.n_overloads << r.n_vm_violations << r.n_angle_violations
                          << r.n_qg_violations << r.slack_pg_violation)
                       .str();
        runtime_ << (Row() << r.scenario_id << r.topology_id << r.runtime.ac_pf << r.runtime.ac_opf
                           << r.runtime.dc_pf << r.runtime.dc_opf)
                        .str();
        ++written_;
    }

    std::size_t written() const { return written_; }

    // Flushes all tables and marks the manifest complete, merging `extra`
    // (counts, rates) into it.
    void finish(const nlohmann::json& extra = nlohmann::json::object()) {
        for (auto* f : {&bus_, &gen_, &branch_, &sample_, &runtime_}) {
            f->close();
            if (!*f) throw IoFailure("failed writing dataset in " + dir_.string());
        }
        manifest_.update(extra);
        manifest_["complete"] = true;
        write_manifest();
    }

  private:
    void open(std::ofstream& f, const char* name, std::string_view header) {
        f.open(dir_ / name, std::ios::binary | std::ios::trunc);
        if (!f) throw IoFailure("cannot write " + (dir_ / name).string());
        f << header << '\n';
    }
    void write_text(const std::filesystem::path& p, const std::string& text) {
        std::ofstream f(p, std::ios::binary | std::ios::trunc);
        f << text;
        if (!f) throw IoFailure("cannot write " + p.string());
    }
    void write_manifest() { write_text(dir_ / "manifest.json", manifest_.dump(2) + "\n"); }

    std::filesystem::path dir_;
    nlohmann::json manifest_;
    std::ofstream bus_, gen_, branch_, sample_, runtime_;
    std::size_t written_ = 0;
};

inline void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
    DatasetWriter w(dir, ds.base, ds.manifest);
    for (const auto& r : ds.records) w.append(r);
    w.finish();
}

inline Dataset read_dataset(const std::filesystem::path& dir) {
    using namespace dataset_detail;
    if (!std::filesystem::is_directory(dir)) {
        throw IoFailure("dataset directory " + dir.string() + " does not exist");
    }
    Dataset ds;
    try {
        ds.manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
    } catch (const nlohmann::json::exception& e) {
        throw DatasetCorrupt("manifest.json: " + std::string(e.what()));
    }
    try {
        ds.base = parse_matpower(read_file(dir / "base_grid.m"));
    } catch (const DatasetCorrupt&) {
        throw;
    } catch (const Error& e) {
        throw DatasetCorrupt("base_grid.m: " + std::string(e.what()));
    }

    std::map<std::pair<std::size_t, std::size_t>, std::size_t> where;
    auto lookup = [&](Cells& c) -> SampleRecord& {
        const std::size_t s = c.count();
        const std::size_t t = c.count();
        auto it = where.find({s, t});
        if (it == where.end()) c.fail("row for a sample missing from sample.csv");
        return ds.records[it->second];
    };

    for_each_row(dir / "sample.csv", kSampleHeader, column_count(kSampleHeader), [&](Cells& c) {
        SampleRecord r;
        r.scenario_id = c.count();
        r.topology_id = c.count();
        const auto status = c.text();
        if (status == "converged") r.status = SampleStatus::Converged;
        else if (status == "not_converged") r.status = SampleStatus::NotConverged;
        else if (status == "skipped") r.status = SampleStatus::Skipped;
        else c.fail("unknown status '" + std::string(status) + "'");
        r.reason = std::string(c.text());
        r.load_ref = c.real();
        r.topology.disabled_branches = c.ids();
        r.topology.disabled_generators = c.ids();
        r.admittance_hash = std::string(c.text());
        const auto mode = c.text();
        if (mode == "none") r.cost_mode = CostMode::None;
        else if (mode == "permute") r.cost_mode = CostMode::Permute;
        else if (mode == "scale") r.cost_mode = CostMode::Scale;
        else c.fail("unknown cost mode '" + std::string(mode) + "'");
        r.objective = c.real();
        r.iterations = static_cast<int>(c.integer());
        r.max_mismatch = c.real();
        r.dcpf_ok = c.flag();
        r.dc_balance = c.real();
        r.dcopf_feasible = c.flag();
        r.dcopf_objective = c.real();
        r.n_overloads = static_cast<int>(c.integer());
        r.n_vm_violations = static_cast<int>(c.integer());
        r.n_angle_violations = static_cast<int>(c.integer());
        r.n_qg_violations = static_cast<int>(c.integer());
        r.slack_pg_violation = c.flag();
        if (!where.emplace(std::pair{r.scenario_id, r.topology_id}, ds.records.size()).second) {
            c.fail("duplicate sample");
        }
        ds.records.push_back(std::move(r));
    });
    for_each_row(dir / "bus.csv", kBusHeader, column_count(kBusHeader), [&](Cells& c) {
        SampleRecord& r = lookup(c);
        BusRecord b;
        b.bus_id = c.id();
        b.pd = c.real();
        b.qd = c.real();
        b.vm = c.real();
        b.va = c.real();
        b.va_dc = c.real();
        b.vm_violation = c.flag();
        r.buses.push_back(b);
    });
    for_each_row(dir / "gen.csv", kGenHeader, column_count(kGenHeader), [&](Cells& c) {
        SampleRecord& r = lookup(c);
        GenRecord g;
        g.gen_id = c.id();
        g.bus_id = c.id();
        g.in_service = c.flag();
        g.pg = c.real();
        g.qg = c.real();
        g.pg_dcopf = c.real();
        g.cost.c2 = c.real();
        g.cost.c1 = c.real();
        g.cost.c0 = c.real();
        g.qg_violation = c.flag();
        r.gens.push_back(g);
    });
    for_each_row(dir / "branch.csv", kBranchHeader, column_count(kBranchHeader), [&](Cells& c) {
        SampleRecord& r = lookup(c);
        BranchRecord b;
        b.branch_id = c.id();
        b.from_bus = c.id();
        b.to_bus = c.id();
        b.in_service = c.flag();
        b.r = c.real();
        b.x = c.real();
        b.flow.p_from = c.real();
        b.flow.q_from = c.real();
        b.flow.p_to = c.real();
        b.flow.q_to = c.real();
        b.loading = c.real();
        b.pf_dc = c.real();
        b.pf_dcopf = c.real();
        b.overload = c.flag();
        b.angle_violation = c.flag();
        r.branches.push_back(b);
    });
    for_each_row(dir / "runtime.csv", kRuntimeHeader, column_count(kRuntimeHeader), [&](Cells& c) {
        SampleRecord& r = lookup(c);
        r.runtime.ac_pf = c.real();
        r.runtime.ac_opf = c.real();
        r.runtime.dc_pf = c.real();
        r.runtime.dc_opf = c.real();
    });

    const auto& g = ds.base;
    for (const auto& r : ds.records) {
        if (r.buses.size() != g.buses.size() || r.gens.size() != g.generators.size() ||
            r.branches.size() != g.branches.size()) {
            throw DatasetCorrupt("sample (" + std::to_string(r.scenario_id) + ", " +
                                 std::to_string(r.topology_id) + ") has ragged element rows");
        }
    }
    return ds;
}

// Grid state a record was solved on: base grid plus the stored per-sample
// deltas (loads, branch impedances, statuses, costs).
inline Grid rebuild_grid(const Grid& base, const SampleRecord& r) {
    Grid g = base;
    g.loads.clear();
    int load_id = 1;
    for (std::size_t i = 0; i < r.buses.size(); ++i) {
        const auto& b = r.buses[i];
        if (b.pd != 0.0 || b.qd != 0.0) {
            g.loads.push_back({load_id++, b.bus_id, b.pd, b.qd});
        }
    }
    for (std::size_t e = 0; e < g.branches.size(); ++e) {
        g.branches[e].r = r.branches[e].r;
        g.branches[e].x = r.branches[e].x;
        g.branches[e].status = r.branches[e].in_service ? Status::InService : Status::OutOfService;
    }
    for (std::size_t k = 0; k < g.generators.size(); ++k) {
        g.generators[k].status = r.gens[k].in_service ? Status::InService : Status::OutOfService;
        g.generators[k].cost = r.gens[k].cost;
    }
    return g;
}

}  // namespace gridsynth
