#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gridsynth/analysis.hpp"
#include "gridsynth/dataset.hpp"
#include "gridsynth/validation.hpp"

namespace gridsynth {

enum class Feature { Pd, Qd, Pg, Qg, Vm, Va };

inline constexpr std::array kAllFeatures{Feature::Pd, Feature::Qd, Feature::Pg,
                                         Feature::Qg, Feature::Vm, Feature::Va};

inline std::string_view to_string(Feature f) {
    switch (f) {
        case Feature::Pd: return "Pd";
        case Feature::Qd: return "Qd";
        case Feature::Pg: return "Pg";
        case Feature::Qg: return "Qg";
        case Feature::Vm: return "Vm";
        case Feature::Va: return "Va";
    }
    return "?";
}

// Per-bus columns of a feature over converged samples. Pd/Qd cover buses that
// carry load in the base grid, Pg/Qg buses with generators (summed per bus),
// Vm/Va every bus.
inline std::vector<std::vector<double>> feature_columns(const Dataset& ds, Feature f) {
    const Grid& base = ds.base;
    const BusIndex index(base);
    std::vector<std::size_t> buses;
    std::set<std::size_t> chosen;
    if (f == Feature::Pd || f == Feature::Qd) {
        for (const auto& l : base.loads) chosen.insert(index[l.bus]);
    } else if (f == Feature::Pg || f == Feature::Qg) {
        for (const auto& g : base.generators) chosen.insert(index[g.bus]);
    } else {
        for (std::size_t i = 0; i < base.buses.size(); ++i) chosen.insert(i);
    }
    buses.assign(chosen.begin(), chosen.end());
    std::vector<std::size_t> column(base.buses.size(), 0);
    for (std::size_t c = 0; c < buses.size(); ++c) column[buses[c]] = c;

    std::vector<std::vector<double>> cols(buses.size());
    std::vector<double> per_bus(base.buses.size());
    for (const auto& r : ds.records) {
        if (!r.converged()) continue;
        std::fill(per_bus.begin(), per_bus.end(), 0.0);
        for (std::size_t i = 0; i < r.buses.size(); ++i) {
            const auto& b = r.buses[i];
            per_bus[i] = f == Feature::Pd ? b.pd : f == Feature::Qd ? b.qd : f == Feature::Vm ? b.vm : b.va;
        }
        if (f == Feature::Pg || f == Feature::Qg) {
            for (const auto& g : r.gens) {
                if (g.in_service) per_bus[index[g.bus_id]] += f == Feature::Pg ? g.pg : g.qg;
            }
        }
        for (std::size_t b : buses) cols[column[b]].push_back(per_bus[b]);
    }
    return cols;
}

inline FeatureEntropy compute_entropy(const Dataset& ds, Feature f, std::size_t bins = 100,
                                      const std::vector<Domain>* external = nullptr) {
    const auto cols = feature_columns(ds, f);
    if (cols.empty() || cols.front().empty()) {
        throw DatasetCorrupt("entropy needs at least one converged sample");
    }
    return entropy_of_columns(cols, bins, f == Feature::Va, external);
}

namespace stats_detail {

inline nlohmann::json summarize(std::vector<double> xs) {
    nlohmann::json j;
    j["count"] = xs.size();
    if (xs.empty()) return j;
    std::sort(xs.begin(), xs.end());
    double sum = 0.0;
    for (double x : xs) sum += x;
    auto q = [&](double p) { return xs[static_cast<std::size_t>(p * static_cast<double>(xs.size() - 1))]; };
    j["min"] = xs.front();
    j["median"] = q(0.5);
    j["p95"] = q(0.95);
    j["max"] = xs.back();
    j["mean"] = sum / static_cast<double>(xs.size());
    j["sum"] = sum;
    return j;
}

// Counts per decade, from 1e-16 up; zeros counted separately.
inline nlohmann::json log10_histogram(const std::vector<double>& xs) {
    std::map<int, std::size_t> h;
    std::size_t zeros = 0;
    for (double x : xs) {
        if (x <= 0.0) {
            ++zeros;
            continue;
        }
        ++h[std::max(-16, static_cast<int>(std::floor(std::log10(x))))];
    }
    nlohmann::json j = nlohmann::json::array();
    for (const auto& [d, c] : h) j.push_back({{"decade", d}, {"count", c}});
    return {{"zeros", zeros}, {"decades", j}};
}

}  // namespace stats_detail

// Statistics of a dataset; also written to stats.txt and stats.json in `dir`.
inline nlohmann::json stats_report(const std::filesystem::path& dir, std::size_t bins = 100) {
    using namespace stats_detail;
    const Dataset ds = read_dataset(dir);
    nlohmann::json j;
    std::size_t converged = 0, not_converged = 0, skipped = 0;
    std::vector<double> ac_balance, dc_balance, loading;
    std::vector<double> rt_ac_pf, rt_ac_opf, rt_dc_pf, rt_dc_opf;
    std::vector<std::size_t> overloads_per_sample;
    std::size_t rated_branch_samples = 0, overloaded_branch_samples = 0;
    std::size_t with_overload = 0, with_violation = 0;
    constexpr double kLoadingBin = 0.1;
    constexpr std::size_t kLoadingBins = 30;  // last bin collects >= 3.0
    std::vector<std::size_t> loading_hist(kLoadingBins, 0);
    std::vector<std::size_t> overloads_by_branch(ds.base.branches.size(), 0);

    for (const auto& r : ds.records) {
        if (r.status == SampleStatus::Skipped) {
            ++skipped;
        } else if (!r.converged()) {
            ++not_converged;
        }
        if (r.runtime.ac_pf > 0) rt_ac_pf.push_back(r.runtime.ac_pf);
        if (r.runtime.ac_opf > 0) rt_ac_opf.push_back(r.runtime.ac_opf);
        if (r.runtime.dc_pf > 0) rt_dc_pf.push_back(r.runtime.dc_pf);
        if (r.runtime.dc_opf > 0) rt_dc_opf.push_back(r.runtime.dc_opf);
        if (r.dcpf_ok) dc_balance.push_back(r.dc_balance);
        if (!r.converged()) continue;
        ++converged;
        const Grid g = rebuild_grid(ds.base, r);
        ac_balance.push_back(balance_residual(g, r));
        std::size_t n_over = 0;
        for (std::size_t e = 0; e < r.branches.size(); ++e) {
            const auto& b = r.branches[e];
            if (!b.in_service || !g.branches[e].has_rate()) continue;
            ++rated_branch_samples;
            loading.push_back(b.loading);
            ++loading_hist[std::min(kLoadingBins - 1, static_cast<std::size_t>(b.loading / kLoadingBin))];
            if (b.overload) {
                ++overloaded_branch_samples;
                ++overloads_by_branch[e];
                ++n_over;
            }
        }
        overloads_per_sample.push_back(n_over);
        if (n_over > 0) ++with_overload;
        if (r.violation_count() > 0) ++with_violation;
    }

    const double total = static_cast<double>(ds.records.size());
    j["samples"] = ds.records.size();
    j["converged"] = converged;
    j["not_converged"] = not_converged;
    j["skipped"] = skipped;
    j["convergence_rate"] = total > 0 ? static_cast<double>(converged) / total : 0.0;
    j["elements"] = {{"buses", ds.base.buses.size()},
                     {"branches", ds.base.branches.size()},
                     {"generators", ds.base.generators.size()},
                     {"loads", ds.base.loads.size()}};
    j["ac_balance_residual"] = {{"summary", summarize(ac_balance)}, {"histogram", log10_histogram(ac_balance)}};
    j["dc_balance_residual"] = {{"summary", summarize(dc_balance)}, {"histogram", log10_histogram(dc_balance)}};
    j["runtime"] = {{"ac_pf", summarize(rt_ac_pf)},
                    {"ac_opf", summarize(rt_ac_opf)},
                    {"dc_pf", summarize(rt_dc_pf)},
                    {"dc_opf", summarize(rt_dc_opf)}};
    nlohmann::json lh = nlohmann::json::array();
    for (std::size_t b = 0; b < kLoadingBins; ++b) {
        lh.push_back({{"from", static_cast<double>(b) * kLoadingBin},
                      {"to", b + 1 == kLoadingBins ? nlohmann::json() : nlohmann::json(static_cast<double>(b + 1) * kLoadingBin)},
                      {"count", loading_hist[b]}});
    }
    j["branch_loading"] = {{"summary", summarize(loading)}, {"histogram", lh}};
    std::map<std::size_t, std::size_t> per_sample;
    for (std::size_t c : overloads_per_sample) ++per_sample[c];
    nlohmann::json ops = nlohmann::json::array();
    for (const auto& [k, c] : per_sample) ops.push_back({{"overloads", k}, {"samples", c}});
    j["overloads_per_sample"] = ops;
    const double conv = static_cast<double>(converged);
    j["fraction_overloaded_branches"] =
        rated_branch_samples ? static_cast<double>(overloaded_branch_samples) / static_cast<double>(rated_branch_samples) : 0.0;
    j["fraction_samples_with_overload"] = converged ? static_cast<double>(with_overload) / conv : 0.0;
    j["fraction_samples_with_violation"] = converged ? static_cast<double>(with_violation) / conv : 0.0;
    // share of converged samples in which each branch is overloaded
    nlohmann::json per_branch = nlohmann::json::array();
    for (std::size_t e = 0; e < ds.base.branches.size(); ++e) {
        per_branch.push_back({{"branch_id", ds.base.branches[e].id},
                              {"overload_frequency", converged ? static_cast<double>(overloads_by_branch[e]) / conv : 0.0}});
    }
    j["branch_overload_frequency"] = per_branch;

    nlohmann::json ent;
    if (converged > 0) {
        for (Feature f : kAllFeatures) {
            const auto e = compute_entropy(ds, f, bins);
            std::size_t min_samples = e.samples.empty() ? 0 : *std::min_element(e.samples.begin(), e.samples.end());
            ent[std::string(to_string(f))] = {{"normalized", e.normalized},
                                              {"mean_bits", e.mean},
                                              {"buses", e.per_bus.size()},
                                              {"samples_per_bus", min_samples}};
        }
    }
    j["entropy"] = ent;
    j["entropy_bins"] = bins;

    std::ostringstream txt;
    auto pct = [](double x) {
        std::ostringstream s;
        s.setf(std::ios::fixed);
        s.precision(2);
        s << 100.0 * x << "%";
        return s.str();
    };
    auto sci = [](const nlohmann::json& s, const char* key) {
        if (!s.contains(key)) return std::string("-");
        std::ostringstream o;
        o.precision(3);
        o << s[key].get<double>();
        return o.str();
    };
    txt << "dataset " << dir.string() << "\n";
    txt << "samples            " << ds.records.size() << "\n";
    txt << "converged          " << converged << " (" << pct(j["convergence_rate"].get<double>()) << ")\n";
    txt << "not converged      " << not_converged << "\n";
    txt << "skipped            " << skipped << "\n";
    txt << "elements           buses " << ds.base.buses.size() << ", branches " << ds.base.branches.size()
        << ", generators " << ds.base.generators.size() << ", loads " << ds.base.loads.size() << "\n\n";
    txt << "AC balance residual (p.u.)  median " << sci(j["ac_balance_residual"]["summary"], "median") << "  max "
        << sci(j["ac_balance_residual"]["summary"], "max") << "\n";
    txt << "DC balance residual (p.u.)  median " << sci(j["dc_balance_residual"]["summary"], "median") << "  max "
        << sci(j["dc_balance_residual"]["summary"], "max") << "\n\n";
    txt << "runtime (s)   mean       p95        total\n";
    for (const char* k : {"ac_pf", "ac_opf", "dc_pf", "dc_opf"}) {
        const auto& s = j["runtime"][k];
        txt << "  " << k << std::string(12 - std::string(k).size(), ' ') << sci(s, "mean") << "  " << sci(s, "p95")
            << "  " << sci(s, "sum") << "\n";
    }
    txt << "\nbranch loading (rated, in-service branches)\n";
    for (std::size_t b = 0; b < kLoadingBins; ++b) {
        if (loading_hist[b] == 0) continue;
        std::ostringstream label;
        label.setf(std::ios::fixed);
        label.precision(1);
        label << "  [" << static_cast<double>(b) * kLoadingBin << ", ";
        if (b + 1 == kLoadingBins) {
            label << "inf)";
        } else {
            label << static_cast<double>(b + 1) * kLoadingBin << ")";
        }
        txt << label.str() << "  " << loading_hist[b] << "\n";
    }
    txt << "overloaded branches       " << pct(j["fraction_overloaded_branches"].get<double>()) << "\n";
    txt << "samples with overload     " << pct(j["fraction_samples_with_overload"].get<double>()) << "\n";
    txt << "samples with violation    " << pct(j["fraction_samples_with_violation"].get<double>()) << "\n";
    if (!ent.empty()) {
        txt << "\nnormalized entropy (" << bins << " bins)\n";
        for (Feature f : kAllFeatures) {
            const auto& e = ent[std::string(to_string(f))];
            std::ostringstream v;
            v.setf(std::ios::fixed);
            v.precision(4);
            v << e["normalized"].get<double>();
            txt << "  " << to_string(f) << "  " << v.str() << "  (" << e["buses"].get<std::size_t>() << " buses, "
                << e["samples_per_bus"].get<std::size_t>() << " samples each)\n";
        }
    }

    std::ofstream(dir / "stats.txt", std::ios::binary | std::ios::trunc) << txt.str();
    std::ofstream out(dir / "stats.json", std::ios::binary | std::ios::trunc);
    out << j.dump(2) << "\n";
    if (!out) throw IoFailure("cannot write statistics into " + dir.string());
    return j;
}

}  // namespace gridsynth
