#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>
#include <yaml-cpp/yaml.h>

#include "gridsynth/acopf.hpp"
#include "gridsynth/acpf.hpp"
#include "gridsynth/error.hpp"
#include "gridsynth/perturbations.hpp"
#include "gridsynth/text.hpp"

namespace gridsynth {

enum class Mode { PF, OPF };
enum class TopologyMode { Enumerate, Sample };

inline constexpr const char* kWorkersEnv = "GRIDSYNTH_WORKERS";

struct SolverConfig {
    PfOptions pf;
    OpfOptions opf;
};

struct GenerationConfig {
    std::string grid_path;
    Mode mode = Mode::PF;
    std::size_t n_load_scenarios = 1;
    std::size_t topologies_per_scenario = 1;
    std::size_t k = 0;
    TopologyMode topology_mode = TopologyMode::Sample;
    double sigma_load = 0.0;
    double r = 0.4;
    double calibration_step = 0.1;
    std::optional<double> load_u;  // skips calibration when set
    double sigma_admittance = 0.0;
    CostPerturbation cost;
    std::string profile_path;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
    std::string output_dir;
    std::size_t enumeration_cap = 1'000'000;
    std::size_t rejection_attempts = 1000;
    double violation_tol = 1e-5;
    SolverConfig solver;
};

inline std::string_view to_string(Mode m) { return m == Mode::PF ? "pf" : "opf"; }
inline std::string_view to_string(TopologyMode m) {
    return m == TopologyMode::Enumerate ? "enumerate" : "sample";
}

// Worker count from the environment, 1 when unset or unparsable.
inline std::size_t default_workers() {
    if (const char* env = std::getenv(kWorkersEnv)) {
        const auto v = parse_integer(env);
        if (v && *v >= 1) return static_cast<std::size_t>(*v);
    }
    return 1;
}

namespace config_detail {

class Reader {
  public:
    explicit Reader(const YAML::Node& root) : root_(root) {}

    std::vector<std::string> errors;

    template <typename T>
    std::optional<T> get(const std::string& key, const YAML::Node& node) {
        seen_.insert(key);
        if (!node || node.IsNull()) return std::nullopt;
        if (!node.IsScalar()) {
            errors.push_back(key + ": expected a scalar value");
            return std::nullopt;
        }
        try {
            return node.as<T>();
        } catch (const YAML::Exception&) {
            errors.push_back(key + ": cannot interpret '" + node.Scalar() + "'");
            return std::nullopt;
        }
    }
    template <typename T>
    std::optional<T> get(const std::string& key) {
        return get<T>(key, root_[key]);
    }
    std::optional<std::string> choice(const std::string& key, std::initializer_list<const char*> allowed) {
        auto v = get<std::string>(key);
        if (!v) return v;
        for (const char* a : allowed) {
            if (*v == a) return v;
        }
        std::string msg = key + ": '" + *v + "' is not one of";
        for (const char* a : allowed) msg += std::string(" ") + a;
        errors.push_back(msg);
        return std::nullopt;
    }
    std::optional<std::size_t> count(const std::string& key, std::size_t min) {
        auto v = get<long long>(key);
        if (!v) return std::nullopt;
        if (*v < static_cast<long long>(min)) {
            errors.push_back(key + ": must be >= " + std::to_string(min));
            return std::nullopt;
        }
        return static_cast<std::size_t>(*v);
    }

    void mark_nested(const std::string& key) { seen_.insert(key); }

    void reject_unknown(const YAML::Node& node, const std::string& prefix) {
        for (const auto& kv : node) {
            const std::string key = prefix + kv.first.as<std::string>();
            if (!seen_.contains(key)) errors.push_back(key + ": unknown key");
        }
    }

  private:
    YAML::Node root_;
    std::set<std::string> seen_;
};

// Parses "a.b=value" and writes it into the YAML tree.
inline void apply_override(YAML::Node& root, const std::string& assignment,
                           std::vector<std::string>& errors) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        errors.push_back("--set " + assignment + ": expected key=value");
        return;
    }
    const std::string key(trim(std::string_view(assignment).substr(0, eq)));
    const std::string value(trim(std::string_view(assignment).substr(eq + 1)));
    YAML::Node parsed;
    try {
        parsed = YAML::Load(value);
    } catch (const YAML::Exception&) {
        parsed = YAML::Node(value);
    }
    const auto dot = key.find('.');
    if (dot == std::string::npos) {
        root[key] = parsed;
        return;
    }
    const std::string outer = key.substr(0, dot);
    if (root[outer] && !root[outer].IsMap()) {
        errors.push_back("--set " + key + ": '" + outer + "' is not a section");
        return;
    }
    root[outer][key.substr(dot + 1)] = parsed;
}

}  // namespace config_detail

// Builds a configuration from YAML text plus `key=value` overrides. Relative
// paths are resolved against `base_dir`. Every problem found is reported in a
// single ConfigError.
inline GenerationConfig parse_config(const std::string& text, const std::vector<std::string>& overrides = {},
                                     const std::filesystem::path& base_dir = {}) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::Exception& e) {
        throw ConfigError(std::string("config is not valid YAML: ") + e.what());
    }
    if (root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
    if (!root.IsMap()) throw ConfigError("config must be a mapping of key: value pairs");

    std::vector<std::string> errors;
    for (const auto& o : overrides) config_detail::apply_override(root, o, errors);

    config_detail::Reader rd(root);
    GenerationConfig c;
    c.workers = default_workers();
    auto path = [&](const std::string& s) {
        std::filesystem::path p(s);
        return (p.is_relative() && !base_dir.empty() ? base_dir / p : p).string();
    };

    if (auto v = rd.get<std::string>("grid_path")) c.grid_path = path(*v);
    else rd.errors.push_back("grid_path: required");
    if (auto v = rd.get<std::string>("profile_path")) c.profile_path = path(*v);
    else rd.errors.push_back("profile_path: required");
    if (auto v = rd.get<std::string>("output_dir")) c.output_dir = path(*v);
    else rd.errors.push_back("output_dir: required");

    if (auto v = rd.choice("mode", {"pf", "opf"})) c.mode = *v == "pf" ? Mode::PF : Mode::OPF;
    if (auto v = rd.count("n_load_scenarios", 1)) c.n_load_scenarios = *v;
    if (auto v = rd.count("topologies_per_scenario", 1)) c.topologies_per_scenario = *v;
    if (auto v = rd.count("k", 0)) c.k = *v;
    if (auto v = rd.choice("topology_mode", {"enumerate", "sample"})) {
        c.topology_mode = *v == "enumerate" ? TopologyMode::Enumerate : TopologyMode::Sample;
    }
    auto nonneg = [&](const char* key, double& out) {
        if (auto v = rd.get<double>(key)) {
            if (*v >= 0.0) out = *v;
            else rd.errors.push_back(std::string(key) + ": must be >= 0");
        }
    };
    nonneg("sigma_load", c.sigma_load);
    nonneg("sigma_admittance", c.sigma_admittance);
    if (c.sigma_load >= 1.0) rd.errors.push_back("sigma_load: must be < 1");
    if (auto v = rd.get<double>("r")) {
        if (*v >= 0.0 && *v < 1.0) c.r = *v;
        else rd.errors.push_back("r: must lie in [0, 1)");
    }
    if (auto v = rd.get<double>("calibration_step")) {
        if (*v > 0.0) c.calibration_step = *v;
        else rd.errors.push_back("calibration_step: must be > 0");
    }
    if (auto v = rd.get<double>("load_u")) {
        if (*v > 0.0) c.load_u = *v;
        else rd.errors.push_back("load_u: must be > 0");
    }
    if (auto v = rd.choice("cost_mode", {"none", "permute", "scale"})) {
        c.cost.mode = *v == "none" ? CostMode::None : *v == "permute" ? CostMode::Permute : CostMode::Scale;
    }
    if (auto v = rd.get<double>("cost_scale_lo")) c.cost.lo = *v;
    if (auto v = rd.get<double>("cost_scale_hi")) c.cost.hi = *v;
    if (c.cost.mode == CostMode::Scale && !(c.cost.lo > 0.0 && c.cost.lo <= c.cost.hi)) {
        rd.errors.push_back("cost_scale_lo/cost_scale_hi: need 0 < lo <= hi");
    }
    if (auto v = rd.get<unsigned long long>("seed")) c.seed = *v;
    if (auto v = rd.count("workers", 1)) c.workers = *v;
    if (auto v = rd.count("enumeration_cap", 1)) c.enumeration_cap = *v;
    if (auto v = rd.count("rejection_attempts", 1)) c.rejection_attempts = *v;
    if (auto v = rd.get<double>("violation_tol")) {
        if (*v > 0.0) c.violation_tol = *v;
        else rd.errors.push_back("violation_tol: must be > 0");
    }

    rd.mark_nested("solver");
    if (const YAML::Node s = root["solver"]) {
        if (!s.IsMap()) {
            rd.errors.push_back("solver: expected a section");
        } else {
            auto tol = [&](const char* key, double& out) {
                if (auto v = rd.get<double>(std::string("solver.") + key, s[key])) {
                    if (*v > 0.0) out = *v;
                    else rd.errors.push_back(std::string("solver.") + key + ": must be > 0");
                }
            };
            auto iters = [&](const char* key, int& out) {
                if (auto v = rd.get<int>(std::string("solver.") + key, s[key])) {
                    if (*v >= 1) out = *v;
                    else rd.errors.push_back(std::string("solver.") + key + ": must be >= 1");
                }
            };
            tol("pf_tol", c.solver.pf.tol);
            iters("pf_max_iter", c.solver.pf.max_iter);
            tol("opf_tol", c.solver.opf.tol);
            iters("opf_max_iter", c.solver.opf.max_iter);
            rd.reject_unknown(s, "solver.");
        }
    }
    rd.reject_unknown(root, "");

    errors.insert(errors.end(), rd.errors.begin(), rd.errors.end());
    if (!errors.empty()) {
        std::string msg = "invalid configuration:";
        for (const auto& e : errors) msg += "\n  " + e;
        throw ConfigError(msg);
    }
    return c;
}

inline GenerationConfig load_config(const std::filesystem::path& file,
                                    const std::vector<std::string>& overrides = {}) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw IoFailure("cannot read config " + file.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str(), overrides, file.parent_path());
}

// Configuration as recorded in the manifest. Worker count and output
// location do not affect content and are left out so that runs differing
// only in those produce identical manifests.
inline nlohmann::json config_echo(const GenerationConfig& c) {
    nlohmann::json j;
    j["grid_path"] = std::filesystem::path(c.grid_path).filename().string();
    j["profile_path"] = std::filesystem::path(c.profile_path).filename().string();
    j["mode"] = to_string(c.mode);
    j["n_load_scenarios"] = c.n_load_scenarios;
    j["topologies_per_scenario"] = c.topologies_per_scenario;
    j["k"] = c.k;
    j["topology_mode"] = to_string(c.topology_mode);
    j["sigma_load"] = c.sigma_load;
    j["r"] = c.r;
    j["calibration_step"] = c.calibration_step;
    j["load_u"] = c.load_u ? nlohmann::json(*c.load_u) : nlohmann::json();
    j["sigma_admittance"] = c.sigma_admittance;
    j["cost_mode"] = to_string(c.cost.mode);
    j["cost_scale_lo"] = c.cost.lo;
    j["cost_scale_hi"] = c.cost.hi;
    j["seed"] = c.seed;
    j["enumeration_cap"] = c.enumeration_cap;
    j["rejection_attempts"] = c.rejection_attempts;
    j["violation_tol"] = c.violation_tol;
    j["solver"] = {{"pf_tol", c.solver.pf.tol},
                   {"pf_max_iter", c.solver.pf.max_iter},
                   {"opf_tol", c.solver.opf.tol},
                   {"opf_max_iter", c.solver.opf.max_iter}};
    return j;
}

}  // namespace gridsynth
