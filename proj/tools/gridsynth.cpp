// gridsynth: generate, validate and summarize power flow datasets.
//
//   gridsynth generate <config.yaml> [--set key=value]...
//   gridsynth validate <dataset-dir>
//   gridsynth stats    <dataset-dir>
//
// Exit codes: 0 success, 1 unreadable input / failed validation / runtime
// failure, 2 invalid configuration or usage.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gridsynth/pipeline.hpp"
#include "gridsynth/stats.hpp"
#include "gridsynth/validation.hpp"

namespace {

int generate(const std::string& config_path, const std::vector<std::string>& overrides) {
    using namespace gridsynth;
    const GenerationConfig config = load_config(config_path, overrides);
    RunObserver obs;
    obs.message = [](const std::string& m) { std::cerr << m << "\n"; };
    obs.scenario_done = [](std::size_t done, std::size_t total, const std::vector<SampleRecord>& batch) {
        std::size_t ok = 0;
        for (const auto& r : batch) ok += r.converged() ? 1 : 0;
        std::cerr << "scenario " << done << "/" << total << ": " << ok << "/" << batch.size() << " converged\n";
    };
    const RunSummary s = run_generation(config, obs);
    std::printf("samples %zu, converged %zu (%.2f%%), not converged %zu, skipped %zu, wall time %.2f s\n",
                s.samples, s.converged, 100.0 * s.convergence_rate(), s.not_converged, s.skipped, s.wall_time);
    std::printf("output %s\n", config.output_dir.c_str());
    return 0;
}

int validate(const std::string& dir) {
    const auto rep = gridsynth::validate_dataset(dir);
    for (const auto& issue : rep.dataset_issues) std::printf("dataset: %s\n", issue.c_str());
    for (const auto& f : rep.failures) {
        std::printf("sample (%zu, %zu): %s: %s\n", f.scenario_id, f.topology_id, f.check.c_str(), f.detail.c_str());
    }
    std::printf("%s: %zu samples, %zu converged checked, max balance residual %.3g p.u. (limit %.3g), %zu failures\n",
                rep.ok() ? "PASS" : "FAIL", rep.samples, rep.checked, rep.max_balance_residual, rep.balance_limit,
                rep.failures.size() + rep.dataset_issues.size());
    return rep.ok() ? 0 : 1;
}

int stats(const std::string& dir, std::size_t bins) {
    gridsynth::stats_report(dir, bins);
    std::ifstream in(std::filesystem::path(dir) / "stats.txt");
    std::cout << in.rdbuf();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Synthetic power flow / optimal power flow dataset generator"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    auto* gen = app.add_subcommand("generate", "generate a dataset from a YAML config");
    gen->add_option("config", config_path, "configuration file")->required();
    gen->add_option("--set", overrides, "override a config key (key=value, solver.key=value)");

    std::string validate_dir;
    auto* val = app.add_subcommand("validate", "recompute and check a dataset");
    val->add_option("dataset", validate_dir, "dataset directory")->required();

    std::string stats_dir;
    std::size_t bins = 100;
    auto* st = app.add_subcommand("stats", "write stats.txt / stats.json for a dataset");
    st->add_option("dataset", stats_dir, "dataset directory")->required();
    st->add_option("--bins", bins, "entropy histogram bins")->check(CLI::Range(2, 100000));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*gen) return generate(config_path, overrides);
        if (*val) return validate(validate_dir);
        if (*st) return stats(stats_dir, bins);
    } catch (const gridsynth::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
