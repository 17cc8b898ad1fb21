#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include <json.hpp>

#include "support.hpp"

// Drives the gridsynth binary end to end.

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct Run {
    int code = -1;
    std::string output;
};

Run cli(const std::string& args, const std::filesystem::path& scratch) {
    const auto log = scratch / "cli.log";
    const std::string cmd = std::string("\"") + GRIDSYNTH_CLI + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.output = slurp(log);
    return r;
}

std::filesystem::path write_config(const std::filesystem::path& dir, const std::string& extra = "") {
    const auto p = dir / "config.yaml";
    std::ofstream(p) << "grid_path: " << testing::data_path("case9.m") << "\n"
                     << "profile_path: " << testing::data_path("load_profile.txt") << "\n"
                     << "output_dir: " << (dir / "out").string() << "\n"
                     << "mode: pf\n"
                     << "n_load_scenarios: 3\n"
                     << "topologies_per_scenario: 2\n"
                     << "k: 1\n"
                     << "sigma_load: 0.1\n"
                     << "seed: 3\n"
                     << extra;
    return p;
}

}  // namespace

TEST_CASE("generate, validate and stats", "[cli]") {
    const auto dir = testing::scratch_dir("cli_generate");
    const auto cfg = write_config(dir);
    const auto out = dir / "out";

    const Run gen = cli("generate \"" + cfg.string() + "\"", dir);
    INFO(gen.output);
    REQUIRE(gen.code == 0);
    CHECK(std::filesystem::exists(out / "manifest.json"));

    const Run ok = cli("validate \"" + out.string() + "\"", dir);
    INFO(ok.output);
    CHECK(ok.code == 0);
    CHECK(ok.output.find("PASS") != std::string::npos);

    const Run st = cli("stats \"" + out.string() + "\" --bins 20", dir);
    CHECK(st.code == 0);
    const auto j = nlohmann::json::parse(slurp(out / "stats.json"));
    CHECK(j["samples"].get<int>() == 6);
    CHECK(j["entropy_bins"].get<int>() == 20);

    // fault one voltage magnitude
    std::string bus = slurp(out / "bus.csv");
    const auto row = bus.find('\n', bus.find('\n') + 1) + 1;  // second data row
    std::vector<std::string> cells;
    std::stringstream ss(bus.substr(row, bus.find('\n', row) - row));
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    cells[5] = std::to_string(std::stod(cells[5]) + 1e-3);  // Vm
    std::string faulted;
    for (std::size_t i = 0; i < cells.size(); ++i) faulted += (i ? "," : "") + cells[i];
    bus.replace(row, bus.find('\n', row) - row, faulted);
    std::ofstream(out / "bus.csv", std::ios::trunc | std::ios::binary) << bus;

    const Run bad = cli("validate \"" + out.string() + "\"", dir);
    CHECK(bad.code == 1);
    CHECK(bad.output.find("FAIL") != std::string::npos);
    CHECK(bad.output.find("flow") != std::string::npos);
}

TEST_CASE("overrides are applied and runs repeat", "[cli]") {
    const auto dir = testing::scratch_dir("cli_override");
    const auto cfg = write_config(dir);
    REQUIRE(cli("generate \"" + cfg.string() + "\" --set seed=7 --set n_load_scenarios=2", dir).code == 0);
    const std::string first = slurp(dir / "out" / "manifest.json");
    const std::string bus = slurp(dir / "out" / "bus.csv");
    REQUIRE(cli("generate \"" + cfg.string() + "\" --set seed=7 --set n_load_scenarios=2", dir).code == 0);
    CHECK(slurp(dir / "out" / "manifest.json") == first);
    CHECK(slurp(dir / "out" / "bus.csv") == bus);
    const auto m = nlohmann::json::parse(first);
    CHECK(m["config"]["seed"].get<int>() == 7);
    CHECK(m["counts"]["samples"].get<int>() == 4);
}

TEST_CASE("error exit codes", "[cli]") {
    const auto dir = testing::scratch_dir("cli_errors");
    SECTION("invalid configuration") {
        const auto cfg = write_config(dir, "sigma_load_typo: 0.3\n");
        const Run r = cli("generate \"" + cfg.string() + "\"", dir);
        CHECK(r.code == 2);
        CHECK(r.output.find("sigma_load_typo") != std::string::npos);
    }
    SECTION("bad override") {
        const auto cfg = write_config(dir);
        CHECK(cli("generate \"" + cfg.string() + "\" --set k=-1", dir).code == 2);
    }
    SECTION("missing configuration file") {
        CHECK(cli("generate \"" + (dir / "absent.yaml").string() + "\"", dir).code == 1);
    }
    SECTION("missing dataset") {
        CHECK(cli("validate \"" + (dir / "absent").string() + "\"", dir).code == 1);
    }
    SECTION("usage") {
        CHECK(cli("", dir).code == 2);
        CHECK(cli("frobnicate", dir).code == 2);
    }
}
