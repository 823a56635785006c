#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

struct Result {
    int status;
    std::string out;
};

Result run(const std::string& args, const fs::path& root) {
    const std::string cmd = "VARENTROPY_OUTPUT_ROOT='" + root.string() + "' '" VARENTROPY_CLI "' " + args + " 2>/dev/null";
    Result r{-1, {}};
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe);
    char buf[4096];
    while (std::fgets(buf, sizeof buf, pipe)) r.out += buf;
    const int raw = pclose(pipe);
    r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    return r;
}

fs::path scenario(const std::string& name) { return fs::path(VARENTROPY_SOURCE_DIR) / "scenarios" / name; }

fs::path fresh(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("varentropy_cli_" + name);
    fs::remove_all(dir);
    return dir;
}

}  // namespace

TEST_CASE("oracle verb prints the closed forms") {
    const auto r = run("oracle --sigma0-sq 0.25 --t-end 1 --samples 2", fresh("oracle"));
    CHECK(r.status == 0);
    CHECK(r.out.rfind("time,variance,D,V,I,dD_dt,dV_dt\n0,0.25,", 0) == 0);
}

TEST_CASE("run verb writes reports and exits zero when every check passes") {
    const auto root = fresh("run");
    const auto r = run("run '" + scenario("stationary.json").string() + "' --svg", root);
    CHECK(r.status == 0);
    for (const char* f : {"functionals.csv", "consistency.csv", "checks.csv", "mc_diagnostics.csv", "functionals.svg"})
        CHECK(fs::exists(root / "stationary" / f));
}

TEST_CASE("run verb exits one when a check fails") {
    const auto root = fresh("failing");
    fs::create_directories(root);
    const auto cfg = root / "tight.json";
    std::ofstream(cfg) << R"({"name": "tight", "drift": {"kind": "linear", "rate": -0.5},
        "initial": {"kind": "gaussian", "variance": 0.25}, "grid": {"lo": -8, "hi": 8, "n": 201},
        "t_grid": {"t_end": 0.5, "n_samples": 11}, "tolerances": {"oracle_rel": 1e-9}})";
    const auto r = run("run '" + cfg.string() + "'", root);
    CHECK(r.status == 1);
    CHECK(r.out.find("[FAIL] tight: oracle_varentropy") != std::string::npos);
}

TEST_CASE("errors exit two") {
    const auto root = fresh("errors");
    fs::create_directories(root);
    const auto cfg = root / "bad.json";
    std::ofstream(cfg) << R"({"name": "bad", "drift": {"kind": "linear", "rate": -0.5},
        "initial": {"kind": "gaussian", "variance": 0.25}, "grid": {"lo": 8, "hi": -8, "n": 201}})";
    CHECK(run("run '" + cfg.string() + "'", root).status == 2);
    CHECK(run("run '" + (root / "missing.json").string() + "'", root).status == 2);
    CHECK(run("frobnicate", root).status == 2);
    CHECK(run("oracle --sigma0-sq 0.25", root).status == 2);
}

TEST_CASE("converge verb") {
    const auto r = run("converge '" + scenario("stationary.json").string() + "' --levels 2", fresh("converge"));
    CHECK(r.status == 0);
    CHECK(r.out.rfind("level,n,dx,dt,err_variance,err_V,order_variance,order_V\n", 0) == 0);
}

TEST_CASE("sweep verb writes a summary") {
    const auto root = fresh("sweep");
    const auto r = run("sweep '" + scenario("sweep_ou.json").string() + "'", root);
    CHECK(r.status == 0);
    CHECK(fs::exists(root / "sweep_ou" / "sweep_summary.csv"));
    CHECK(r.out.rfind("sigma0_sq,min_dV_dt", 0) == 0);
}
