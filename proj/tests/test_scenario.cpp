#include <cstdlib>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "support.hpp"
#include "varentropy/csv.hpp"
#include "varentropy/gaussian_oracle.hpp"
#include "varentropy/scenario.hpp"

using namespace varentropy;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json ou_doc(double sigma0_sq = 0.25) {
    return json{{"name", "ou_test"},
                {"drift", {{"kind", "linear"}, {"rate", -0.5}, {"sigma", 1.0}}},
                {"initial", {{"kind", "gaussian"}, {"mean", 0.0}, {"variance", sigma0_sq}}},
                {"grid", {{"lo", -8.0}, {"hi", 8.0}, {"n", 801}}},
                {"solver", {{"dt", 1e-3}}},
                {"t_grid", {{"t_end", 1.0}, {"n_samples", 101}}}};
}

json double_well_doc() {
    return json{{"name", "dw_test"},
                {"drift", {{"kind", "gradient"}, {"potential", {0.0, 0.0, -0.5, 0.0, 0.25}}, {"sigma", 1.0}}},
                {"initial",
                 {{"kind", "mixture"},
                  {"components",
                   {{{"weight", 0.5}, {"mean", -1.0}, {"variance", 0.1}},
                    {{"weight", 0.5}, {"mean", 1.0}, {"variance", 0.1}}}}}},
                {"grid", {{"lo", -4.0}, {"hi", 4.0}, {"n", 801}}},
                {"solver", {{"dt", 5e-4}}},
                {"t_grid", {{"t_end", 1.0}, {"n_samples", 201}}}};
}

std::string config_error(const json& doc) {
    try {
        ScenarioConfig::from_json(doc);
    } catch (const Error& e) {
        CHECK(e.code() == Errc::config_validation);
        return e.what();
    }
    return "";
}

bool contains(const std::string& s, const std::string& part) { return s.find(part) != std::string::npos; }

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const Check* find_check(const ScenarioOutcome& o, const std::string& name) {
    for (const auto& c : o.checks)
        if (c.name == name) return &c;
    return nullptr;
}

fs::path temp_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("varentropy_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("config validation names the offending field") {
    auto doc = ou_doc();
    doc.erase("drift");
    CHECK(contains(config_error(doc), "drift"));

    doc = double_well_doc();
    doc["initial"]["components"][1]["weight"] = 0.6;
    CHECK(contains(config_error(doc), "initial.components: weights must sum to 1"));

    doc = double_well_doc();
    doc["initial"]["components"][1]["weight"] = -0.5;
    CHECK(contains(config_error(doc), "initial.components[1].weight"));

    doc = ou_doc();
    doc["grid"]["n"] = 2;
    CHECK(contains(config_error(doc), "grid.n"));

    doc = ou_doc();
    doc["solver"]["scheme"] = "upwind";
    CHECK(contains(config_error(doc), "solver.scheme"));

    doc = ou_doc();
    doc["drift"]["rate"] = 0.5;
    CHECK(contains(config_error(doc), "drift"));

    doc = ou_doc();
    doc["drift"]["rate"] = "fast";
    CHECK(contains(config_error(doc), "drift.rate"));
}

TEST_CASE("grid must contain the initial and invariant laws") {
    auto doc = ou_doc(4.0);
    CHECK(contains(config_error(doc), "initial mass outside"));
    doc = ou_doc(0.25);
    doc["grid"] = {{"lo", -5.0}, {"hi", 5.0}, {"n", 501}};
    CHECK(contains(config_error(doc), "invariant mass outside"));
    doc["grid"] = {{"lo", -6.5}, {"hi", 6.5}, {"n", 651}};
    CHECK_NOTHROW(ScenarioConfig::from_json(doc));
}

TEST_CASE("OU scenario functionals match the closed forms") {
    const auto out = evaluate_scenario(ScenarioConfig::from_json(ou_doc()));
    CHECK(out.passed());
    for (const auto& r : out.functionals)
        CHECK(r.V == doctest::Approx(ou::varentropy_V({0.25}, r.time)).epsilon(1e-3));
    REQUIRE(find_check(out, "oracle_varentropy"));
    CHECK(find_check(out, "oracle_varentropy")->passed);
    CHECK(out.consistency.size() == out.functionals.size() - 2);
}

TEST_CASE("stationary scenario is identically zero") {
    auto doc = ou_doc();
    doc["initial"] = {{"kind", "invariant"}};
    const auto out = evaluate_scenario(ScenarioConfig::from_json(doc));
    CHECK(out.passed());
    for (const auto& r : out.functionals)
        for (double v : {r.D, r.I, r.V, r.dD_dt, r.dV_dt_theorem}) CHECK(std::abs(v) <= 1e-10);
    REQUIRE(find_check(out, "stationary_zero"));
}

TEST_CASE("double-well consistency") {
    const auto out = evaluate_scenario(ScenarioConfig::from_json(double_well_doc()));
    CHECK(out.passed());
    for (const auto& c : out.consistency) {
        CHECK(c.dV_rel_err <= 0.01);
        CHECK(c.dD_rel_err <= 0.01);
    }
}

TEST_CASE("table initial density") {
    const auto dir = temp_dir("table");
    {
        std::ofstream f(dir / "p0.csv");
        f << "x,density\n";
        const Grid g(-6.0, 6.0, 1201);
        for (double x : g.nodes()) f << format_real(x) << "," << format_real(support::normal_pdf(x, 0.5, 0.5)) << "\n";
    }
    auto doc = ou_doc();
    doc["initial"] = {{"kind", "table"}, {"path", "p0.csv"}};
    const auto cfg = ScenarioConfig::from_json(doc, dir);
    const auto p0 = initial_density(cfg);
    const auto ref = ou::gaussian_density(Grid(-8.0, 8.0, 801), 0.5, 0.5);
    CHECK(support::sup_diff(p0, ref) < 1e-6);
    CHECK(initial_mass_outside(cfg) < 1e-10);

    doc["initial"]["path"] = "missing.csv";
    CHECK(support::error_code([&] { ScenarioConfig::from_json(doc, dir); }) == Errc::io_failure);
}

TEST_CASE("outputs are byte-identical across runs and honour the output root") {
    auto doc = ou_doc();
    doc["t_grid"] = {{"t_end", 0.2}, {"n_samples", 21}};
    doc["mc"] = {{"n_paths", 5000}, {"dt", 0.01}, {"seed", 9}, {"functional_times", {0.0, 0.1}}};
    doc["tolerances"] = {{"martingale_t_min", 0.45}};
    const auto cfg = ScenarioConfig::from_json(doc);
    const auto a = temp_dir("run_a"), b = temp_dir("run_b");
    write_outcome(evaluate_scenario(cfg), a, true);
    write_outcome(evaluate_scenario(cfg), b, true);
    for (const char* f : {"functionals.csv", "consistency.csv", "checks.csv", "mc_diagnostics.csv", "martingale.csv",
                          "backward_drift.csv", "functionals.svg"}) {
        CAPTURE(f);
        REQUIRE(fs::exists(a / f));
        CHECK(slurp(a / f) == slurp(b / f));
    }
    CHECK(slurp(a / "functionals.csv").rfind("time,D,I,V,dD_dt,dV_dt_theorem,dV_dt_fd\n", 0) == 0);

    ::setenv("VARENTROPY_OUTPUT_ROOT", a.c_str(), 1);
    CHECK(output_dir(cfg) == a / "ou_test");
    ::unsetenv("VARENTROPY_OUTPUT_ROOT");
    CHECK(output_dir(cfg) == fs::path("out") / "ou_test");
}

TEST_CASE("OU sweep never changes sign") {
    SweepConfig sweep;
    sweep.base = ou_doc();
    sweep.base["grid"] = {{"lo", -14.0}, {"hi", 14.0}, {"n", 1401}};
    sweep.axis_name = "sigma0_sq";
    sweep.targets = {{"/initial/variance", 1.0}};
    sweep.values = {0.25, 0.5, 2.0, 4.0};
    const auto rows = monotonicity_sweep(sweep, false);
    REQUIRE(rows.size() == 4);
    for (const auto& r : rows) {
        CHECK_FALSE(r.sign_change);
        CHECK(r.max_dV_dt <= 0.0);
        CHECK_FALSE(r.t_M.has_value());
        CHECK(r.checks_passed);
    }
    CHECK(rows[0].min_dV_dt == doctest::Approx(-0.5625).epsilon(1e-3));
    CHECK(rows[3].min_dV_dt == doctest::Approx(-9.0).epsilon(1e-3));
}

TEST_CASE("single-value sweep at the stationary start") {
    SweepConfig sweep;
    sweep.base = ou_doc();
    sweep.axis_name = "sigma0_sq";
    sweep.targets = {{"/initial/variance", 1.0}};
    sweep.values = {1.0};
    const auto rows = monotonicity_sweep(sweep, false);
    REQUIRE(rows.size() == 1);
    CHECK(std::abs(rows[0].min_dV_dt) <= 1e-10);
    CHECK(std::abs(rows[0].max_dV_dt) <= 1e-10);
    CHECK_FALSE(rows[0].sign_change);
}

TEST_CASE("sweep configuration") {
    const json doc{{"base", ou_doc()},
                   {"axis", {{"name", "shift"}, {"targets", {{{"pointer", "/initial/mean"}, {"scale", -1.0}}}}}},
                   {"values", {0.5}}};
    const auto cfg = SweepConfig::from_json(doc);
    CHECK(cfg.scenario_document(0.5)["initial"]["mean"] == -0.5);

    json bad = doc;
    bad["axis"]["targets"][0]["pointer"] = "/initial/nope";
    CHECK(support::error_code([&] { SweepConfig::from_json(bad); }) == Errc::config_validation);
    bad = doc;
    bad["values"] = json::array();
    CHECK(support::error_code([&] { SweepConfig::from_json(bad); }) == Errc::config_validation);
}

TEST_CASE("sweep summary flags a rise in varentropy") {
    ScenarioOutcome o;
    const std::vector<double> v{0.3, 0.2, 0.25, 0.4, 0.35, 0.1};
    for (std::size_t k = 0; k < v.size(); ++k) {
        FunctionalReport r;
        r.time = 0.1 * static_cast<double>(k);
        r.V = v[k];
        r.dV_dt_theorem = k + 1 < v.size() ? (v[k + 1] - v[k]) / 0.1 : -2.5;
        o.functionals.push_back(r);
    }
    const auto row = summarize_sweep_point(3.0, o);
    CHECK(row.sign_change);
    REQUIRE(row.t_M.has_value());
    CHECK(*row.t_M == doctest::Approx(0.3));
    CHECK(row.V_max == 0.4);
    CHECK(sweep_csv({row}, "s").rfind("s,min_dV_dt,max_dV_dt,sign_change,t_M,V_max,checks_passed\n3,", 0) == 0);
}

TEST_CASE("convergence study") {
    SUBCASE("OU, three levels") {
        auto doc = ou_doc();
        doc["grid"]["n"] = 401;
        doc["solver"]["dt"] = 2e-3;
        doc["t_grid"] = {{"t_end", 1.0}, {"n_samples", 11}};
        const auto table = convergence_study(ScenarioConfig::from_json(doc), 3);
        REQUIRE(table.rows.size() == 3);
        CHECK(table.rows[2].n == 1601);
        CHECK(table.rows[2].dt == doctest::Approx(5e-4));
        REQUIRE(table.fitted_order_variance.has_value());
        CHECK(*table.fitted_order_variance >= 1.8);
        CHECK(*table.fitted_order_variance <= 2.2);
        CHECK(*table.fitted_order_V >= 1.8);
        CHECK(*table.fitted_order_V <= 2.2);
    }
    SUBCASE("two levels report one ratio and no fit") {
        auto doc = ou_doc();
        doc["grid"]["n"] = 401;
        doc["t_grid"] = {{"t_end", 0.5}, {"n_samples", 6}};
        const auto table = convergence_study(ScenarioConfig::from_json(doc), 2);
        CHECK_FALSE(table.rows[0].order_variance.has_value());
        CHECK(table.rows[1].order_variance.has_value());
        CHECK_FALSE(table.fitted_order_variance.has_value());
        CHECK(contains(convergence_csv(table), "level,n,dx,dt,err_variance,err_V,order_variance,order_V\n"));
    }
    SUBCASE("stationary start has no error") {
        auto doc = ou_doc(1.0);
        doc["t_grid"] = {{"t_end", 0.5}, {"n_samples", 6}};
        const auto table = convergence_study(ScenarioConfig::from_json(doc), 2);
        for (const auto& r : table.rows) {
            CHECK(r.err_variance <= 1e-12);
            CHECK(r.err_V <= 1e-12);
        }
    }
    CHECK(support::error_code([] { convergence_study(ScenarioConfig::from_json(ou_doc()), 1); }) ==
          Errc::config_validation);
    CHECK(support::error_code([] { convergence_study(ScenarioConfig::from_json(double_well_doc()), 2); }) ==
          Errc::config_validation);
}

TEST_CASE("oracle table") {
    const auto csv = oracle_csv(0.25, 1.0, 3);
    std::istringstream in(csv);
    std::string header, first;
    std::getline(in, header);
    std::getline(in, first);
    CHECK(header == "time,variance,D,V,I,dD_dt,dV_dt");
    CHECK(contains(first, "0,0.25,0.3181471805599"));
    CHECK(contains(first, ",0.28125,2.25,-1.125,-0.5625"));
}
