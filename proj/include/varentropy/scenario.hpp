#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "varentropy/drift.hpp"
#include "varentropy/fokker_planck.hpp"
#include "varentropy/functionals.hpp"
#include "varentropy/sde_mc.hpp"

namespace varentropy {

struct GaussianComponent {
    double weight = 1.0;
    double mean = 0.0;
    double variance = 1.0;
};

struct GaussianInit {
    double mean = 0.0;
    double variance = 1.0;
};
struct MixtureInit {
    std::vector<GaussianComponent> components;
};
/// Two-column CSV (x, density) with a header line, interpolated onto the grid.
struct TableInit {
    std::filesystem::path path;
};
/// Start at the invariant density of the drift.
struct InvariantInit {};

using InitialSpec = std::variant<GaussianInit, MixtureInit, TableInit, InvariantInit>;

struct GridSpec {
    double lo = -8.0;
    double hi = 8.0;
    std::size_t n = 801;
};

struct TimeGridSpec {
    double t_end = 3.0;
    /// Samples including t = 0 and t_end.
    std::size_t n_samples = 301;

    std::vector<double> times() const;
};

struct McSpec {
    std::size_t n_paths = 100000;
    double dt = 1e-2;
    /// Defaults to the PDE horizon.
    std::optional<double> t_end;
    std::uint64_t seed = 1;
    std::size_t substeps = 1;
    std::optional<GridSpec> bins;
    std::size_t min_count = 50;
    /// Times for the duality check; defaults to the last ensemble time.
    std::vector<double> duality_times;
    std::vector<double> functional_times{0.0, 0.5, 1.0};
};

/// Thresholds of the pass/fail checks that decide a run's exit status.
struct Tolerances {
    double mass = 1e-10;
    double oracle_rel = 1e-3;
    double oracle_abs = 1e-10;
    double rate_rel = 0.01;
    double fed_rel = 0.01;
    double rel_floor = 1e-6;
    double stationary_abs = 1e-10;
    double mc_se = 3.0;
    /// Earliest time at which mean(M_t) is compared with 1.
    double martingale_t_min = 0.0;
};

struct ScenarioConfig {
    std::string name = "scenario";
    DriftModel drift = DriftModel::linear(-0.5, 1.0);
    InitialSpec initial = GaussianInit{};
    GridSpec grid;
    SolverConfig solver;
    TimeGridSpec t_grid;
    std::optional<McSpec> mc;
    FunctionalOptions functionals;
    Tolerances tolerances;
    std::filesystem::path outputs = "out";
    bool svg = false;

    /// Throws Error(config_validation) naming the offending field, e.g. "initial.components[1].weight".
    static ScenarioConfig from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = ".");
    static ScenarioConfig load(const std::filesystem::path& file);

    /// Invariants that need the drift and the grid together (mass outside the domain).
    void validate() const;
};

/// Initial density of a scenario on its grid.
Density initial_density(const ScenarioConfig& cfg);

/// Mass of the initial law outside [lo, hi].
double initial_mass_outside(const ScenarioConfig& cfg);

/// True when the drift is -x/2 with sigma 1 and the start is a centered Gaussian.
std::optional<double> ou_initial_variance(const ScenarioConfig& cfg);

struct Check {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct ConsistencyRow {
    double time = 0.0;
    double dV_dt_theorem = 0.0;
    double dV_dt_fd = 0.0;
    double dV_rel_err = 0.0;
    double dD_dt = 0.0;
    double dD_dt_fd = 0.0;
    double dD_rel_err = 0.0;
};

/// One line of mc_diagnostics.csv.
struct McDiagnosticRow {
    std::string diagnostic;
    double time = 0.0;
    double estimate = 0.0;
    double reference = 0.0;
    double std_error = 0.0;
    /// |estimate - reference| / std_error (or rms / pooled SE for binned residuals).
    double statistic = 0.0;
    /// False for rows reported for information only (outside the configured check window).
    bool checked = true;
    bool passed = false;
};

struct BinRow {
    double time;
    double bin_center;
    std::size_t count;
    double estimate;
    double std_error;
    double target;
};

struct ScenarioOutcome {
    std::string name;
    DensityTrajectory trajectory;
    std::vector<FunctionalReport> functionals;
    std::vector<ConsistencyRow> consistency;
    std::vector<McDiagnosticRow> mc_diagnostics;
    std::vector<MartingaleRow> martingale;
    std::vector<BinRow> backward_drift;
    std::vector<Check> checks;

    bool passed() const noexcept;
};

/// Runs the PDE (and, when configured, the Monte Carlo) part of a scenario without writing files.
ScenarioOutcome evaluate_scenario(const ScenarioConfig& cfg);

/// Output directory: $VARENTROPY_OUTPUT_ROOT/<name> when the variable is set, else cfg.outputs.
std::filesystem::path output_dir(const ScenarioConfig& cfg);

/// Writes functionals.csv, consistency.csv, checks.csv and the Monte Carlo files into `dir`.
void write_outcome(const ScenarioOutcome& outcome, const std::filesystem::path& dir, bool svg);

ScenarioOutcome run_scenario(const ScenarioConfig& cfg);

struct SweepTarget {
    /// JSON pointer into the base scenario document, e.g. "/initial/components/0/mean".
    std::string pointer;
    double scale = 1.0;
};

struct SweepConfig {
    nlohmann::json base;
    std::filesystem::path base_dir = ".";
    std::string axis_name;
    std::vector<SweepTarget> targets;
    std::vector<double> values;
    std::filesystem::path outputs = "out/sweep";
    unsigned threads = 0;

    static SweepConfig from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = ".");
    static SweepConfig load(const std::filesystem::path& file);

    /// Base document with every target set to scale * value.
    nlohmann::json scenario_document(double value) const;
};

struct SweepRow {
    double value = 0.0;
    double min_dV_dt = 0.0;
    double max_dV_dt = 0.0;
    bool sign_change = false;
    std::optional<double> t_M;
    double V_max = 0.0;
    bool checks_passed = false;
};

/// Threshold below which |dV/dt| counts as zero for the sign-change flag.
inline constexpr double sweep_sign_tolerance = 1e-12;

/// Sign data of dV/dt from the summary of one scenario.
SweepRow summarize_sweep_point(double value, const ScenarioOutcome& outcome);

/// Runs every sweep value (concurrently) and writes sweep_summary.csv plus each scenario's files.
std::vector<SweepRow> monotonicity_sweep(const SweepConfig& cfg, bool write_files = true);

std::string sweep_csv(const std::vector<SweepRow>& rows, const std::string& axis_name);

struct ConvergenceRow {
    std::size_t level = 0;
    std::size_t n = 0;
    double dx = 0.0;
    double dt = 0.0;
    double err_variance = 0.0;
    double err_V = 0.0;
    /// log2 of the error ratio with the previous level.
    std::optional<double> order_variance;
    std::optional<double> order_V;
};

struct ConvergenceTable {
    std::vector<ConvergenceRow> rows;
    /// Least-squares slope of -log2(error) against level; only with three or more levels.
    std::optional<double> fitted_order_variance;
    std::optional<double> fitted_order_V;
};

/// Halves dx and dt `levels - 1` times; errors are max over sample times against the OU closed forms.
ConvergenceTable convergence_study(const ScenarioConfig& cfg, std::size_t levels);

std::string convergence_csv(const ConvergenceTable& table);

/// Closed-form OU table: time, variance, D, V, I, dD_dt, dV_dt.
std::string oracle_csv(double sigma0_sq, double t_end, std::size_t n_samples);

}  // namespace varentropy
