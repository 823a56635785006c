#include <cstdio>
#include <iostream>

#include "CLI11.hpp"

#include "varentropy/csv.hpp"
#include "varentropy/error.hpp"
#include "varentropy/scenario.hpp"

namespace fs = std::filesystem;
using namespace varentropy;

namespace {

void print_checks(const ScenarioOutcome& outcome) {
    for (const auto& c : outcome.checks)
        std::cout << (c.passed ? "[PASS] " : "[FAIL] ") << outcome.name << ": " << c.name << "  " << c.detail << "\n";
}

int cmd_run(const fs::path& config, bool svg) {
    auto cfg = ScenarioConfig::load(config);
    cfg.svg = cfg.svg || svg;
    cfg.solver.warn = [](const std::string& msg) { std::cerr << "warning: " << msg << "\n"; };
    const auto outcome = run_scenario(cfg);
    print_checks(outcome);
    std::cout << "outputs written to " << output_dir(cfg).string() << "\n";
    return outcome.passed() ? 0 : 1;
}

int cmd_sweep(const fs::path& config) {
    const auto cfg = SweepConfig::load(config);
    const auto rows = monotonicity_sweep(cfg, true);
    std::cout << sweep_csv(rows, cfg.axis_name);
    bool ok = true;
    for (const auto& r : rows) ok = ok && r.checks_passed;
    return ok ? 0 : 1;
}

int cmd_converge(const fs::path& config, std::size_t levels, const std::string& out) {
    const auto cfg = ScenarioConfig::load(config);
    const auto csv = convergence_csv(convergence_study(cfg, levels));
    if (out.empty()) std::cout << csv;
    else write_file_atomic(out, csv);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Relative entropy and varentropy of Fokker-Planck flows"};
    app.require_subcommand(1);

    fs::path run_config;
    bool run_svg = false;
    auto* run = app.add_subcommand("run", "Solve one scenario, evaluate its checks and write CSV outputs");
    run->add_option("config", run_config, "Scenario JSON file")->required()->check(CLI::ExistingFile);
    run->add_flag("--svg", run_svg, "Also write functionals.svg");

    fs::path sweep_config;
    auto* sweep = app.add_subcommand("sweep", "Run a monotonicity sweep and print the summary table");
    sweep->add_option("config", sweep_config, "Sweep JSON file")->required()->check(CLI::ExistingFile);

    fs::path conv_config;
    std::size_t levels = 3;
    std::string conv_out;
    auto* converge = app.add_subcommand("converge", "Grid and time-step refinement against the OU closed forms");
    converge->add_option("config", conv_config, "Scenario JSON file (OU drift, centered Gaussian start)")
        ->required()
        ->check(CLI::ExistingFile);
    converge->add_option("--levels", levels, "Number of refinement levels")->check(CLI::Range(2, 8));
    converge->add_option("-o,--output", conv_out, "Write the table here instead of stdout");

    double sigma0_sq = 0.25, t_end = 3.0;
    std::size_t samples = 301;
    auto* oracle = app.add_subcommand("oracle", "Print the closed-form OU functionals");
    oracle->add_option("--sigma0-sq", sigma0_sq, "Initial variance")->required()->check(CLI::PositiveNumber);
    oracle->add_option("--t-end", t_end, "Final time")->required()->check(CLI::NonNegativeNumber);
    oracle->add_option("--samples", samples, "Number of sample times")->check(CLI::Range(2, 10000000));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (*run) return cmd_run(run_config, run_svg);
        if (*sweep) return cmd_sweep(sweep_config);
        if (*converge) return cmd_converge(conv_config, levels, conv_out);
        if (*oracle) {
            std::cout << oracle_csv(sigma0_sq, t_end, samples);
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
