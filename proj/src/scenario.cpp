#include "varentropy/scenario.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "varentropy/csv.hpp"
#include "varentropy/error.hpp"
#include "varentropy/gaussian_oracle.hpp"
#include "varentropy/svg.hpp"

namespace varentropy {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

[[noreturn]] void config_error(const std::string& path, const std::string& what) {
    throw Error(Errc::config_validation, path + ": " + what);
}

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

const json* find(const json& obj, const std::string& key) {
    if (!obj.is_object()) return nullptr;
    const auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
}

const json& require(const json& obj, const std::string& key, const std::string& path) {
    if (!obj.is_object()) config_error(path, "expected an object");
    const json* v = find(obj, key);
    if (!v) config_error(join(path, key), "required field is missing");
    return *v;
}

double number(const json& v, const std::string& path) {
    if (!v.is_number()) config_error(path, "expected a number");
    return v.get<double>();
}

double number_or(const json& obj, const std::string& key, const std::string& path, double fallback) {
    const json* v = find(obj, key);
    return v ? number(*v, join(path, key)) : fallback;
}

std::size_t count_or(const json& obj, const std::string& key, const std::string& path, std::size_t fallback) {
    const json* v = find(obj, key);
    if (!v) return fallback;
    if (!v->is_number_integer() || v->get<long long>() < 0)
        config_error(join(path, key), "expected a non-negative integer");
    return v->get<std::size_t>();
}

std::string string_or(const json& obj, const std::string& key, const std::string& path, const std::string& fallback) {
    const json* v = find(obj, key);
    if (!v) return fallback;
    if (!v->is_string()) config_error(join(path, key), "expected a string");
    return v->get<std::string>();
}

bool bool_or(const json& obj, const std::string& key, const std::string& path, bool fallback) {
    const json* v = find(obj, key);
    if (!v) return fallback;
    if (!v->is_boolean()) config_error(join(path, key), "expected true or false");
    return v->get<bool>();
}

std::vector<double> numbers(const json& v, const std::string& path) {
    if (!v.is_array()) config_error(path, "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(number(v[i], path + "[" + std::to_string(i) + "]"));
    return out;
}

DriftModel parse_drift(const json& j, const std::string& path) {
    const std::string kind = string_or(j, "kind", path, "");
    const double sigma = number_or(j, "sigma", path, 1.0);
    if (!(sigma > 0.0)) config_error(join(path, "sigma"), "must be positive");
    if (kind == "linear") {
        const double rate = number(require(j, "rate", path), join(path, "rate"));
        return DriftModel::linear(rate, sigma);
    }
    if (kind == "gradient") {
        const auto c = numbers(require(j, "potential", path), join(path, "potential"));
        if (c.empty() || c.size() > 5) config_error(join(path, "potential"), "expected 1 to 5 coefficients c0..c4");
        PotentialSpec spec;
        std::copy(c.begin(), c.end(), spec.coeffs.begin());
        return DriftModel::gradient(spec, sigma);
    }
    if (kind == "double_well") return DriftModel::double_well(sigma);
    config_error(join(path, "kind"), "expected \"linear\", \"gradient\" or \"double_well\"");
}

GaussianComponent parse_component(const json& j, const std::string& path, bool with_weight) {
    GaussianComponent c;
    c.weight = with_weight ? number(require(j, "weight", path), join(path, "weight")) : 1.0;
    c.mean = number_or(j, "mean", path, 0.0);
    c.variance = number(require(j, "variance", path), join(path, "variance"));
    if (!(c.variance > 0.0)) config_error(join(path, "variance"), "must be positive");
    if (!(c.weight > 0.0)) config_error(join(path, "weight"), "must be positive");
    return c;
}

InitialSpec parse_initial(const json& j, const std::string& path, const fs::path& base_dir) {
    const std::string kind = string_or(j, "kind", path, "");
    if (kind == "gaussian") {
        const auto c = parse_component(j, path, false);
        return GaussianInit{c.mean, c.variance};
    }
    if (kind == "mixture") {
        const json& comps = require(j, "components", path);
        const std::string cpath = join(path, "components");
        if (!comps.is_array() || comps.empty()) config_error(cpath, "expected a non-empty array");
        MixtureInit mix;
        double total = 0.0;
        for (std::size_t i = 0; i < comps.size(); ++i) {
            mix.components.push_back(parse_component(comps[i], cpath + "[" + std::to_string(i) + "]", true));
            total += mix.components.back().weight;
        }
        if (std::abs(total - 1.0) > 1e-9) config_error(cpath, "weights must sum to 1");
        return mix;
    }
    if (kind == "table") {
        fs::path file = string_or(j, "path", path, "");
        if (file.empty()) config_error(join(path, "path"), "required field is missing");
        if (file.is_relative()) file = base_dir / file;
        return TableInit{file};
    }
    if (kind == "invariant") return InvariantInit{};
    config_error(join(path, "kind"), "expected \"gaussian\", \"mixture\", \"table\" or \"invariant\"");
}

GridSpec parse_grid(const json& j, const std::string& path) {
    GridSpec g;
    g.lo = number(require(j, "lo", path), join(path, "lo"));
    g.hi = number(require(j, "hi", path), join(path, "hi"));
    g.n = count_or(j, "n", path, 0);
    if (!(g.lo < g.hi)) config_error(path, "requires lo < hi");
    if (g.n < 3) config_error(join(path, "n"), "requires at least 3 nodes");
    return g;
}

SolverConfig parse_solver(const json& j, const std::string& path) {
    SolverConfig s;
    s.dt = number_or(j, "dt", path, s.dt);
    s.theta = number_or(j, "theta", path, s.theta);
    s.mass_tol = number_or(j, "mass_tol", path, s.mass_tol);
    s.startup_steps = count_or(j, "startup_steps", path, s.startup_steps);
    const std::string scheme = string_or(j, "scheme", path, "chang_cooper");
    if (scheme == "chang_cooper") s.scheme = Scheme::ChangCooper;
    else if (scheme == "crank_nicolson") s.scheme = Scheme::CrankNicolson;
    else config_error(join(path, "scheme"), "expected \"chang_cooper\" or \"crank_nicolson\"");
    if (!(s.dt > 0.0)) config_error(join(path, "dt"), "must be positive");
    if (!(s.mass_tol > 0.0)) config_error(join(path, "mass_tol"), "must be positive");
    if (!(s.theta >= 0.0 && s.theta <= 1.0)) config_error(join(path, "theta"), "must lie in [0, 1]");
    return s;
}

McSpec parse_mc(const json& j, const std::string& path) {
    McSpec mc;
    mc.n_paths = count_or(j, "n_paths", path, mc.n_paths);
    mc.dt = number_or(j, "dt", path, mc.dt);
    if (const json* t = find(j, "t_end")) mc.t_end = number(*t, join(path, "t_end"));
    if (const json* s = find(j, "seed")) {
        if (!s->is_number_unsigned() && !(s->is_number_integer() && s->get<long long>() >= 0))
            config_error(join(path, "seed"), "expected a non-negative integer");
        mc.seed = s->get<std::uint64_t>();
    }
    mc.substeps = count_or(j, "substeps", path, mc.substeps);
    if (const json* b = find(j, "bins")) mc.bins = parse_grid(*b, join(path, "bins"));
    mc.min_count = count_or(j, "min_count", path, mc.min_count);
    if (const json* d = find(j, "duality_times")) mc.duality_times = numbers(*d, join(path, "duality_times"));
    if (const json* f = find(j, "functional_times")) mc.functional_times = numbers(*f, join(path, "functional_times"));
    if (mc.n_paths < 2) config_error(join(path, "n_paths"), "requires at least 2 paths");
    if (!(mc.dt > 0.0)) config_error(join(path, "dt"), "must be positive");
    if (mc.substeps == 0) config_error(join(path, "substeps"), "must be at least 1");
    return mc;
}

Tolerances parse_tolerances(const json& j, const std::string& path) {
    Tolerances t;
    t.mass = number_or(j, "mass", path, t.mass);
    t.oracle_rel = number_or(j, "oracle_rel", path, t.oracle_rel);
    t.oracle_abs = number_or(j, "oracle_abs", path, t.oracle_abs);
    t.rate_rel = number_or(j, "rate_rel", path, t.rate_rel);
    t.fed_rel = number_or(j, "fed_rel", path, t.fed_rel);
    t.rel_floor = number_or(j, "rel_floor", path, t.rel_floor);
    t.stationary_abs = number_or(j, "stationary_abs", path, t.stationary_abs);
    t.mc_se = number_or(j, "mc_se", path, t.mc_se);
    t.martingale_t_min = number_or(j, "martingale_t_min", path, t.martingale_t_min);
    return t;
}

json read_json_file(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw Error(Errc::io_failure, "cannot open " + file.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error(Errc::config_validation, file.string() + ": " + e.what());
    }
}

double gaussian_mass_outside(double mean, double variance, double lo, double hi) {
    const double s = std::sqrt(2.0 * variance);
    return 0.5 * std::erfc((hi - mean) / s) + 0.5 * std::erfc((mean - lo) / s);
}

struct Table {
    std::vector<double> x;
    std::vector<double> p;
};

Table read_table(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw Error(Errc::io_failure, "cannot open density table " + file.string());
    Table t;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream row(line);
        double x = 0.0, p = 0.0;
        if (!(row >> x >> p)) {
            if (t.x.empty()) continue;  // header
            throw Error(Errc::config_validation, file.string() + ":" + std::to_string(line_no) + ": expected x,density");
        }
        if (!t.x.empty() && !(x > t.x.back()))
            throw Error(Errc::config_validation, file.string() + ": x column must be strictly increasing");
        if (!(p >= 0.0)) throw Error(Errc::config_validation, file.string() + ": density values must be non-negative");
        t.x.push_back(x);
        t.p.push_back(p);
    }
    if (t.x.size() < 2) throw Error(Errc::config_validation, file.string() + ": need at least two rows");
    return t;
}

double table_value(const Table& t, double x) {
    if (x < t.x.front() || x > t.x.back()) return 0.0;
    const auto it = std::upper_bound(t.x.begin(), t.x.end(), x);
    if (it == t.x.end()) return t.p.back();
    const auto i = static_cast<std::size_t>(it - t.x.begin()) - 1;
    const double f = (x - t.x[i]) / (t.x[i + 1] - t.x[i]);
    return t.p[i] + f * (t.p[i + 1] - t.p[i]);
}

// Exact integral of the piecewise-linear table over [a, b].
double table_mass(const Table& t, double a, double b) {
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < t.x.size(); ++i) {
        const double l = std::max(a, t.x[i]), r = std::min(b, t.x[i + 1]);
        if (r <= l) continue;
        acc += 0.5 * (r - l) * (table_value(t, l) + table_value(t, r));
    }
    return acc;
}

std::string fmt(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

double relative_error(double value, double reference, double floor) {
    return std::abs(value - reference) / std::max(std::abs(reference), floor);
}

// z-score style statistic; differences at round-off level count as zero.
double se_statistic(double diff, double se, double abs_floor) {
    diff = std::abs(diff);
    if (diff <= abs_floor) return 0.0;
    return se > 0 ? diff / se : std::numeric_limits<double>::infinity();
}

std::size_t time_index(const std::vector<double>& times, double t, const std::string& what) {
    for (std::size_t k = 0; k < times.size(); ++k)
        if (std::abs(times[k] - t) <= 1e-9 * std::max(1.0, std::abs(t))) return k;
    throw Error(Errc::config_validation, what + ": time " + fmt(t) + " is not on the ensemble time mesh");
}

}  // namespace

std::vector<double> TimeGridSpec::times() const {
    if (!(t_end > 0.0)) throw Error(Errc::config_validation, "t_grid.t_end: must be positive");
    if (n_samples < 2) throw Error(Errc::config_validation, "t_grid.n_samples: requires at least 2 samples");
    std::vector<double> ts(n_samples);
    for (std::size_t k = 0; k < n_samples; ++k)
        ts[k] = t_end * static_cast<double>(k) / static_cast<double>(n_samples - 1);
    ts.back() = t_end;
    return ts;
}

ScenarioConfig ScenarioConfig::from_json(const json& doc, const fs::path& base_dir) {
    if (!doc.is_object()) config_error("(root)", "expected a JSON object");
    ScenarioConfig cfg;
    cfg.name = string_or(doc, "name", "", cfg.name);
    if (cfg.name.empty()) config_error("name", "must not be empty");
    cfg.drift = parse_drift(require(doc, "drift", ""), "drift");
    cfg.initial = parse_initial(require(doc, "initial", ""), "initial", base_dir);
    cfg.grid = parse_grid(require(doc, "grid", ""), "grid");
    if (const json* s = find(doc, "solver")) cfg.solver = parse_solver(*s, "solver");
    if (const json* t = find(doc, "t_grid")) {
        cfg.t_grid.t_end = number_or(*t, "t_end", "t_grid", cfg.t_grid.t_end);
        cfg.t_grid.n_samples = count_or(*t, "n_samples", "t_grid", cfg.t_grid.n_samples);
        if (!(cfg.t_grid.t_end > 0.0)) config_error("t_grid.t_end", "must be positive");
        if (cfg.t_grid.n_samples < 2) config_error("t_grid.n_samples", "requires at least 2 samples");
    }
    if (const json* m = find(doc, "mc")) cfg.mc = parse_mc(*m, "mc");
    if (const json* f = find(doc, "functionals")) {
        cfg.functionals.log_floor = number_or(*f, "log_floor", "functionals", cfg.functionals.log_floor);
        cfg.functionals.tail_cut = number_or(*f, "tail_cut", "functionals", cfg.functionals.tail_cut);
        if (!(cfg.functionals.log_floor > 0.0)) config_error("functionals.log_floor", "must be positive");
        if (!(cfg.functionals.tail_cut >= 0.0)) config_error("functionals.tail_cut", "must be non-negative");
    }
    if (const json* t = find(doc, "tolerances")) cfg.tolerances = parse_tolerances(*t, "tolerances");
    cfg.outputs = string_or(doc, "outputs", "", (fs::path("out") / cfg.name).string());
    cfg.svg = bool_or(doc, "svg", "", false);
    cfg.validate();
    return cfg;
}

ScenarioConfig ScenarioConfig::load(const fs::path& file) {
    return from_json(read_json_file(file), file.has_parent_path() ? file.parent_path() : fs::path("."));
}

void ScenarioConfig::validate() const {
    if (!drift.confining()) config_error("drift", "must be confining (negative rate or potential growing at infinity)");
    const double outside_init = initial_mass_outside(*this);
    if (outside_init > 1e-10)
        config_error("grid", "initial mass outside [lo, hi] is " + fmt(outside_init) + " (limit 1e-10)");
    const double outside_inv = invariant_mass_outside(drift, grid.lo, grid.hi);
    if (outside_inv > 1e-10)
        config_error("grid", "invariant mass outside [lo, hi] is " + fmt(outside_inv) + " (limit 1e-10)");
}

double initial_mass_outside(const ScenarioConfig& cfg) {
    const double lo = cfg.grid.lo, hi = cfg.grid.hi;
    return std::visit(
        [&](const auto& init) -> double {
            using T = std::decay_t<decltype(init)>;
            if constexpr (std::is_same_v<T, GaussianInit>) {
                return gaussian_mass_outside(init.mean, init.variance, lo, hi);
            } else if constexpr (std::is_same_v<T, MixtureInit>) {
                double acc = 0.0;
                for (const auto& c : init.components) acc += c.weight * gaussian_mass_outside(c.mean, c.variance, lo, hi);
                return acc;
            } else if constexpr (std::is_same_v<T, TableInit>) {
                const auto t = read_table(init.path);
                const double total = table_mass(t, t.x.front(), t.x.back());
                if (!(total > 0.0)) throw Error(Errc::config_validation, "initial.path: table has zero mass");
                return std::max(0.0, 1.0 - table_mass(t, lo, hi) / total);
            } else {
                return invariant_mass_outside(cfg.drift, lo, hi);
            }
        },
        cfg.initial);
}

Density initial_density(const ScenarioConfig& cfg) {
    const Grid grid(cfg.grid.lo, cfg.grid.hi, cfg.grid.n);
    return std::visit(
        [&](const auto& init) -> Density {
            using T = std::decay_t<decltype(init)>;
            if constexpr (std::is_same_v<T, GaussianInit>) {
                return ou::gaussian_density(grid, init.mean, init.variance);
            } else if constexpr (std::is_same_v<T, MixtureInit>) {
                std::vector<double> v(grid.size(), 0.0);
                for (const auto& c : init.components) {
                    const auto g = ou::gaussian_density(grid, c.mean, c.variance);
                    for (std::size_t i = 0; i < v.size(); ++i) v[i] += c.weight * g[i];
                }
                return Density::normalized(grid, std::move(v));
            } else if constexpr (std::is_same_v<T, TableInit>) {
                const auto t = read_table(init.path);
                std::vector<double> v(grid.size());
                for (std::size_t i = 0; i < v.size(); ++i) v[i] = table_value(t, grid.x(i));
                return Density::normalized(grid, std::move(v));
            } else {
                return invariant_density(cfg.drift, grid);
            }
        },
        cfg.initial);
}

std::optional<double> ou_initial_variance(const ScenarioConfig& cfg) {
    const auto* lin = std::get_if<LinearDrift>(&cfg.drift.kind());
    if (!lin || lin->rate != ou::drift_rate || cfg.drift.sigma() != ou::diffusion) return std::nullopt;
    if (const auto* g = std::get_if<GaussianInit>(&cfg.initial); g && g->mean == 0.0) return g->variance;
    if (std::holds_alternative<InvariantInit>(cfg.initial)) return 1.0;
    return std::nullopt;
}

bool ScenarioOutcome::passed() const noexcept {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
}

namespace {

void pde_checks(const ScenarioConfig& cfg, ScenarioOutcome& out) {
    const auto& tol = cfg.tolerances;
    const auto& reps = out.functionals;

    double worst_mass = 0.0, min_value = 0.0;
    for (const auto& state : out.trajectory.states()) {
        worst_mass = std::max(worst_mass, std::abs(state.mass() - 1.0));
        for (double v : state.values()) min_value = std::min(min_value, v);
    }
    out.checks.push_back({"mass_conservation", worst_mass <= tol.mass,
                          "max |mass - 1| = " + fmt(worst_mass) + " (tol " + fmt(tol.mass) + ")"});
    out.checks.push_back({"positivity", min_value >= 0.0, "min node value = " + fmt(min_value)});

    double max_dD = -std::numeric_limits<double>::infinity();
    for (const auto& r : reps) max_dD = std::max(max_dD, r.dD_dt);
    out.checks.push_back({"free_energy_sign", max_dD <= 0.0, "max dD/dt = " + fmt(max_dD)});

    double worst_dV = 0.0, worst_dD = 0.0;
    for (const auto& row : out.consistency) {
        worst_dV = std::max(worst_dV, row.dV_rel_err);
        worst_dD = std::max(worst_dD, row.dD_rel_err);
    }
    out.checks.push_back({"varentropy_rate_vs_fd", worst_dV <= tol.rate_rel,
                          "max relative error = " + fmt(worst_dV) + " (tol " + fmt(tol.rate_rel) + ")"});
    out.checks.push_back({"free_energy_rate_vs_fd", worst_dD <= tol.fed_rel,
                          "max relative error = " + fmt(worst_dD) + " (tol " + fmt(tol.fed_rel) + ")"});

    if (const auto s0 = ou_initial_variance(cfg)) {
        const ou::OUParams params{*s0};
        double worst_V = 0.0, worst_rate = 0.0;
        bool ok_V = true, ok_rate = true;
        for (const auto& r : reps) {
            const double v_ex = ou::varentropy_V(params, r.time);
            const double r_ex = ou::rate_dV(params, r.time);
            const double eV = std::abs(r.V - v_ex), eR = std::abs(r.dV_dt_theorem - r_ex);
            ok_V = ok_V && eV <= tol.oracle_rel * std::abs(v_ex) + tol.oracle_abs;
            ok_rate = ok_rate && eR <= tol.oracle_rel * std::abs(r_ex) + tol.oracle_abs;
            worst_V = std::max(worst_V, v_ex > 0 ? eV / v_ex : eV);
            worst_rate = std::max(worst_rate, r_ex != 0 ? eR / std::abs(r_ex) : eR);
        }
        out.checks.push_back({"oracle_varentropy", ok_V, "max relative error = " + fmt(worst_V)});
        out.checks.push_back({"oracle_varentropy_rate", ok_rate, "max relative error = " + fmt(worst_rate)});
    }

    if (std::holds_alternative<InvariantInit>(cfg.initial) || ou_initial_variance(cfg) == 1.0) {
        double worst = 0.0;
        for (const auto& r : reps)
            for (double v : {r.D, r.I, r.V, r.dD_dt, r.dV_dt_theorem}) worst = std::max(worst, std::abs(v));
        out.checks.push_back({"stationary_zero", worst <= tol.stationary_abs,
                              "max |functional| = " + fmt(worst) + " (tol " + fmt(tol.stationary_abs) + ")"});
    }
}

void mc_part(const ScenarioConfig& cfg, const McSpec& mc, const Density& p0, const Density& pbar,
             ScenarioOutcome& out) {
    const auto& tol = cfg.tolerances;
    const double t_end = mc.t_end.value_or(cfg.t_grid.t_end);
    EnsembleOptions eo;
    eo.substeps = mc.substeps;
    const auto ens = simulate_ensemble(cfg.drift, p0, mc.dt, t_end, mc.n_paths, mc.seed, eo);
    SolverConfig quiet = cfg.solver;
    quiet.warn = nullptr;
    const auto traj = solve(p0, cfg.drift, ens.times(), quiet);

    MartingaleOptions mo;
    if (mc.bins) mo.bins = Grid(mc.bins->lo, mc.bins->hi, mc.bins->n);
    mo.min_count = mc.min_count;
    mo.log_floor = cfg.functionals.log_floor;
    out.martingale = martingale_diagnostic(ens, traj, pbar, mo);

    bool mean_ok = true, cond_ok = true;
    double worst_z = 0.0, worst_cond = 0.0;
    for (const auto& row : out.martingale) {
        McDiagnosticRow d{"martingale_mean", row.time, row.mean_M, 1.0, row.se_M, 0.0, true, true};
        d.statistic = se_statistic(row.mean_M - 1.0, row.se_M, tol.stationary_abs);
        d.checked = row.time >= tol.martingale_t_min - 1e-12;
        d.passed = d.statistic <= tol.mc_se;
        if (d.checked) {
            mean_ok = mean_ok && d.passed;
            worst_z = std::max(worst_z, d.statistic);
        }
        out.mc_diagnostics.push_back(d);
        if (row.cond_residual) {
            McDiagnosticRow c{"martingale_conditional", row.time, *row.cond_residual, 0.0, *row.cond_pooled_se, 0.0,
                              true, true};
            c.statistic = se_statistic(*row.cond_residual, *row.cond_pooled_se, tol.stationary_abs);
            c.passed = c.statistic <= tol.mc_se;
            cond_ok = cond_ok && c.passed;
            worst_cond = std::max(worst_cond, c.statistic);
            out.mc_diagnostics.push_back(c);
        }
    }
    out.checks.push_back({"mc_martingale_mean", mean_ok,
                          "max |mean M - 1| / SE = " + fmt(worst_z) + " for t >= " + fmt(tol.martingale_t_min)});
    out.checks.push_back({"mc_martingale_conditional", cond_ok, "max residual / pooled SE = " + fmt(worst_cond)});

    auto duality_times = mc.duality_times;
    if (duality_times.empty()) duality_times.push_back(ens.times().back());
    bool dual_ok = true;
    double worst_dual = 0.0;
    const double s2 = cfg.drift.sigma() * cfg.drift.sigma();
    for (double t : duality_times) {
        const auto k = time_index(ens.times(), t, "mc.duality_times");
        if (k == 0) throw Error(Errc::config_validation, "mc.duality_times: needs t > 0");
        const Grid bins = mc.bins ? Grid(mc.bins->lo, mc.bins->hi, mc.bins->n) : default_bins(ens.column(k));
        const auto est = estimate_backward_drift(ens, k, bins, mc.min_count);
        const auto res = duality_residual(est, cfg.drift, traj[k], cfg.functionals.log_floor);
        McDiagnosticRow d{"duality_residual", ens.times()[k], res.rms, 0.0, res.pooled_se, 0.0, true, true};
        d.statistic = se_statistic(res.rms, res.pooled_se, tol.stationary_abs);
        d.passed = d.statistic <= tol.mc_se;
        dual_ok = dual_ok && d.passed;
        worst_dual = std::max(worst_dual, d.statistic);
        out.mc_diagnostics.push_back(d);

        std::vector<double> log_p(traj[k].grid().size());
        for (std::size_t i = 0; i < log_p.size(); ++i)
            log_p[i] = std::log(std::max(traj[k][i], cfg.functionals.log_floor));
        const auto score = gradient(log_p, traj[k].grid());
        for (std::size_t b = 0; b < est.counts.size(); ++b) {
            const double x = est.bin_centers[b];
            out.backward_drift.push_back({ens.times()[k], x, est.counts[b], est.values[b], est.std_errors[b],
                                          cfg.drift.drift(x) - s2 * interpolate(score, traj[k].grid(), x)});
        }
    }
    out.checks.push_back({"mc_duality", dual_ok, "max residual / pooled SE = " + fmt(worst_dual)});

    const auto reps = report(traj, pbar, cfg.drift.sigma(), cfg.functionals);
    bool func_ok = true;
    double worst_func = 0.0;
    for (double t : mc.functional_times) {
        if (t > ens.times().back() + 1e-12) continue;
        const auto k = time_index(ens.times(), t, "mc.functional_times");
        const auto m = mc_functionals(ens, traj, pbar, k, cfg.functionals);
        const struct {
            const char* name;
            double est, ref, se;
        } items[] = {{"mc_D", m.D_hat, reps[k].D, m.se_D},
                     {"mc_V", m.V_hat, reps[k].V, m.se_V},
                     {"mc_rate", m.rate_hat, reps[k].dV_dt_theorem, m.se_rate}};
        for (const auto& it : items) {
            McDiagnosticRow d{it.name, ens.times()[k], it.est, it.ref, it.se, 0.0, true, true};
            d.statistic = se_statistic(it.est - it.ref, it.se, tol.stationary_abs);
            d.passed = d.statistic <= tol.mc_se;
            func_ok = func_ok && d.passed;
            worst_func = std::max(worst_func, d.statistic);
            out.mc_diagnostics.push_back(d);
        }
    }
    out.checks.push_back({"mc_functionals", func_ok, "max |estimate - quadrature| / SE = " + fmt(worst_func)});
}

}  // namespace

ScenarioOutcome evaluate_scenario(const ScenarioConfig& cfg) {
    cfg.validate();
    ScenarioOutcome out;
    out.name = cfg.name;
    const Grid grid(cfg.grid.lo, cfg.grid.hi, cfg.grid.n);
    const auto pbar = invariant_density(cfg.drift, grid);
    const auto p0 = initial_density(cfg);
    const auto times = cfg.t_grid.times();
    try {
        out.trajectory = solve(p0, cfg.drift, times, cfg.solver);
    } catch (const Error& e) {
        throw Error(e.code(), "scenario " + cfg.name + ": " + e.what());
    }
    out.functionals = report(out.trajectory, pbar, cfg.drift.sigma(), cfg.functionals);

    std::vector<double> ds;
    for (const auto& r : out.functionals) ds.push_back(r.D);
    const auto dD_fd = central_difference(times, ds);
    for (std::size_t k = 1; k + 1 < out.functionals.size(); ++k) {
        const auto& r = out.functionals[k];
        ConsistencyRow row;
        row.time = r.time;
        row.dV_dt_theorem = r.dV_dt_theorem;
        row.dV_dt_fd = *r.dV_dt_fd;
        row.dV_rel_err = relative_error(r.dV_dt_theorem, *r.dV_dt_fd, cfg.tolerances.rel_floor);
        row.dD_dt = r.dD_dt;
        row.dD_dt_fd = *dD_fd[k];
        row.dD_rel_err = relative_error(r.dD_dt, *dD_fd[k], cfg.tolerances.rel_floor);
        out.consistency.push_back(row);
    }
    pde_checks(cfg, out);

    if (cfg.mc) {
        try {
            mc_part(cfg, *cfg.mc, p0, pbar, out);
        } catch (const Error& e) {
            throw Error(e.code(), "scenario " + cfg.name + " (Monte Carlo): " + e.what());
        }
    }
    return out;
}

fs::path output_dir(const ScenarioConfig& cfg) {
    if (const char* root = std::getenv("VARENTROPY_OUTPUT_ROOT"); root && *root) return fs::path(root) / cfg.name;
    return cfg.outputs;
}

void write_outcome(const ScenarioOutcome& outcome, const fs::path& dir, bool svg) {
    std::string functionals = std::string(functional_csv_header()) + "\n";
    for (const auto& r : outcome.functionals) functionals += to_csv_row(r) + "\n";
    write_file_atomic(dir / "functionals.csv", functionals);

    std::string consistency = "time,dV_dt_theorem,dV_dt_fd,dV_rel_err,dD_dt,dD_dt_fd,dD_rel_err\n";
    for (const auto& c : outcome.consistency)
        consistency += csv_row({c.time, c.dV_dt_theorem, c.dV_dt_fd, c.dV_rel_err, c.dD_dt, c.dD_dt_fd, c.dD_rel_err}) +
                       "\n";
    write_file_atomic(dir / "consistency.csv", consistency);

    std::string checks = "check,passed,detail\n";
    for (const auto& c : outcome.checks) checks += c.name + "," + (c.passed ? "1" : "0") + ",\"" + c.detail + "\"\n";
    write_file_atomic(dir / "checks.csv", checks);

    if (!outcome.mc_diagnostics.empty()) {
        std::string diag = "diagnostic,time,estimate,reference,std_error,statistic,checked,passed\n";
        for (const auto& d : outcome.mc_diagnostics)
            diag += d.diagnostic + "," + csv_row({d.time, d.estimate, d.reference, d.std_error, d.statistic}) + "," +
                    (d.checked ? "1" : "0") + "," + (d.passed ? "1" : "0") + "\n";
        write_file_atomic(dir / "mc_diagnostics.csv", diag);

        std::string mart = "time,mean_M,se_M,cond_residual,cond_pooled_se\n";
        for (const auto& m : outcome.martingale) {
            mart += csv_row({m.time, m.mean_M, m.se_M}) + ",";
            if (m.cond_residual) mart += format_real(*m.cond_residual);
            mart += ",";
            if (m.cond_pooled_se) mart += format_real(*m.cond_pooled_se);
            mart += "\n";
        }
        write_file_atomic(dir / "martingale.csv", mart);

        std::string bins = "time,bin_center,count,estimate,std_error,target\n";
        for (const auto& b : outcome.backward_drift)
            bins += format_real(b.time) + "," + format_real(b.bin_center) + "," + std::to_string(b.count) + "," +
                    csv_row({b.estimate, b.std_error, b.target}) + "\n";
        write_file_atomic(dir / "backward_drift.csv", bins);
    }

    if (svg) {
        std::vector<double> t;
        Series d{"D", {}}, v{"V", {}}, dv{"dV/dt (rate formula)", {}};
        for (const auto& r : outcome.functionals) {
            t.push_back(r.time);
            d.y.push_back(r.D);
            v.y.push_back(r.V);
            dv.y.push_back(r.dV_dt_theorem);
        }
        write_file_atomic(dir / "functionals.svg", svg_line_chart(outcome.name, t, {d, v, dv}));
    }
}

ScenarioOutcome run_scenario(const ScenarioConfig& cfg) {
    auto outcome = evaluate_scenario(cfg);
    write_outcome(outcome, output_dir(cfg), cfg.svg);
    return outcome;
}

SweepConfig SweepConfig::from_json(const json& doc, const fs::path& base_dir) {
    if (!doc.is_object()) config_error("(root)", "expected a JSON object");
    SweepConfig cfg;
    cfg.base_dir = base_dir;
    const json& base = require(doc, "base", "");
    if (base.is_string()) {
        fs::path file = base.get<std::string>();
        if (file.is_relative()) file = base_dir / file;
        cfg.base = read_json_file(file);
        cfg.base_dir = file.has_parent_path() ? file.parent_path() : fs::path(".");
    } else if (base.is_object()) {
        cfg.base = base;
    } else {
        config_error("base", "expected a scenario object or a path to one");
    }
    const json& axis = require(doc, "axis", "");
    cfg.axis_name = string_or(axis, "name", "axis", "value");
    const json& targets = require(axis, "targets", "axis");
    if (!targets.is_array() || targets.empty()) config_error("axis.targets", "expected a non-empty array");
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const std::string path = "axis.targets[" + std::to_string(i) + "]";
        SweepTarget t;
        t.pointer = string_or(targets[i], "pointer", path, "");
        t.scale = number_or(targets[i], "scale", path, 1.0);
        try {
            (void)cfg.base.at(json::json_pointer(t.pointer));
        } catch (const json::exception&) {
            config_error(join(path, "pointer"), "\"" + t.pointer + "\" does not name a field of the base scenario");
        }
        cfg.targets.push_back(t);
    }
    cfg.values = numbers(require(doc, "values", ""), "values");
    if (cfg.values.empty()) config_error("values", "must not be empty");
    cfg.outputs = string_or(doc, "outputs", "", "out/sweep");
    cfg.threads = static_cast<unsigned>(count_or(doc, "threads", "", 0));
    return cfg;
}

SweepConfig SweepConfig::load(const fs::path& file) {
    return from_json(read_json_file(file), file.has_parent_path() ? file.parent_path() : fs::path("."));
}

json SweepConfig::scenario_document(double value) const {
    json doc = base;
    for (const auto& t : targets) doc[json::json_pointer(t.pointer)] = t.scale * value;
    return doc;
}

SweepRow summarize_sweep_point(double value, const ScenarioOutcome& outcome) {
    SweepRow row;
    row.value = value;
    const auto& reps = outcome.functionals;
    row.min_dV_dt = std::numeric_limits<double>::infinity();
    row.max_dV_dt = -std::numeric_limits<double>::infinity();
    for (const auto& r : reps) {
        row.min_dV_dt = std::min(row.min_dV_dt, r.dV_dt_theorem);
        row.max_dV_dt = std::max(row.max_dV_dt, r.dV_dt_theorem);
        row.V_max = std::max(row.V_max, r.V);
    }
    row.sign_change = row.min_dV_dt < -sweep_sign_tolerance && row.max_dV_dt > sweep_sign_tolerance;
    // Non-monotone when V rises somewhere; t_M is the peak reached after the first rise.
    for (std::size_t k = 1; k < reps.size(); ++k) {
        if (reps[k].V > reps[k - 1].V + sweep_sign_tolerance) {
            std::size_t peak = k;
            for (std::size_t j = k; j < reps.size(); ++j)
                if (reps[j].V > reps[peak].V) peak = j;
            row.t_M = reps[peak].time;
            break;
        }
    }
    row.checks_passed = outcome.passed();
    return row;
}

std::string sweep_csv(const std::vector<SweepRow>& rows, const std::string& axis_name) {
    std::string out = axis_name + ",min_dV_dt,max_dV_dt,sign_change,t_M,V_max,checks_passed\n";
    for (const auto& r : rows) {
        out += csv_row({r.value, r.min_dV_dt, r.max_dV_dt}) + "," + (r.sign_change ? "1" : "0") + ",";
        if (r.t_M) out += format_real(*r.t_M);
        out += "," + format_real(r.V_max) + "," + (r.checks_passed ? "1" : "0") + "\n";
    }
    return out;
}

std::vector<SweepRow> monotonicity_sweep(const SweepConfig& cfg, bool write_files) {
    if (cfg.values.empty()) throw Error(Errc::config_validation, "values: must not be empty");
    const std::string base_name = cfg.base.is_object() && cfg.base.contains("name") && cfg.base["name"].is_string()
                                      ? cfg.base["name"].get<std::string>()
                                      : std::string("scenario");
    fs::path root = cfg.outputs;
    if (const char* env = std::getenv("VARENTROPY_OUTPUT_ROOT"); env && *env)
        root = fs::path(env) / cfg.outputs.filename();

    std::vector<ScenarioConfig> configs;
    for (std::size_t i = 0; i < cfg.values.size(); ++i) {
        json doc = cfg.scenario_document(cfg.values[i]);
        doc["name"] = base_name + "_" + cfg.axis_name + "_" + std::to_string(i);
        try {
            configs.push_back(ScenarioConfig::from_json(doc, cfg.base_dir));
        } catch (const Error& e) {
            throw Error(e.code(), "sweep value " + fmt(cfg.values[i]) + ": " + e.what());
        }
    }

    std::vector<std::optional<ScenarioOutcome>> outcomes(configs.size());
    std::vector<std::exception_ptr> errors(configs.size());
    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
        for (std::size_t i = next++; i < configs.size(); i = next++) {
            try {
                outcomes[i] = evaluate_scenario(configs[i]);
                if (write_files) write_outcome(*outcomes[i], root / configs[i].name, configs[i].svg);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    unsigned threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, configs.size()));
    {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    std::vector<SweepRow> rows;
    for (std::size_t i = 0; i < configs.size(); ++i) rows.push_back(summarize_sweep_point(cfg.values[i], *outcomes[i]));
    if (write_files) write_file_atomic(root / "sweep_summary.csv", sweep_csv(rows, cfg.axis_name));
    return rows;
}

namespace {

double grid_variance(const Density& p) {
    const Grid& g = p.grid();
    double m1 = 0.0, m2 = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double w = g.weight(i) * p[i];
        m1 += g.x(i) * w;
        m2 += g.x(i) * g.x(i) * w;
    }
    return m2 - m1 * m1;
}

// Errors at or below this are round-off; no order is inferred from them.
constexpr double roundoff_floor = 1e-13;

std::optional<double> order_between(double coarse, double fine) {
    if (coarse <= roundoff_floor || fine <= roundoff_floor) return std::nullopt;
    return std::log2(coarse / fine);
}

std::optional<double> fitted_order(const std::vector<double>& errors) {
    if (errors.size() < 3) return std::nullopt;
    for (double e : errors)
        if (e <= roundoff_floor) return std::nullopt;
    const auto n = static_cast<double>(errors.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t l = 0; l < errors.size(); ++l) {
        const double x = static_cast<double>(l), y = -std::log2(errors[l]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace

ConvergenceTable convergence_study(const ScenarioConfig& cfg, std::size_t levels) {
    if (levels < 2) throw Error(Errc::config_validation, "levels: requires at least 2");
    const auto s0 = ou_initial_variance(cfg);
    if (!s0) throw Error(Errc::config_validation, "convergence study needs the OU drift (-x/2, sigma 1) and a centered Gaussian start");
    const ou::OUParams params{*s0};
    const auto times = cfg.t_grid.times();

    ConvergenceTable table;
    std::vector<double> ev, eV;
    for (std::size_t l = 0; l < levels; ++l) {
        ScenarioConfig level = cfg;
        const std::size_t factor = std::size_t{1} << l;
        level.grid.n = (cfg.grid.n - 1) * factor + 1;
        level.solver.dt = cfg.solver.dt / static_cast<double>(factor);
        const Grid grid(level.grid.lo, level.grid.hi, level.grid.n);
        const auto pbar = invariant_density(level.drift, grid);
        const auto traj = solve(initial_density(level), level.drift, times, level.solver);
        const auto reps = report(traj, pbar, level.drift.sigma(), level.functionals);
        ConvergenceRow row;
        row.level = l;
        row.n = level.grid.n;
        row.dx = grid.dx();
        row.dt = level.solver.dt;
        for (std::size_t k = 0; k < traj.size(); ++k) {
            row.err_variance = std::max(row.err_variance, std::abs(grid_variance(traj[k]) - ou::variance_at(params, times[k])));
            row.err_V = std::max(row.err_V, std::abs(reps[k].V - ou::varentropy_V(params, times[k])));
        }
        if (l > 0) {
            row.order_variance = order_between(table.rows.back().err_variance, row.err_variance);
            row.order_V = order_between(table.rows.back().err_V, row.err_V);
        }
        ev.push_back(row.err_variance);
        eV.push_back(row.err_V);
        table.rows.push_back(row);
    }
    table.fitted_order_variance = fitted_order(ev);
    table.fitted_order_V = fitted_order(eV);
    return table;
}

std::string convergence_csv(const ConvergenceTable& table) {
    std::string out = "level,n,dx,dt,err_variance,err_V,order_variance,order_V\n";
    const auto opt = [](const std::optional<double>& v) { return v ? format_real(*v) : std::string(); };
    for (const auto& r : table.rows)
        out += std::to_string(r.level) + "," + std::to_string(r.n) + "," +
               csv_row({r.dx, r.dt, r.err_variance, r.err_V}) + "," + opt(r.order_variance) + "," + opt(r.order_V) +
               "\n";
    if (table.fitted_order_variance || table.fitted_order_V)
        out += "fit,,,,,," + opt(table.fitted_order_variance) + "," + opt(table.fitted_order_V) + "\n";
    return out;
}

std::string oracle_csv(double sigma0_sq, double t_end, std::size_t n_samples) {
    if (n_samples < 2) throw Error(Errc::config_validation, "samples: requires at least 2");
    if (t_end < 0.0) throw Error(Errc::negative_time, "t_end must be non-negative");
    const ou::OUParams p{sigma0_sq};
    std::string out = "time,variance,D,V,I,dD_dt,dV_dt\n";
    for (std::size_t k = 0; k < n_samples; ++k) {
        const double t = t_end * static_cast<double>(k) / static_cast<double>(n_samples - 1);
        out += csv_row({t, ou::variance_at(p, t), ou::entropy_D(p, t), ou::varentropy_V(p, t), ou::fisher_I(p, t),
                        ou::rate_dD(p, t), ou::rate_dV(p, t)}) +
               "\n";
    }
    return out;
}

}  // namespace varentropy
