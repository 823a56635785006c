#include "varentropy/functionals.hpp"

#include <algorithm>
#include <cmath>

#include "varentropy/csv.hpp"
#include "varentropy/error.hpp"

namespace varentropy {

namespace {

// psi, its gradient, and the trapezoid weight w_i p_i on kept nodes (zero on the tail).
struct LogRatioField {
    std::vector<double> psi;
    std::vector<double> dpsi;
    std::vector<double> mass;
};

LogRatioField log_ratio_field(const Density& p, const Density& pbar, const FunctionalOptions& opts) {
    LogRatioField f;
    f.psi = safe_log_ratio(p, pbar, opts.log_floor);
    f.dpsi = gradient(f.psi, p.grid());
    const auto keep = tail_mask(p, opts.tail_cut);
    f.mass.resize(p.grid().size());
    for (std::size_t i = 0; i < f.mass.size(); ++i) f.mass[i] = keep[i] ? p.grid().weight(i) * p[i] : 0.0;
    return f;
}

double mean_psi(const LogRatioField& f) {
    double acc = 0.0;
    for (std::size_t i = 0; i < f.psi.size(); ++i) acc += f.psi[i] * f.mass[i];
    return acc;
}

double clamp_nonnegative(double v) { return std::max(v, 0.0); }

struct Integrals {
    double D;
    double I;
    double V;
    double rate_integral;  // integral of [-psi - 1 + D] dpsi^2 p
};

Integrals integrals(const Density& p, const Density& pbar, const FunctionalOptions& opts) {
    const auto f = log_ratio_field(p, pbar, opts);
    const double d_raw = mean_psi(f);
    double second = 0.0, fisher = 0.0, rate = 0.0;
    for (std::size_t i = 0; i < f.psi.size(); ++i) {
        const double g2 = f.dpsi[i] * f.dpsi[i];
        second += f.psi[i] * f.psi[i] * f.mass[i];
        fisher += g2 * f.mass[i];
        rate += (-f.psi[i] - 1.0 + d_raw) * g2 * f.mass[i];
    }
    return {clamp_nonnegative(d_raw), fisher, clamp_nonnegative(second - d_raw * d_raw), rate};
}

void require_sigma(double sigma) {
    if (!(sigma > 0.0)) throw Error(Errc::invalid_model, "sigma must be positive");
}

}  // namespace

std::vector<double> local_free_energy(const Density& p, const Density& pbar, const FunctionalOptions& opts) {
    return safe_log_ratio(p, pbar, opts.log_floor);
}

double relative_entropy(const Density& p, const Density& pbar, const FunctionalOptions& opts) {
    return clamp_nonnegative(mean_psi(log_ratio_field(p, pbar, opts)));
}

double relative_fisher(const Density& p, const Density& pbar, const FunctionalOptions& opts) {
    return integrals(p, pbar, opts).I;
}

double varentropy(const Density& p, const Density& pbar, const FunctionalOptions& opts) {
    return integrals(p, pbar, opts).V;
}

double varentropy_centered(const Density& p, const Density& pbar, const FunctionalOptions& opts) {
    const auto f = log_ratio_field(p, pbar, opts);
    const double d = mean_psi(f);
    double acc = 0.0;
    for (std::size_t i = 0; i < f.psi.size(); ++i) acc += (f.psi[i] - d) * (f.psi[i] - d) * f.mass[i];
    return clamp_nonnegative(acc);
}

double free_energy_rate(const Density& p, const Density& pbar, double sigma, const FunctionalOptions& opts) {
    require_sigma(sigma);
    return -0.5 * sigma * sigma * relative_fisher(p, pbar, opts);
}

double varentropy_rate_theorem(const Density& p, const Density& pbar, double sigma, const FunctionalOptions& opts) {
    require_sigma(sigma);
    return sigma * sigma * integrals(p, pbar, opts).rate_integral;
}

std::vector<std::optional<double>> central_difference(const std::vector<double>& times,
                                                      const std::vector<double>& values) {
    if (times.size() != values.size()) throw Error(Errc::length_mismatch, "times and values differ in length");
    std::vector<std::optional<double>> out(times.size());
    for (std::size_t k = 1; k + 1 < times.size(); ++k)
        out[k] = (values[k + 1] - values[k - 1]) / (times[k + 1] - times[k - 1]);
    return out;
}

std::vector<FunctionalReport> report(const DensityTrajectory& traj, const Density& pbar, double sigma,
                                     const FunctionalOptions& opts) {
    require_sigma(sigma);
    const double s2 = sigma * sigma;
    std::vector<FunctionalReport> rows;
    rows.reserve(traj.size());
    std::vector<double> vs;
    for (std::size_t k = 0; k < traj.size(); ++k) {
        const auto in = integrals(traj[k], pbar, opts);
        FunctionalReport r;
        r.time = traj.times()[k];
        r.D = in.D;
        r.I = in.I;
        r.V = in.V;
        r.dD_dt = -0.5 * s2 * in.I;
        r.dV_dt_theorem = s2 * in.rate_integral;
        rows.push_back(r);
        vs.push_back(in.V);
    }
    const auto fd = central_difference(traj.times(), vs);
    for (std::size_t k = 0; k < rows.size(); ++k) rows[k].dV_dt_fd = fd[k];
    return rows;
}

const char* functional_csv_header() noexcept { return "time,D,I,V,dD_dt,dV_dt_theorem,dV_dt_fd"; }

std::string to_csv_row(const FunctionalReport& row) {
    std::string line = csv_row({row.time, row.D, row.I, row.V, row.dD_dt, row.dV_dt_theorem});
    line += ',';
    if (row.dV_dt_fd) line += format_real(*row.dV_dt_fd);
    return line;
}

}  // namespace varentropy
