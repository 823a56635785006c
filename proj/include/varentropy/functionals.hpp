#pragma once

#include <optional>
#include <string>
#include <vector>

#include "varentropy/grid.hpp"

namespace varentropy {

/// Regularization shared by every log-ratio functional.
struct FunctionalOptions {
    double log_floor = 1e-300;
    /// Nodes with p < tail_cut * max(p) are left out of psi-weighted integrals.
    double tail_cut = 1e-12;
};

/// Quantities of one trajectory sample. D in nats, I in nats/time, V in nats^2.
struct FunctionalReport {
    double time = 0.0;
    double D = 0.0;
    double I = 0.0;
    double V = 0.0;
    double dD_dt = 0.0;
    double dV_dt_theorem = 0.0;
    std::optional<double> dV_dt_fd;
};

/// psi = ln(p / pbar).
std::vector<double> local_free_energy(const Density& p, const Density& pbar, const FunctionalOptions& opts = {});

/// Integral of psi p, clamped at 0.
double relative_entropy(const Density& p, const Density& pbar, const FunctionalOptions& opts = {});

/// Integral of (d psi / dx)^2 p.
double relative_fisher(const Density& p, const Density& pbar, const FunctionalOptions& opts = {});

/// Integral of psi^2 p minus the squared mean, clamped at 0.
double varentropy(const Density& p, const Density& pbar, const FunctionalOptions& opts = {});

/// Integral of (psi - D)^2 p. Algebraically equal to varentropy(); kept as a cross-check.
double varentropy_centered(const Density& p, const Density& pbar, const FunctionalOptions& opts = {});

/// dD/dt = -(sigma^2 / 2) I.
double free_energy_rate(const Density& p, const Density& pbar, double sigma, const FunctionalOptions& opts = {});

/// dV/dt = sigma^2 * integral of [-psi - 1 + D] (d psi / dx)^2 p.
double varentropy_rate_theorem(const Density& p, const Density& pbar, double sigma,
                               const FunctionalOptions& opts = {});

/// One report per sample; dV_dt_fd filled at interior samples by central differences.
std::vector<FunctionalReport> report(const DensityTrajectory& traj, const Density& pbar, double sigma,
                                     const FunctionalOptions& opts = {});

/// Central finite difference of a sampled series on a possibly non-uniform time mesh.
/// Entry k is empty at the two ends.
std::vector<std::optional<double>> central_difference(const std::vector<double>& times,
                                                      const std::vector<double>& values);

/// "time,D,I,V,dD_dt,dV_dt_theorem,dV_dt_fd"
const char* functional_csv_header() noexcept;
/// One CSV line without the newline; an absent dV_dt_fd is an empty cell.
std::string to_csv_row(const FunctionalReport& row);

}  // namespace varentropy
