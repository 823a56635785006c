#pragma once

#include <functional>
#include <string>
#include <vector>

#include "varentropy/drift.hpp"
#include "varentropy/grid.hpp"

namespace varentropy {

enum class Scheme { ChangCooper, CrankNicolson };

struct SolverConfig {
    double dt = 1e-3;
    Scheme scheme = Scheme::ChangCooper;
    double mass_tol = 1e-8;
    /// Implicitness weight: 0 explicit, 1/2 Crank-Nicolson in time, 1 implicit Euler.
    double theta = 0.5;
    /// Rannacher start-up: the first step of a solve is replaced by this many implicit
    /// Euler steps of size dt / startup_steps, damping stiff modes of the initial data.
    std::size_t startup_steps = 4;
    /// Receives a message once per solve when the explicit half of the step
    /// exceeds its positivity limit. Unset means silent.
    std::function<void(const std::string&)> warn;

    void validate() const;
};

/// Zero-flux finite-volume discretization of dp/dt = -(b p)' + (sigma^2/2) p''
/// as a tridiagonal operator on node values. Control volumes carry trapezoid
/// weights, so the trapezoid mass is exactly conserved.
class FokkerPlanckOperator {
public:
    FokkerPlanckOperator(const DriftModel& model, const Grid& grid, Scheme scheme);

    const Grid& grid() const noexcept { return grid_; }

    /// (A p)_i, the net flux into control volume i (not divided by its weight).
    std::vector<double> apply(std::span<const double> p) const;

    /// One theta step of size dt. Throws linear_solve_failure on a zero pivot.
    std::vector<double> advance(std::span<const double> p, double dt, double theta) const;

    /// max_i (1 - theta) dt |A_ii| / w_i; above 1 the explicit half can create negative values.
    double explicit_ratio(double dt, double theta) const;

private:
    Grid grid_;
    std::vector<double> lower_;
    std::vector<double> diag_;
    std::vector<double> upper_;
};

Density step(const Density& p, const DriftModel& model, const SolverConfig& cfg);

/// Integrates from p0.time through every entry of t_grid (first entry must equal p0.time),
/// with sub-steps no larger than cfg.dt.
DensityTrajectory solve(const Density& p0, const DriftModel& model, const std::vector<double>& t_grid,
                        const SolverConfig& cfg);

enum class BackwardDrift {
    /// b- = b+ - sigma^2 d/dx ln p_t.
    Nelson,
    /// b- = b+; negative control.
    ForwardOnly,
};

struct HarmonicResidualOptions {
    double log_floor = 1e-300;
    double tail_cut = 1e-12;
    BackwardDrift backward = BackwardDrift::Nelson;
};

/// Per-node (d/dt + b- d/dx - (sigma^2/2) d^2/dx^2)(pbar / p_t) at traj[t_index], with the
/// time derivative by central difference over the neighbouring samples. Nodes under the
/// tail cut of p_t are NaN.
std::vector<double> reverse_harmonic_residual(const DensityTrajectory& traj, const Density& pbar,
                                              const DriftModel& model, std::size_t t_index,
                                              const HarmonicResidualOptions& opts = {});

/// sqrt(sum over finite entries of r_i^2 p_i w_i).
double weighted_l2_norm(std::span<const double> residual, const Density& p);

}  // namespace varentropy
