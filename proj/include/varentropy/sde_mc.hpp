#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "varentropy/drift.hpp"
#include "varentropy/functionals.hpp"
#include "varentropy/grid.hpp"

namespace varentropy {

struct EnsembleOptions {
    /// Euler-Maruyama sub-steps per recorded step.
    std::size_t substeps = 1;
    /// 0 picks std::thread::hardware_concurrency(). Results do not depend on it.
    unsigned threads = 0;
};

/// Euler-Maruyama sample paths of dX = b+(X) dt + sigma dW, recorded on t_k = k dt.
/// Paths are reflected at the bounds of the initial density's grid.
class PathEnsemble {
public:
    PathEnsemble(DriftModel model, std::vector<double> times, std::size_t n_paths, std::uint64_t seed,
                 std::vector<double> states);

    const DriftModel& model() const noexcept { return model_; }
    const std::vector<double>& times() const noexcept { return times_; }
    std::size_t n_paths() const noexcept { return n_paths_; }
    std::size_t n_times() const noexcept { return times_.size(); }
    std::uint64_t seed() const noexcept { return seed_; }
    double dt() const noexcept { return times_.size() > 1 ? times_[1] - times_[0] : 0.0; }

    double at(std::size_t path, std::size_t t_index) const { return states_[t_index * n_paths_ + path]; }
    /// All path positions at one recorded time.
    std::span<const double> column(std::size_t t_index) const;

private:
    DriftModel model_;
    std::vector<double> times_;
    std::size_t n_paths_;
    std::uint64_t seed_;
    std::vector<double> states_;  // time-major
};

PathEnsemble simulate_ensemble(const DriftModel& model, const Density& init, double dt, double t_end,
                               std::size_t n_paths, std::uint64_t seed, const EnsembleOptions& opts = {});

/// Inverse of the piecewise-linear trapezoid CDF of a gridded density, at u in [0, 1].
double sample_inverse_cdf(const Density& density, std::span<const double> cdf, double u);
/// Cumulative trapezoid masses at the nodes, normalized so the last entry is 1.
std::vector<double> cumulative_mass(const Density& density);

/// Per-bin conditional means. Bin i collects samples within dx/2 of bin center i.
struct BinnedEstimate {
    std::vector<double> bin_centers;
    std::vector<double> values;      // NaN where counts < min_count
    std::vector<std::size_t> counts;
    std::vector<double> std_errors;  // NaN where counts < min_count
    std::size_t min_count = 50;

    bool defined(std::size_t i) const noexcept { return counts[i] >= min_count && counts[i] > 1; }
    std::size_t n_defined() const noexcept;
};

/// Bins spanning the 0.5% - 99.5% sample quantiles of xs.
Grid default_bins(std::span<const double> xs, std::size_t n_bins = 41);

BinnedEstimate bin_average(std::span<const double> xs, std::span<const double> ys, const Grid& bins,
                           std::size_t min_count = 50);

/// E[(X_t - X_{t-dt}) / dt | X_t in bin].
BinnedEstimate estimate_backward_drift(const PathEnsemble& ens, std::size_t t_index, const Grid& bins,
                                       std::size_t min_count = 50);

/// E[(X_{t+dt} - X_t) / dt | X_t in bin].
BinnedEstimate estimate_forward_drift(const PathEnsemble& ens, std::size_t t_index, const Grid& bins,
                                      std::size_t min_count = 50);

/// Count-weighted RMS of (estimate - target) and of the standard errors over defined bins.
struct ResidualSummary {
    double rms = 0.0;
    double pooled_se = 0.0;
    std::size_t bins_used = 0;
};

/// Throws no_defined_bins when no bin reaches min_count.
ResidualSummary binned_residual(const BinnedEstimate& est, const std::function<double(double)>& target);

/// Residual against b- = b+ - sigma^2 d/dx ln p_t.
ResidualSummary duality_residual(const BinnedEstimate& est, const DriftModel& model, const Density& p_t,
                                 double log_floor = 1e-300);

struct MartingaleOptions {
    /// Bins over X_t; when unset, 41 bins spanning the 0.5% - 99.5% sample quantiles at each time.
    std::optional<Grid> bins;
    std::size_t min_count = 50;
    double log_floor = 1e-300;
};

struct MartingaleRow {
    double time = 0.0;
    double mean_M = 0.0;
    double se_M = 0.0;
    /// Count-weighted RMS over bins of E[M_{t-dt} - M_t | X_t in bin]; empty at the first time.
    std::optional<double> cond_residual;
    std::optional<double> cond_pooled_se;
};

/// M_t = pbar / p_t (X_t), a reverse-time martingale.
std::vector<MartingaleRow> martingale_diagnostic(const PathEnsemble& ens, const DensityTrajectory& traj,
                                                 const Density& pbar, const MartingaleOptions& opts = {});

struct McFunctionals {
    double D_hat = 0.0;
    double V_hat = 0.0;
    double rate_hat = 0.0;
    double se_D = 0.0;
    double se_V = 0.0;
    double se_rate = 0.0;
};

/// Sample means of psi, its centered square and the Theorem-1 integrand at path positions,
/// with psi and d psi/dx linearly interpolated from grid values.
McFunctionals mc_functionals(const PathEnsemble& ens, const DensityTrajectory& traj, const Density& pbar,
                             std::size_t t_index, const FunctionalOptions& opts = {});

/// Throws time_mesh_mismatch unless both carry the same sample times.
void require_same_times(const PathEnsemble& ens, const DensityTrajectory& traj);

}  // namespace varentropy
