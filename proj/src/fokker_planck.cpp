#include "varentropy/fokker_planck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "varentropy/error.hpp"

namespace varentropy {

namespace {

// Bernoulli function w / (e^w - 1).
double bernoulli(double w) {
    if (std::abs(w) < 1e-8) return 1.0 - 0.5 * w;
    return w / std::expm1(w);
}

std::vector<double> thomas(std::vector<double> a, std::vector<double> b, std::vector<double> c,
                           std::vector<double> d) {
    const std::size_t n = b.size();
    for (std::size_t i = 0; i < n; ++i) {
        if (i > 0) {
            const double m = a[i] / b[i - 1];
            b[i] -= m * c[i - 1];
            d[i] -= m * d[i - 1];
        }
        if (b[i] == 0.0 || !std::isfinite(b[i]))
            throw Error(Errc::linear_solve_failure, "singular tridiagonal system");
    }
    std::vector<double> x(n);
    x[n - 1] = d[n - 1] / b[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) x[i] = (d[i] - c[i] * x[i + 1]) / b[i];
    return x;
}

}  // namespace

void SolverConfig::validate() const {
    if (!(dt > 0.0)) throw Error(Errc::invalid_step, "solver dt must be positive");
    if (!(mass_tol > 0.0)) throw Error(Errc::invalid_step, "solver mass_tol must be positive");
    if (!(theta >= 0.0 && theta <= 1.0)) throw Error(Errc::invalid_step, "solver theta must lie in [0, 1]");
}

FokkerPlanckOperator::FokkerPlanckOperator(const DriftModel& model, const Grid& grid, Scheme scheme)
    : grid_(grid), lower_(grid.size(), 0.0), diag_(grid.size(), 0.0), upper_(grid.size(), 0.0) {
    const std::size_t n = grid.size();
    const double h = grid.dx();
    const double diff = model.diffusivity();
    // Flux through interface j+1/2: F_j = alpha_j p_j - beta_j p_{j+1}.
    for (std::size_t j = 0; j + 1 < n; ++j) {
        double alpha = 0.0, beta = 0.0;
        if (scheme == Scheme::ChangCooper) {
            // Interface drift from the potential difference makes exp(-2 Phi / sigma^2)
            // an exact zero-flux state of the discrete operator.
            const double b_half = -(model.potential(grid.x(j + 1)) - model.potential(grid.x(j))) / h;
            const double w = b_half * h / diff;
            alpha = diff / h * bernoulli(-w);
            beta = diff / h * bernoulli(w);
        } else {
            const double b_half = model.drift(0.5 * (grid.x(j) + grid.x(j + 1)));
            alpha = 0.5 * b_half + diff / h;
            beta = diff / h - 0.5 * b_half;
        }
        // Node j loses F_j, node j+1 gains it.
        diag_[j] -= alpha;
        upper_[j] += beta;
        lower_[j + 1] += alpha;
        diag_[j + 1] -= beta;
    }
}

std::vector<double> FokkerPlanckOperator::apply(std::span<const double> p) const {
    const std::size_t n = diag_.size();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        double v = diag_[i] * p[i];
        if (i > 0) v += lower_[i] * p[i - 1];
        if (i + 1 < n) v += upper_[i] * p[i + 1];
        out[i] = v;
    }
    return out;
}

std::vector<double> FokkerPlanckOperator::advance(std::span<const double> p, double dt, double theta) const {
    const std::size_t n = diag_.size();
    std::vector<double> rhs(n);
    if (theta < 1.0) {
        const auto ap = apply(p);
        for (std::size_t i = 0; i < n; ++i) rhs[i] = grid_.weight(i) * p[i] + (1.0 - theta) * dt * ap[i];
    } else {
        for (std::size_t i = 0; i < n; ++i) rhs[i] = grid_.weight(i) * p[i];
    }
    std::vector<double> a(n), b(n), c(n);
    for (std::size_t i = 0; i < n; ++i) {
        a[i] = -theta * dt * lower_[i];
        b[i] = grid_.weight(i) - theta * dt * diag_[i];
        c[i] = -theta * dt * upper_[i];
    }
    return thomas(std::move(a), std::move(b), std::move(c), std::move(rhs));
}

double FokkerPlanckOperator::explicit_ratio(double dt, double theta) const {
    double worst = 0.0;
    for (std::size_t i = 0; i < diag_.size(); ++i)
        worst = std::max(worst, (1.0 - theta) * dt * std::abs(diag_[i]) / grid_.weight(i));
    return worst;
}

namespace {

Density advance_density(const FokkerPlanckOperator& op, const Density& p, double dt, const SolverConfig& cfg) {
    auto next = op.advance(p.values(), dt, cfg.theta);
    const bool negative = std::any_of(next.begin(), next.end(), [](double v) { return v < 0.0; });
    if (negative) {
        if (cfg.scheme == Scheme::ChangCooper) {
            // Implicit Euler with Chang-Cooper fluxes is an M-matrix solve, hence positive.
            next = op.advance(p.values(), dt, 1.0);
            for (double& v : next) v = std::max(v, 0.0);
        } else {
            for (double& v : next) v = std::max(v, 0.0);
        }
    }
    return Density(p.grid(), std::move(next), p.time() + dt);
}

void warn_if_explicit_limit(const FokkerPlanckOperator& op, const SolverConfig& cfg) {
    if (!cfg.warn) return;
    const double ratio = op.explicit_ratio(cfg.dt, cfg.theta);
    if (ratio > 1.0) {
        std::ostringstream msg;
        msg << "explicit part of theta step exceeds positivity limit (ratio " << ratio << ")";
        cfg.warn(msg.str());
    }
}

}  // namespace

Density step(const Density& p, const DriftModel& model, const SolverConfig& cfg) {
    cfg.validate();
    const FokkerPlanckOperator op(model, p.grid(), cfg.scheme);
    warn_if_explicit_limit(op, cfg);
    return advance_density(op, p, cfg.dt, cfg);
}

DensityTrajectory solve(const Density& p0, const DriftModel& model, const std::vector<double>& t_grid,
                        const SolverConfig& cfg) {
    cfg.validate();
    if (t_grid.empty()) throw Error(Errc::invalid_time_grid, "empty time grid");
    if (std::abs(t_grid.front() - p0.time()) > 1e-12 * std::max(1.0, std::abs(p0.time())))
        throw Error(Errc::invalid_time_grid, "time grid must start at the initial density's time");
    for (std::size_t k = 1; k < t_grid.size(); ++k)
        if (!(t_grid[k] > t_grid[k - 1]))
            throw Error(Errc::invalid_time_grid, "time grid must be strictly increasing");

    const FokkerPlanckOperator op(model, p0.grid(), cfg.scheme);
    warn_if_explicit_limit(op, cfg);

    DensityTrajectory traj;
    Density current = p0.at_time(t_grid.front());
    traj.push_back(current);
    for (std::size_t k = 1; k < t_grid.size(); ++k) {
        const double span = t_grid[k] - t_grid[k - 1];
        const auto n_sub = static_cast<std::size_t>(std::max(1.0, std::ceil(span / cfg.dt - 1e-9)));
        const double h = span / static_cast<double>(n_sub);
        try {
            for (std::size_t s = 0; s < n_sub; ++s) {
                if (k == 1 && s == 0 && cfg.startup_steps > 0 && cfg.theta < 1.0) {
                    SolverConfig implicit = cfg;
                    implicit.theta = 1.0;
                    const double hs = h / static_cast<double>(cfg.startup_steps);
                    for (std::size_t r = 0; r < cfg.startup_steps; ++r)
                        current = advance_density(op, current, hs, implicit);
                    continue;
                }
                current = advance_density(op, current, h, cfg);
            }
        } catch (const Error& e) {
            std::ostringstream msg;
            msg << "at t = " << current.time() << ": " << e.what();
            throw Error(e.code(), msg.str());
        }
        current = current.at_time(t_grid[k]);
        traj.push_back(current);
    }
    return traj;
}

std::vector<double> reverse_harmonic_residual(const DensityTrajectory& traj, const Density& pbar,
                                              const DriftModel& model, std::size_t t_index,
                                              const HarmonicResidualOptions& opts) {
    if (t_index == 0 || t_index + 1 >= traj.size())
        throw Error(Errc::index_out_of_range, "harmonic residual needs a sample on both sides of t_index");
    const Grid& grid = traj.grid();
    require_same_grid(grid, pbar.grid());

    const auto ratio = [&](const Density& p) {
        auto psi = safe_log_ratio(p, pbar, opts.log_floor);
        for (double& v : psi) v = std::exp(-v);
        return psi;
    };
    const Density& p = traj[t_index];
    const auto before = ratio(traj[t_index - 1]);
    const auto now = ratio(p);
    const auto after = ratio(traj[t_index + 1]);
    const double dt2 = traj.times()[t_index + 1] - traj.times()[t_index - 1];

    const auto du = gradient(now, grid);
    const auto d2u = second_derivative(now, grid);
    std::vector<double> log_p(grid.size());
    for (std::size_t i = 0; i < log_p.size(); ++i) log_p[i] = std::log(std::max(p[i], opts.log_floor));
    const auto score = gradient(log_p, grid);
    const auto keep = tail_mask(p, opts.tail_cut);

    const double s2 = model.sigma() * model.sigma();
    std::vector<double> r(grid.size(), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t i = 0; i < r.size(); ++i) {
        if (!keep[i]) continue;
        double b_minus = model.drift(grid.x(i));
        if (opts.backward == BackwardDrift::Nelson) b_minus -= s2 * score[i];
        r[i] = (after[i] - before[i]) / dt2 + b_minus * du[i] - 0.5 * s2 * d2u[i];
    }
    return r;
}

double weighted_l2_norm(std::span<const double> residual, const Density& p) {
    if (residual.size() != p.grid().size()) throw Error(Errc::length_mismatch, "residual length differs from grid");
    double acc = 0.0;
    for (std::size_t i = 0; i < residual.size(); ++i)
        if (std::isfinite(residual[i])) acc += residual[i] * residual[i] * p[i] * p.grid().weight(i);
    return std::sqrt(acc);
}

}  // namespace varentropy
