#include "varentropy/gaussian_oracle.hpp"

#include <cmath>
#include <numbers>

#include "varentropy/error.hpp"

namespace varentropy::ou {

namespace {

// Variance at t, required positive wherever a log or a ratio of variances is taken.
double positive_variance(const OUParams& params, double t) {
    const double v = variance_at(params, t);
    if (!(v > 0.0)) throw Error(Errc::invalid_density, "degenerate Gaussian: zero variance at this time");
    return v;
}

}  // namespace

DriftModel model() { return DriftModel::linear(drift_rate, diffusion); }

double variance_at(const OUParams& params, double t) {
    if (t < 0.0) throw Error(Errc::negative_time, "time must be non-negative");
    if (params.sigma0_sq < 0.0) throw Error(Errc::invalid_density, "initial variance must be non-negative");
    return 1.0 + (params.sigma0_sq - 1.0) * std::exp(-t);
}

double psi_at(const OUParams& params, double t, double x) {
    const double v = positive_variance(params, t);
    return -0.5 * std::log(v) - 0.5 * x * x * (1.0 - v) / v;
}

double entropy_D(const OUParams& params, double t) {
    const double v = positive_variance(params, t);
    return -0.5 * std::log(v) - 0.5 * (1.0 - v);
}

double varentropy_V(const OUParams& params, double t) {
    const double gap = 1.0 - variance_at(params, t);
    return 0.5 * gap * gap;
}

double rate_dV(const OUParams& params, double t) {
    const double gap = 1.0 - variance_at(params, t);
    return -gap * gap;
}

double rate_dD(const OUParams& params, double t) {
    const double v = positive_variance(params, t);
    return -0.5 * (1.0 - v) * (1.0 - v) / v;
}

double fisher_I(const OUParams& params, double t) {
    const double v = positive_variance(params, t);
    return (1.0 - v) * (1.0 - v) / v;
}

Density gaussian_density(const Grid& grid, double mean, double variance, double time) {
    if (!(variance > 0.0)) throw Error(Errc::invalid_density, "Gaussian variance must be positive");
    std::vector<double> v(grid.size());
    const double norm = 1.0 / std::sqrt(2.0 * std::numbers::pi * variance);
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double z = grid.x(i) - mean;
        v[i] = norm * std::exp(-0.5 * z * z / variance);
    }
    return Density::normalized(grid, std::move(v), time);
}

}  // namespace varentropy::ou
