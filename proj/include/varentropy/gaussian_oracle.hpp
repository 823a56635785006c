#pragma once

#include "varentropy/drift.hpp"
#include "varentropy/grid.hpp"

namespace varentropy::ou {

/// dX = -X/2 dt + dW started from N(0, sigma0_sq). Invariant law N(0, 1).
struct OUParams {
    double sigma0_sq = 1.0;
};

inline constexpr double drift_rate = -0.5;
inline constexpr double diffusion = 1.0;

DriftModel model();

/// sigma_t^2 = 1 + (sigma0^2 - 1) e^{-t}.
double variance_at(const OUParams& params, double t);

/// ln(p_t / pbar)(x) = -ln sigma_t - (x^2 / 2)(1 - sigma_t^2) / sigma_t^2.
double psi_at(const OUParams& params, double t, double x);

/// -ln sigma_t - (1 - sigma_t^2) / 2.
double entropy_D(const OUParams& params, double t);

/// (1 - sigma_t^2)^2 / 2, equivalently (1 - sigma0^2)^2 e^{-2t} / 2.
double varentropy_V(const OUParams& params, double t);

/// -(1 - sigma_t^2)^2 = -2 V.
double rate_dV(const OUParams& params, double t);

/// -(1 - sigma_t^2)^2 / (2 sigma_t^2).
double rate_dD(const OUParams& params, double t);

/// (1 - sigma_t^2)^2 / sigma_t^2.
double fisher_I(const OUParams& params, double t);

/// N(mean, variance) sampled on the grid and renormalized by trapezoid quadrature.
Density gaussian_density(const Grid& grid, double mean, double variance, double time = 0.0);

}  // namespace varentropy::ou
