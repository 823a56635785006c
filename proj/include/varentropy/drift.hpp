#pragma once

#include <array>
#include <variant>

#include "varentropy/grid.hpp"

namespace varentropy {

/// Quartic potential Phi(x) = c0 + c1 x + c2 x^2 + c3 x^3 + c4 x^4.
struct PotentialSpec {
    std::array<double, 5> coeffs{};

    double value(double x) const noexcept;
    double derivative(double x) const noexcept;
    double second_derivative(double x) const noexcept;
    bool confining() const noexcept;
};

struct LinearDrift {
    double rate;
};

struct GradientDrift {
    PotentialSpec potential;
};

/// Time-independent drift b+(x) with constant diffusion coefficient sigma.
class DriftModel {
public:
    using Kind = std::variant<LinearDrift, GradientDrift>;

    DriftModel(Kind kind, double sigma);

    static DriftModel linear(double rate, double sigma) { return DriftModel(LinearDrift{rate}, sigma); }
    static DriftModel gradient(PotentialSpec potential, double sigma) {
        return DriftModel(GradientDrift{potential}, sigma);
    }
    /// Phi = x^4/4 - x^2/2.
    static DriftModel double_well(double sigma = 1.0);

    const Kind& kind() const noexcept { return kind_; }
    double sigma() const noexcept { return sigma_; }
    double diffusivity() const noexcept { return 0.5 * sigma_ * sigma_; }

    double drift(double x) const noexcept;
    double drift_derivative(double x) const noexcept;
    /// Phi with b+ = -Phi'. Linear(rate) maps to Phi = -rate x^2 / 2.
    double potential(double x) const noexcept;
    bool confining() const noexcept;

private:
    Kind kind_;
    double sigma_;
};

double drift_at(const DriftModel& model, double x) noexcept;

/// Normalized exp(-2 Phi / sigma^2) on the grid. Throws non_confining_model.
Density invariant_density(const DriftModel& model, const Grid& grid);

/// Mass of the invariant density outside [lo, hi], from a wide fine quadrature.
double invariant_mass_outside(const DriftModel& model, double lo, double hi);

}  // namespace varentropy
