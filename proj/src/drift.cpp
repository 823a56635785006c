#include "varentropy/drift.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "varentropy/error.hpp"

namespace varentropy {

double PotentialSpec::value(double x) const noexcept {
    const auto& c = coeffs;
    return c[0] + x * (c[1] + x * (c[2] + x * (c[3] + x * c[4])));
}

double PotentialSpec::derivative(double x) const noexcept {
    const auto& c = coeffs;
    return c[1] + x * (2.0 * c[2] + x * (3.0 * c[3] + x * 4.0 * c[4]));
}

double PotentialSpec::second_derivative(double x) const noexcept {
    const auto& c = coeffs;
    return 2.0 * c[2] + x * (6.0 * c[3] + x * 12.0 * c[4]);
}

bool PotentialSpec::confining() const noexcept {
    const auto& c = coeffs;
    return c[4] > 0.0 || (c[4] == 0.0 && c[3] == 0.0 && c[2] > 0.0);
}

DriftModel::DriftModel(Kind kind, double sigma) : kind_(kind), sigma_(sigma) {
    if (!(sigma > 0.0) || !std::isfinite(sigma))
        throw Error(Errc::invalid_model, "diffusion coefficient sigma must be positive");
}

DriftModel DriftModel::double_well(double sigma) {
    return gradient(PotentialSpec{{0.0, 0.0, -0.5, 0.0, 0.25}}, sigma);
}

double DriftModel::drift(double x) const noexcept {
    if (const auto* lin = std::get_if<LinearDrift>(&kind_)) return lin->rate * x;
    return -std::get<GradientDrift>(kind_).potential.derivative(x);
}

double DriftModel::drift_derivative(double x) const noexcept {
    if (const auto* lin = std::get_if<LinearDrift>(&kind_)) return lin->rate;
    return -std::get<GradientDrift>(kind_).potential.second_derivative(x);
}

double DriftModel::potential(double x) const noexcept {
    if (const auto* lin = std::get_if<LinearDrift>(&kind_)) return -0.5 * lin->rate * x * x;
    return std::get<GradientDrift>(kind_).potential.value(x);
}

bool DriftModel::confining() const noexcept {
    if (const auto* lin = std::get_if<LinearDrift>(&kind_)) return lin->rate < 0.0;
    return std::get<GradientDrift>(kind_).potential.confining();
}

double drift_at(const DriftModel& model, double x) noexcept { return model.drift(x); }

namespace {

void require_confining(const DriftModel& model) {
    if (!model.confining())
        throw Error(Errc::non_confining_model, "invariant density requires a confining drift");
}

// exp(-2 (Phi(x) - shift) / sigma^2) with shift chosen to keep the peak at O(1).
std::vector<double> boltzmann_weights(const DriftModel& model, std::span<const double> xs) {
    const double scale = 2.0 / (model.sigma() * model.sigma());
    double phi_min = model.potential(xs.front());
    for (double x : xs) phi_min = std::min(phi_min, model.potential(x));
    std::vector<double> w(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) w[i] = std::exp(-scale * (model.potential(xs[i]) - phi_min));
    return w;
}

}  // namespace

Density invariant_density(const DriftModel& model, const Grid& grid) {
    require_confining(model);
    const auto xs = grid.nodes();
    return Density::normalized(grid, boltzmann_weights(model, xs));
}

double invariant_mass_outside(const DriftModel& model, double lo, double hi) {
    require_confining(model);
    // Widen until the Boltzmann weight at the edges is negligible relative to the peak.
    const double scale = 2.0 / (model.sigma() * model.sigma());
    double span = std::max(hi - lo, 1.0);
    double a = lo - span, b = hi + span;
    for (int it = 0; it < 60; ++it) {
        double phi_min = std::numeric_limits<double>::infinity();
        for (int k = 0; k <= 2000; ++k) phi_min = std::min(phi_min, model.potential(a + (b - a) * k / 2000.0));
        const bool left_ok = scale * (model.potential(a) - phi_min) > 200.0;
        const bool right_ok = scale * (model.potential(b) - phi_min) > 200.0;
        if (left_ok && right_ok) break;
        if (!left_ok) a -= span;
        if (!right_ok) b += span;
        span *= 2.0;
    }
    double phi_min = std::numeric_limits<double>::infinity();
    for (int k = 0; k <= 20000; ++k) phi_min = std::min(phi_min, model.potential(a + (b - a) * k / 20000.0));
    // Trapezoid pieces whose ends sit exactly on lo and hi.
    const auto piece = [&](double from, double to) {
        if (!(to > from)) return 0.0;
        const Grid g(from, to, 200001);
        double acc = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i)
            acc += g.weight(i) * std::exp(-scale * (model.potential(g.x(i)) - phi_min));
        return acc;
    };
    const double outside = piece(a, lo) + piece(hi, b);
    const double inside = piece(lo, hi);
    return outside / (outside + inside);
}

}  // namespace varentropy
