#include <random>

#include "doctest.h"
#include "support.hpp"
#include "varentropy/drift.hpp"

using namespace varentropy;
using support::error_code;

namespace {

PotentialSpec quartic(double c2, double c4) {
    PotentialSpec s;
    s.coeffs = {0.0, 0.0, c2, 0.0, c4};
    return s;
}

// Sup-norm of (b p)' - (sigma^2/2) p'' on interior nodes.
double stationary_residual(const DriftModel& m, std::size_t n) {
    const Grid g(-3.5, 3.5, n);
    const auto p = invariant_density(m, g);
    std::vector<double> flux(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) flux[i] = m.drift(g.x(i)) * p[i];
    const auto dflux = gradient(flux, g);
    const auto d2p = second_derivative(p.values(), g);
    double worst = 0.0;
    for (std::size_t i = 1; i + 1 < g.size(); ++i)
        worst = std::max(worst, std::abs(dflux[i] - m.diffusivity() * d2p[i]));
    return worst;
}

}  // namespace

TEST_CASE("drift evaluation") {
    CHECK(drift_at(DriftModel::linear(-0.5, 1.0), 2.0) == doctest::Approx(-1.0));
    CHECK(drift_at(DriftModel::double_well(1.0), 0.0) == 0.0);
    CHECK(drift_at(DriftModel::gradient(quartic(0.25, 0.0), 1.0), 2.0) == doctest::Approx(-1.0));

    const auto dw = DriftModel::double_well(1.0);
    CHECK(dw.drift(1.0) == doctest::Approx(0.0));
    CHECK(dw.drift(2.0) == doctest::Approx(-6.0));
    CHECK(dw.drift_derivative(0.0) == doctest::Approx(1.0));
    CHECK(dw.potential(1.0) == doctest::Approx(-0.25));
}

TEST_CASE("model validation") {
    CHECK(error_code([] { DriftModel::linear(-1.0, 0.0); }) == Errc::invalid_model);
    CHECK(error_code([] { DriftModel::linear(-1.0, -2.0); }) == Errc::invalid_model);

    CHECK(DriftModel::linear(-0.1, 1.0).confining());
    CHECK_FALSE(DriftModel::linear(0.0, 1.0).confining());
    CHECK_FALSE(DriftModel::linear(0.3, 1.0).confining());
    CHECK(quartic(-1.0, 0.1).confining());
    CHECK(quartic(0.5, 0.0).confining());
    CHECK_FALSE(quartic(0.5, -0.1).confining());
    PotentialSpec cubic;
    cubic.coeffs = {0.0, 0.0, 1.0, 0.2, 0.0};
    CHECK_FALSE(cubic.confining());

    const Grid g(-4.0, 4.0, 81);
    CHECK(error_code([&] { invariant_density(DriftModel::linear(0.5, 1.0), g); }) == Errc::non_confining_model);
    CHECK(error_code([&] { invariant_density(DriftModel::gradient(cubic, 1.0), g); }) == Errc::non_confining_model);
}

TEST_CASE("OU invariant density is the standard normal") {
    const Grid g(-8.0, 8.0, 801);
    const auto p = invariant_density(DriftModel::linear(-0.5, 1.0), g);
    CHECK(p[400] == doctest::Approx(1.0 / std::sqrt(2.0 * std::numbers::pi)).epsilon(1e-9));
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(std::abs(p[i] - support::normal_pdf(g.x(i), 0.0, 1.0)) < 1e-12);
    CHECK(std::abs(p.mass() - 1.0) < 1e-13);
}

TEST_CASE("double-well invariant density is bimodal at plus and minus one") {
    const Grid g(-3.0, 3.0, 601);
    const auto p = invariant_density(DriftModel::double_well(1.0), g);
    std::size_t left = 0, right = 300;
    for (std::size_t i = 0; i < 300; ++i)
        if (p[i] > p[left]) left = i;
    for (std::size_t i = 300; i < g.size(); ++i)
        if (p[i] > p[right]) right = i;
    CHECK(g.x(left) == doctest::Approx(-1.0).epsilon(1e-9));
    CHECK(g.x(right) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(p[300] < p[left]);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(p[i] == doctest::Approx(p[g.size() - 1 - i]).epsilon(1e-12));
}

TEST_CASE("linear and quadratic-potential families agree") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> rate_dist(-3.0, -0.05), x_dist(-10.0, 10.0);
    for (int trial = 0; trial < 50; ++trial) {
        const double rate = rate_dist(rng);
        const auto lin = DriftModel::linear(rate, 1.3);
        const auto grad = DriftModel::gradient(quartic(-0.5 * rate, 0.0), 1.3);
        const double x = x_dist(rng);
        CHECK(lin.drift(x) == doctest::Approx(grad.drift(x)).epsilon(1e-13));
        CHECK(lin.potential(x) == doctest::Approx(grad.potential(x)).epsilon(1e-13));
    }
}

TEST_CASE("stationary residual of the invariant density converges at second order") {
    for (const auto& m : {DriftModel::double_well(1.0), DriftModel::linear(-0.5, 1.0), DriftModel::double_well(0.8)}) {
        const double coarse = stationary_residual(m, 351);
        const double fine = stationary_residual(m, 701);
        const double ratio = coarse / fine;
        CHECK(ratio > 3.5);
        CHECK(ratio < 4.5);
    }
}

TEST_CASE("invariant mass outside a window") {
    const auto ou = DriftModel::linear(-0.5, 1.0);
    CHECK(invariant_mass_outside(ou, -3.0, 3.0) == doctest::Approx(std::erfc(3.0 / std::sqrt(2.0))).epsilon(1e-6));
    CHECK(invariant_mass_outside(ou, -1.0, 2.0) ==
          doctest::Approx(0.5 * std::erfc(2.0 / std::sqrt(2.0)) + 0.5 * std::erfc(1.0 / std::sqrt(2.0))).epsilon(1e-6));
    CHECK(invariant_mass_outside(ou, -8.0, 8.0) < 1e-10);
    CHECK(invariant_mass_outside(DriftModel::double_well(1.0), -4.0, 4.0) < 1e-10);
}
