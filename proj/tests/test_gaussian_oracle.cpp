#include "doctest.h"
#include "support.hpp"
#include "varentropy/functionals.hpp"
#include "varentropy/gaussian_oracle.hpp"

using namespace varentropy;
using support::error_code;

TEST_CASE("variance closed form") {
    const ou::OUParams p{0.25};
    CHECK(ou::variance_at(p, 0.0) == 0.25);
    CHECK(ou::variance_at(p, 60.0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(ou::variance_at({0.0}, std::log(2.0)) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(error_code([&] { ou::variance_at(p, -0.1); }) == Errc::negative_time);
}

TEST_CASE("variance matches an RK4 integration of the moment ODE") {
    for (double s0 : {0.0, 0.25, 3.0}) {
        double v = s0;
        const double h = 1e-3;
        const auto f = [](double y) { return 1.0 - y; };
        for (int k = 0; k < 2000; ++k) {
            const double k1 = f(v), k2 = f(v + 0.5 * h * k1), k3 = f(v + 0.5 * h * k2), k4 = f(v + h * k3);
            v += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
        }
        CHECK(ou::variance_at({s0}, 2.0) == doctest::Approx(v).epsilon(1e-12));
    }
}

TEST_CASE("variance obeys its ODE") {
    const ou::OUParams p{0.25};
    const double h = 1e-5;
    for (double t : {0.1, 0.7, 2.0, 5.0}) {
        const double fd = (ou::variance_at(p, t + h) - ou::variance_at(p, t - h)) / (2 * h);
        CHECK(std::abs(fd - (1.0 - ou::variance_at(p, t))) < 1e-8);
    }
}

TEST_CASE("psi closed form") {
    for (double t : {0.0, 1.0, 4.0})
        for (double x : {-3.0, 0.0, 0.5, 7.0}) CHECK(ou::psi_at({1.0}, t, x) == 0.0);
    CHECK(ou::psi_at({0.25}, 0.0, 0.0) == doctest::Approx(0.693147).epsilon(1e-6));
    CHECK(ou::psi_at({0.25}, 0.0, 1.0) == doctest::Approx(std::log(2.0) - 1.5).epsilon(1e-14));
}

TEST_CASE("psi agrees with the grid log ratio") {
    const Grid g(-8.0, 8.0, 801);
    const ou::OUParams p{0.25};
    const double t = 0.6;
    const auto pt = ou::gaussian_density(g, 0.0, ou::variance_at(p, t));
    const auto pbar = ou::gaussian_density(g, 0.0, 1.0);
    const auto psi = local_free_energy(pt, pbar);
    const auto keep = tail_mask(pt);
    for (std::size_t i = 0; i < g.size(); ++i)
        if (keep[i]) CHECK(std::abs(psi[i] - ou::psi_at(p, t, g.x(i))) < 1e-8);
}

TEST_CASE("functionals at the initial time") {
    const ou::OUParams p{0.25};
    CHECK(ou::entropy_D(p, 0.0) == doctest::Approx(0.318147).epsilon(1e-6));
    CHECK(ou::varentropy_V(p, 0.0) == doctest::Approx(0.28125).epsilon(1e-14));
    CHECK(ou::rate_dV(p, 0.0) == doctest::Approx(-0.5625).epsilon(1e-14));
    CHECK(ou::rate_dD(p, 0.0) == doctest::Approx(-1.125).epsilon(1e-14));
    CHECK(ou::fisher_I(p, 0.0) == doctest::Approx(2.25).epsilon(1e-14));
}

TEST_CASE("stationary start gives zero everywhere") {
    for (double t : {0.0, 0.3, 10.0}) {
        CHECK(ou::entropy_D({1.0}, t) == 0.0);
        CHECK(ou::varentropy_V({1.0}, t) == 0.0);
        CHECK(ou::rate_dV({1.0}, t) == 0.0);
        CHECK(ou::rate_dD({1.0}, t) == 0.0);
    }
}

TEST_CASE("varentropy rate is minus twice varentropy, and decays as exp(-2t)") {
    for (double s0 : {0.1, 0.25, 0.9, 2.0, 4.0}) {
        const ou::OUParams p{s0};
        for (double t : {0.0, 0.4, 1.5, 3.0}) {
            CHECK(ou::rate_dV(p, t) == doctest::Approx(-2.0 * ou::varentropy_V(p, t)).epsilon(1e-13));
            CHECK(ou::varentropy_V(p, t) / ou::varentropy_V(p, 0.0) == doctest::Approx(std::exp(-2 * t)).epsilon(1e-13));
            CHECK(ou::rate_dD(p, t) == doctest::Approx(-0.5 * ou::fisher_I(p, t)).epsilon(1e-13));
        }
    }
}

TEST_CASE("relative entropy equals the expectation of psi by fine quadrature") {
    for (double s0 : {0.25, 3.0}) {
        const ou::OUParams p{s0};
        for (double t : {0.0, 0.5, 2.0}) {
            const double s2 = ou::variance_at(p, t);
            const double sd = std::sqrt(s2);
            const double quad = support::simpson(
                [&](double x) { return ou::psi_at(p, t, x) * support::normal_pdf(x, 0.0, s2); }, -14 * sd, 14 * sd, 20000);
            CHECK(std::abs(quad - ou::entropy_D(p, t)) < 1e-10);
        }
    }
}

TEST_CASE("varentropy from the fourth Gaussian moment") {
    for (double s0 : {0.25, 4.0}) {
        const ou::OUParams p{s0};
        for (double t : {0.0, 0.3, 1.0, 2.5}) {
            // psi = a - b x^2 with E X^2 = s2 and E X^4 = 3 s2^2.
            const double s2 = ou::variance_at(p, t);
            const double a = -0.5 * std::log(s2);
            const double b = 0.5 * (1.0 - s2) / s2;
            const double m1 = a - b * s2;
            const double m2 = a * a - 2 * a * b * s2 + 3 * b * b * s2 * s2;
            CHECK(std::abs((m2 - m1 * m1) - ou::varentropy_V(p, t)) < 1e-12);
            CHECK(std::abs(m1 - ou::entropy_D(p, t)) < 1e-12);
        }
    }
}

TEST_CASE("degenerate variance") {
    CHECK(error_code([] { ou::entropy_D({0.0}, 0.0); }) == Errc::invalid_density);
    CHECK(error_code([] { ou::gaussian_density(Grid(-1, 1, 11), 0.0, 0.0); }) == Errc::invalid_density);
    CHECK(error_code([] { ou::varentropy_V({0.25}, -1.0); }) == Errc::negative_time);
}

TEST_CASE("OU model constants") {
    const auto m = ou::model();
    CHECK(m.sigma() == 1.0);
    CHECK(m.drift(2.0) == -1.0);
}
