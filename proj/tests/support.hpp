#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "varentropy/error.hpp"
#include "varentropy/grid.hpp"

namespace support {

inline double normal_pdf(double x, double mean, double variance) {
    const double z = x - mean;
    return std::exp(-0.5 * z * z / variance) / std::sqrt(2.0 * std::numbers::pi * variance);
}

inline double grid_mean(const varentropy::Density& p) {
    double m = 0.0;
    for (std::size_t i = 0; i < p.grid().size(); ++i) m += p.grid().weight(i) * p[i] * p.grid().x(i);
    return m;
}

inline double grid_variance(const varentropy::Density& p) {
    const double m = grid_mean(p);
    double v = 0.0;
    for (std::size_t i = 0; i < p.grid().size(); ++i) {
        const double z = p.grid().x(i) - m;
        v += p.grid().weight(i) * p[i] * z * z;
    }
    return v;
}

inline double sup_diff(const varentropy::Density& a, const varentropy::Density& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.grid().size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    return worst;
}

// Composite Simpson rule on [a, b] with an even number of panels.
template <class F>
double simpson(F&& f, double a, double b, std::size_t panels) {
    if (panels % 2) ++panels;
    const double h = (b - a) / static_cast<double>(panels);
    double acc = f(a) + f(b);
    for (std::size_t i = 1; i < panels; ++i) acc += (i % 2 ? 4.0 : 2.0) * f(a + static_cast<double>(i) * h);
    return acc * h / 3.0;
}

template <class F>
varentropy::Errc error_code(F&& f) {
    try {
        f();
    } catch (const varentropy::Error& e) {
        return e.code();
    }
    throw std::logic_error("expected varentropy::Error");
}

}  // namespace support
