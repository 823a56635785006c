#include "varentropy/grid.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "varentropy/error.hpp"

namespace varentropy {

namespace {

void require_length(std::span<const double> values, const Grid& grid) {
    if (values.size() != grid.size()) {
        std::ostringstream msg;
        msg << "expected " << grid.size() << " values, got " << values.size();
        throw Error(Errc::length_mismatch, msg.str());
    }
}

}  // namespace

Grid::Grid(double lo, double hi, std::size_t n) : lo_(lo), hi_(hi), n_(n), dx_(0.0) {
    if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi)) {
        std::ostringstream msg;
        msg << "grid requires lo < hi, got [" << lo << ", " << hi << "]";
        throw Error(Errc::invalid_bounds, msg.str());
    }
    if (n < 3) throw Error(Errc::invalid_bounds, "grid requires at least 3 nodes");
    dx_ = (hi - lo) / static_cast<double>(n - 1);
}

std::vector<double> Grid::nodes() const {
    std::vector<double> xs(n_);
    for (std::size_t i = 0; i < n_; ++i) xs[i] = x(i);
    return xs;
}

Grid make_uniform_grid(double lo, double hi, std::size_t n) { return Grid(lo, hi, n); }

Density::Density(Grid grid, std::vector<double> values, double time)
    : grid_(grid), values_(std::move(values)), time_(time) {
    require_length(values_, grid_);
    for (double v : values_) {
        if (!(v >= 0.0) || !std::isfinite(v))
            throw Error(Errc::invalid_density, "density values must be finite and non-negative");
    }
}

Density Density::normalized(Grid grid, std::vector<double> values, double time) {
    require_length(values, grid);
    const double mass = integrate(values, grid);
    if (!(mass > 0.0) || !std::isfinite(mass))
        throw Error(Errc::invalid_density, "cannot normalize a vector with non-positive mass");
    for (double& v : values) v /= mass;
    return Density(grid, std::move(values), time);
}

double Density::max_value() const noexcept { return *std::max_element(values_.begin(), values_.end()); }

double Density::mass() const { return integrate(values_, grid_); }

void Density::check_mass(double tol) const {
    const double m = mass();
    if (std::abs(m - 1.0) > tol) {
        std::ostringstream msg;
        msg << "mass " << m << " outside 1 +/- " << tol;
        throw Error(Errc::invalid_density, msg.str());
    }
}

DensityTrajectory::DensityTrajectory(std::vector<double> times, std::vector<Density> states) {
    if (times.size() != states.size())
        throw Error(Errc::length_mismatch, "trajectory times and states differ in length");
    for (std::size_t i = 0; i < states.size(); ++i) push_back(states[i].at_time(times[i]));
}

void DensityTrajectory::push_back(Density state) {
    if (!states_.empty()) {
        require_same_grid(states_.front().grid(), state.grid());
        if (!(state.time() > times_.back()))
            throw Error(Errc::invalid_time_grid, "trajectory times must be strictly increasing");
    }
    times_.push_back(state.time());
    states_.push_back(std::move(state));
}

double integrate(std::span<const double> values, const Grid& grid) {
    require_length(values, grid);
    const std::size_t n = values.size();
    double inner = 0.0;
    for (std::size_t i = 1; i + 1 < n; ++i) inner += values[i];
    return grid.dx() * (inner + 0.5 * (values[0] + values[n - 1]));
}

std::vector<double> gradient(std::span<const double> values, const Grid& grid) {
    require_length(values, grid);
    const std::size_t n = values.size();
    const double h = grid.dx();
    std::vector<double> d(n);
    for (std::size_t i = 1; i + 1 < n; ++i) d[i] = (values[i + 1] - values[i - 1]) / (2.0 * h);
    d[0] = (4.0 * (values[1] - values[0]) - (values[2] - values[0])) / (2.0 * h);
    d[n - 1] = (4.0 * (values[n - 1] - values[n - 2]) - (values[n - 1] - values[n - 3])) / (2.0 * h);
    return d;
}

std::vector<double> second_derivative(std::span<const double> values, const Grid& grid) {
    require_length(values, grid);
    const std::size_t n = values.size();
    const double h2 = grid.dx() * grid.dx();
    std::vector<double> d(n);
    for (std::size_t i = 1; i + 1 < n; ++i) d[i] = (values[i + 1] - 2.0 * values[i] + values[i - 1]) / h2;
    if (n >= 4) {
        d[0] = (-5.0 * (values[1] - values[0]) + 4.0 * (values[2] - values[0]) - (values[3] - values[0])) / h2;
        d[n - 1] = (-5.0 * (values[n - 2] - values[n - 1]) + 4.0 * (values[n - 3] - values[n - 1]) -
                    (values[n - 4] - values[n - 1])) / h2;
    } else {
        d[0] = d[1];
        d[n - 1] = d[1];
    }
    return d;
}

std::vector<double> safe_log_ratio(const Density& p, const Density& q, double floor) {
    require_same_grid(p.grid(), q.grid());
    if (!(floor > 0.0)) throw Error(Errc::nonpositive_floor, "log floor must be positive");
    std::vector<double> out(p.grid().size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = std::log(std::max(p[i], floor)) - std::log(std::max(q[i], floor));
    return out;
}

double interpolate(std::span<const double> values, const Grid& grid, double x) {
    require_length(values, grid);
    if (x <= grid.lo()) return values.front();
    if (x >= grid.hi()) return values.back();
    const double s = (x - grid.lo()) / grid.dx();
    const auto i = std::min(static_cast<std::size_t>(s), grid.size() - 2);
    const double frac = s - static_cast<double>(i);
    return values[i] + frac * (values[i + 1] - values[i]);
}

std::vector<bool> tail_mask(const Density& p, double rel_threshold) {
    const double cut = rel_threshold * p.max_value();
    std::vector<bool> keep(p.grid().size());
    for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = p[i] >= cut && p[i] > 0.0;
    return keep;
}

void require_same_grid(const Grid& a, const Grid& b) {
    if (!(a == b)) throw Error(Errc::grid_mismatch, "densities live on different grids");
}

}  // namespace varentropy
