#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace varentropy {

/// Uniform 1-D mesh. Node i sits at lo + i*dx.
class Grid {
public:
    Grid(double lo, double hi, std::size_t n);

    double lo() const noexcept { return lo_; }
    double hi() const noexcept { return hi_; }
    std::size_t size() const noexcept { return n_; }
    double dx() const noexcept { return dx_; }

    double x(std::size_t i) const noexcept { return i + 1 == n_ ? hi_ : lo_ + static_cast<double>(i) * dx_; }
    std::vector<double> nodes() const;

    /// Trapezoid weight of node i (dx inside, dx/2 at the two ends).
    double weight(std::size_t i) const noexcept { return (i == 0 || i + 1 == n_) ? 0.5 * dx_ : dx_; }

    friend bool operator==(const Grid&, const Grid&) = default;

private:
    double lo_;
    double hi_;
    std::size_t n_;
    double dx_;
};

Grid make_uniform_grid(double lo, double hi, std::size_t n);

/// Non-negative density values on a grid at a model time. Unit mass is
/// checked where densities enter a computation (see check_mass), not here.
class Density {
public:
    Density(Grid grid, std::vector<double> values, double time = 0.0);

    /// Rescales a non-negative, non-zero vector to unit trapezoid mass.
    static Density normalized(Grid grid, std::vector<double> values, double time = 0.0);

    const Grid& grid() const noexcept { return grid_; }
    std::span<const double> values() const noexcept { return values_; }
    double operator[](std::size_t i) const noexcept { return values_[i]; }
    double time() const noexcept { return time_; }
    double max_value() const noexcept;
    double mass() const;

    /// Throws invalid_density when |mass - 1| > tol.
    void check_mass(double tol) const;

    Density at_time(double t) const { return Density(grid_, values_, t); }

private:
    Grid grid_;
    std::vector<double> values_;
    double time_;
};

class DensityTrajectory {
public:
    DensityTrajectory() = default;
    DensityTrajectory(std::vector<double> times, std::vector<Density> states);

    void push_back(Density state);

    std::size_t size() const noexcept { return states_.size(); }
    bool empty() const noexcept { return states_.empty(); }
    const std::vector<double>& times() const noexcept { return times_; }
    const std::vector<Density>& states() const noexcept { return states_; }
    const Density& operator[](std::size_t i) const { return states_.at(i); }
    const Grid& grid() const { return states_.front().grid(); }

private:
    std::vector<double> times_;
    std::vector<Density> states_;
};

double integrate(std::span<const double> values, const Grid& grid);

/// Central differences inside, second-order one-sided stencils at the ends.
std::vector<double> gradient(std::span<const double> values, const Grid& grid);

/// Three-point second difference inside, four-point one-sided at the ends.
std::vector<double> second_derivative(std::span<const double> values, const Grid& grid);

/// ln(max(p_i, floor) / max(q_i, floor)).
std::vector<double> safe_log_ratio(const Density& p, const Density& q, double floor = 1e-300);

/// Linear interpolation of grid values at x; clamps to the end values outside the grid.
double interpolate(std::span<const double> values, const Grid& grid, double x);

/// Nodes where p_i >= rel_threshold * max(p). Nodes outside the mask are
/// dropped from log-weighted integrals.
std::vector<bool> tail_mask(const Density& p, double rel_threshold = 1e-12);

void require_same_grid(const Grid& a, const Grid& b);

}  // namespace varentropy
