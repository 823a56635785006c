#include "varentropy/sde_mc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <thread>

#include "varentropy/error.hpp"

namespace varentropy {

namespace {

constexpr double nan = std::numeric_limits<double>::quiet_NaN();

std::mt19937_64 path_stream(std::uint64_t seed, std::size_t path) {
    const auto p = static_cast<std::uint64_t>(path);
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(p), static_cast<std::uint32_t>(p >> 32), 0x5eedu};
    return std::mt19937_64(seq);
}

double reflect(double x, double lo, double hi) {
    const double width = hi - lo;
    for (int guard = 0; guard < 64 && (x < lo || x > hi); ++guard) {
        if (x < lo) x = 2.0 * lo - x;
        if (x > hi) x = 2.0 * hi - x;
    }
    return std::clamp(x, lo, lo + width);
}

struct Moments {
    double mean = 0.0;
    double se = 0.0;
};

Moments mean_and_se(std::span<const double> v) {
    const auto n = static_cast<double>(v.size());
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= n;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double var = v.size() > 1 ? ss / (n - 1.0) : 0.0;
    return {mean, std::sqrt(var / n)};
}

void require_index(const PathEnsemble& ens, std::size_t t_index) {
    if (t_index >= ens.n_times()) throw Error(Errc::index_out_of_range, "time index beyond the ensemble");
}

// exp(-psi) at each position, psi interpolated from grid values.
std::vector<double> martingale_values(std::span<const double> xs, const std::vector<double>& psi, const Grid& grid) {
    std::vector<double> m(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) m[i] = std::exp(-interpolate(psi, grid, xs[i]));
    return m;
}

}  // namespace

PathEnsemble::PathEnsemble(DriftModel model, std::vector<double> times, std::size_t n_paths, std::uint64_t seed,
                           std::vector<double> states)
    : model_(model), times_(std::move(times)), n_paths_(n_paths), seed_(seed), states_(std::move(states)) {
    if (states_.size() != times_.size() * n_paths_)
        throw Error(Errc::length_mismatch, "ensemble storage does not match n_paths x n_times");
}

std::span<const double> PathEnsemble::column(std::size_t t_index) const {
    if (t_index >= times_.size()) throw Error(Errc::index_out_of_range, "time index beyond the ensemble");
    return std::span<const double>(states_).subspan(t_index * n_paths_, n_paths_);
}

std::vector<double> cumulative_mass(const Density& density) {
    const Grid& g = density.grid();
    std::vector<double> cdf(g.size(), 0.0);
    for (std::size_t i = 1; i < g.size(); ++i) cdf[i] = cdf[i - 1] + 0.5 * g.dx() * (density[i - 1] + density[i]);
    const double total = cdf.back();
    if (!(total > 0.0)) throw Error(Errc::invalid_density, "cannot sample from a zero-mass density");
    for (double& c : cdf) c /= total;
    return cdf;
}

double sample_inverse_cdf(const Density& density, std::span<const double> cdf, double u) {
    const Grid& g = density.grid();
    u = std::clamp(u, 0.0, 1.0);
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    if (it == cdf.end()) return g.hi();
    if (it == cdf.begin()) return g.lo();
    const auto i = static_cast<std::size_t>(it - cdf.begin()) - 1;
    const double span = cdf[i + 1] - cdf[i];
    const double frac = span > 0.0 ? (u - cdf[i]) / span : 0.0;
    return g.x(i) + frac * g.dx();
}

PathEnsemble simulate_ensemble(const DriftModel& model, const Density& init, double dt, double t_end,
                               std::size_t n_paths, std::uint64_t seed, const EnsembleOptions& opts) {
    if (!(dt > 0.0) || !(t_end >= 0.0) || opts.substeps == 0)
        throw Error(Errc::invalid_step, "ensemble needs dt > 0, t_end >= 0 and at least one sub-step");
    if (n_paths == 0) throw Error(Errc::invalid_step, "ensemble needs at least one path");

    const auto n_steps = static_cast<std::size_t>(std::llround(t_end / dt));
    if (std::abs(static_cast<double>(n_steps) * dt - t_end) > 1e-9 * std::max(1.0, t_end))
        throw Error(Errc::invalid_step, "t_end must be an integer multiple of dt");
    std::vector<double> times(n_steps + 1);
    for (std::size_t k = 0; k <= n_steps; ++k) times[k] = static_cast<double>(k) * dt;

    const auto cdf = cumulative_mass(init);
    const double lo = init.grid().lo(), hi = init.grid().hi();
    const double h = dt / static_cast<double>(opts.substeps);
    const double noise = model.sigma() * std::sqrt(h);
    std::vector<double> states(times.size() * n_paths);

    const auto run_paths = [&](std::size_t first, std::size_t last) {
        for (std::size_t path = first; path < last; ++path) {
            auto rng = path_stream(seed, path);
            std::uniform_real_distribution<double> uniform(0.0, 1.0);
            std::normal_distribution<double> normal(0.0, 1.0);
            double x = sample_inverse_cdf(init, cdf, uniform(rng));
            states[path] = x;
            for (std::size_t k = 1; k <= n_steps; ++k) {
                for (std::size_t s = 0; s < opts.substeps; ++s)
                    x = reflect(x + model.drift(x) * h + noise * normal(rng), lo, hi);
                states[k * n_paths + path] = x;
            }
        }
    };

    unsigned threads = opts.threads ? opts.threads : std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, n_paths));
    if (threads <= 1) {
        run_paths(0, n_paths);
    } else {
        std::vector<std::jthread> pool;
        const std::size_t chunk = (n_paths + threads - 1) / threads;
        for (std::size_t first = 0; first < n_paths; first += chunk)
            pool.emplace_back(run_paths, first, std::min(n_paths, first + chunk));
    }
    return PathEnsemble(model, std::move(times), n_paths, seed, std::move(states));
}

Grid default_bins(std::span<const double> xs, std::size_t n_bins) {
    if (xs.empty()) throw Error(Errc::no_defined_bins, "no samples to bin");
    std::vector<double> sorted(xs.begin(), xs.end());
    std::sort(sorted.begin(), sorted.end());
    const auto q = [&](double f) {
        return sorted[static_cast<std::size_t>(f * static_cast<double>(sorted.size() - 1))];
    };
    double lo = q(0.005), hi = q(0.995);
    if (!(hi > lo)) hi = lo + 1.0;
    return Grid(lo, hi, n_bins);
}

std::size_t BinnedEstimate::n_defined() const noexcept {
    std::size_t n = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) n += defined(i) ? 1 : 0;
    return n;
}

BinnedEstimate bin_average(std::span<const double> xs, std::span<const double> ys, const Grid& bins,
                           std::size_t min_count) {
    if (xs.size() != ys.size()) throw Error(Errc::length_mismatch, "bin_average inputs differ in length");
    const std::size_t nb = bins.size();
    std::vector<double> sum(nb, 0.0), sum_sq(nb, 0.0);
    BinnedEstimate est;
    est.min_count = min_count;
    est.bin_centers = bins.nodes();
    est.counts.assign(nb, 0);
    // Two passes (mean, then centered squares) keep the variance free of cancellation.
    std::vector<std::ptrdiff_t> slot(xs.size(), -1);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double s = std::round((xs[i] - bins.lo()) / bins.dx());
        if (s < 0.0 || s > static_cast<double>(nb - 1)) continue;
        const auto b = static_cast<std::size_t>(s);
        slot[i] = static_cast<std::ptrdiff_t>(b);
        sum[b] += ys[i];
        ++est.counts[b];
    }
    std::vector<double> mean(nb, 0.0);
    for (std::size_t b = 0; b < nb; ++b)
        if (est.counts[b]) mean[b] = sum[b] / static_cast<double>(est.counts[b]);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (slot[i] < 0) continue;
        const auto b = static_cast<std::size_t>(slot[i]);
        sum_sq[b] += (ys[i] - mean[b]) * (ys[i] - mean[b]);
    }
    est.values.assign(nb, nan);
    est.std_errors.assign(nb, nan);
    for (std::size_t b = 0; b < nb; ++b) {
        if (!est.defined(b)) continue;
        const auto c = static_cast<double>(est.counts[b]);
        est.values[b] = mean[b];
        est.std_errors[b] = std::sqrt(sum_sq[b] / (c - 1.0) / c);
    }
    return est;
}

BinnedEstimate estimate_backward_drift(const PathEnsemble& ens, std::size_t t_index, const Grid& bins,
                                       std::size_t min_count) {
    require_index(ens, t_index);
    if (t_index == 0) throw Error(Errc::index_out_of_range, "backward drift needs an earlier sample");
    const auto now = ens.column(t_index);
    const auto before = ens.column(t_index - 1);
    const double dt = ens.times()[t_index] - ens.times()[t_index - 1];
    std::vector<double> inc(now.size());
    for (std::size_t i = 0; i < inc.size(); ++i) inc[i] = (now[i] - before[i]) / dt;
    return bin_average(now, inc, bins, min_count);
}

BinnedEstimate estimate_forward_drift(const PathEnsemble& ens, std::size_t t_index, const Grid& bins,
                                      std::size_t min_count) {
    require_index(ens, t_index);
    if (t_index + 1 >= ens.n_times()) throw Error(Errc::index_out_of_range, "forward drift needs a later sample");
    const auto now = ens.column(t_index);
    const auto after = ens.column(t_index + 1);
    const double dt = ens.times()[t_index + 1] - ens.times()[t_index];
    std::vector<double> inc(now.size());
    for (std::size_t i = 0; i < inc.size(); ++i) inc[i] = (after[i] - now[i]) / dt;
    return bin_average(now, inc, bins, min_count);
}

ResidualSummary binned_residual(const BinnedEstimate& est, const std::function<double(double)>& target) {
    double weight = 0.0, res2 = 0.0, se2 = 0.0;
    ResidualSummary out;
    for (std::size_t b = 0; b < est.counts.size(); ++b) {
        if (!est.defined(b)) continue;
        const auto c = static_cast<double>(est.counts[b]);
        const double diff = est.values[b] - target(est.bin_centers[b]);
        weight += c;
        res2 += c * diff * diff;
        se2 += c * est.std_errors[b] * est.std_errors[b];
        ++out.bins_used;
    }
    if (out.bins_used == 0) throw Error(Errc::no_defined_bins, "no bin reached the minimum count");
    out.rms = std::sqrt(res2 / weight);
    out.pooled_se = std::sqrt(se2 / weight);
    return out;
}

ResidualSummary duality_residual(const BinnedEstimate& est, const DriftModel& model, const Density& p_t,
                                 double log_floor) {
    const Grid& g = p_t.grid();
    std::vector<double> log_p(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) log_p[i] = std::log(std::max(p_t[i], log_floor));
    const auto score = gradient(log_p, g);
    const double s2 = model.sigma() * model.sigma();
    return binned_residual(est, [&](double x) { return model.drift(x) - s2 * interpolate(score, g, x); });
}

void require_same_times(const PathEnsemble& ens, const DensityTrajectory& traj) {
    const auto& a = ens.times();
    const auto& b = traj.times();
    bool same = a.size() == b.size();
    for (std::size_t k = 0; same && k < a.size(); ++k) same = std::abs(a[k] - b[k]) <= 1e-9 * std::max(1.0, a[k]);
    if (!same) throw Error(Errc::time_mesh_mismatch, "ensemble and trajectory are sampled at different times");
}

std::vector<MartingaleRow> martingale_diagnostic(const PathEnsemble& ens, const DensityTrajectory& traj,
                                                 const Density& pbar, const MartingaleOptions& opts) {
    require_same_times(ens, traj);
    require_same_grid(traj.grid(), pbar.grid());
    const Grid& g = traj.grid();
    std::vector<MartingaleRow> rows;
    std::vector<double> prev_m;
    for (std::size_t k = 0; k < ens.n_times(); ++k) {
        const auto psi = safe_log_ratio(traj[k], pbar, opts.log_floor);
        const auto xs = ens.column(k);
        auto m = martingale_values(xs, psi, g);
        MartingaleRow row;
        row.time = ens.times()[k];
        const auto mom = mean_and_se(m);
        row.mean_M = mom.mean;
        row.se_M = mom.se;
        if (k > 0) {
            std::vector<double> diff(m.size());
            for (std::size_t i = 0; i < m.size(); ++i) diff[i] = prev_m[i] - m[i];
            const Grid bins = opts.bins ? *opts.bins : default_bins(xs);
            const auto est = bin_average(xs, diff, bins, opts.min_count);
            if (est.n_defined() > 0) {
                const auto res = binned_residual(est, [](double) { return 0.0; });
                row.cond_residual = res.rms;
                row.cond_pooled_se = res.pooled_se;
            }
        }
        rows.push_back(row);
        prev_m = std::move(m);
    }
    return rows;
}

McFunctionals mc_functionals(const PathEnsemble& ens, const DensityTrajectory& traj, const Density& pbar,
                             std::size_t t_index, const FunctionalOptions& opts) {
    require_same_times(ens, traj);
    require_index(ens, t_index);
    const Density& p = traj[t_index];
    const Grid& g = p.grid();
    const auto psi_grid = safe_log_ratio(p, pbar, opts.log_floor);
    const auto dpsi_grid = gradient(psi_grid, g);
    const auto xs = ens.column(t_index);
    const std::size_t n = xs.size();
    std::vector<double> psi(n), g2(n);
    for (std::size_t i = 0; i < n; ++i) {
        psi[i] = interpolate(psi_grid, g, xs[i]);
        const double d = interpolate(dpsi_grid, g, xs[i]);
        g2[i] = d * d;
    }
    const double s2 = ens.model().sigma() * ens.model().sigma();
    const auto d_mom = mean_and_se(psi);
    const double d_hat = d_mom.mean;

    std::vector<double> centered(n);
    for (std::size_t i = 0; i < n; ++i) centered[i] = (psi[i] - d_hat) * (psi[i] - d_hat);
    const auto v_mom = mean_and_se(centered);

    double mean_g2 = 0.0;
    for (double v : g2) mean_g2 += v;
    mean_g2 /= static_cast<double>(n);
    std::vector<double> integrand(n), influence(n);
    for (std::size_t i = 0; i < n; ++i) integrand[i] = s2 * (-psi[i] - 1.0 + d_hat) * g2[i];
    const auto r_mom = mean_and_se(integrand);
    // The plug-in mean d_hat adds sigma^2 E[g^2] (psi - D) to the influence function.
    for (std::size_t i = 0; i < n; ++i) influence[i] = integrand[i] + s2 * mean_g2 * (psi[i] - d_hat);
    const auto infl = mean_and_se(influence);

    McFunctionals out;
    out.D_hat = d_hat;
    out.se_D = d_mom.se;
    out.V_hat = v_mom.mean * static_cast<double>(n) / static_cast<double>(std::max<std::size_t>(n - 1, 1));
    out.se_V = v_mom.se;
    out.rate_hat = r_mom.mean;
    out.se_rate = infl.se;
    return out;
}

}  // namespace varentropy
