#pragma once

// Exact law of a second-chaos element F = sum_i lambda_i (Z_i^2 - 1):
// characteristic function, FFT inversion to a density grid, cumulants.

#include "chaoslab/errors.hpp"
#include "chaoslab/fft.hpp"
#include "chaoslab/fgn_model.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace chaoslab {

/// Uniform grid x_j = x0 + j dx of density values and derivatives.
struct DensityGrid {
    double x0 = 0.0;
    double dx = 0.0;
    std::vector<double> p;
    std::vector<double> dp;
    /// Hard lower end of the support, when the law has one.
    std::optional<double> left_support_edge;
    /// alpha with p(x) ~ (x - edge)^alpha as x decreases to the edge.
    std::optional<double> edge_exponent;
    /// 1 - sum p dx after clamping.
    double mass_defect = 0.0;
    /// Mass of negative FFT ripple that was clamped to zero.
    double clamped_mass = 0.0;

    std::size_t size() const { return p.size(); }
    double x(std::size_t j) const { return x0 + static_cast<double>(j) * dx; }
    double x_end() const { return x0 + static_cast<double>(p.size()) * dx; }
    double max_density() const { return p.empty() ? 0.0 : *std::max_element(p.begin(), p.end()); }
};

struct GridOptions {
    double half_width = 16.0;
    std::size_t points = std::size_t{1} << 16;
    /// Double half_width and points (keeping dx) on GridTooCoarse.
    bool auto_refine = true;
    std::size_t max_points = std::size_t{1} << 20;
};

struct CumulantSet {
    std::map<int, double> kappa;
    double operator[](int order) const { return kappa.at(order); }
};

namespace detail {

/// Distinct eigenvalues with multiplicities; the characteristic function only
/// depends on these.
struct LambdaGroups {
    std::vector<std::pair<double, double>> groups;  // (lambda, multiplicity)

    explicit LambdaGroups(const std::vector<double>& lambdas) {
        for (double l : lambdas) {
            if (l == 0.0) continue;
            if (!groups.empty() && std::abs(groups.back().first - l) <= 1e-15 * std::abs(l))
                groups.back().second += 1.0;
            else
                groups.emplace_back(l, 1.0);
        }
    }

    /// log phi(t) = sum_i [ -1/2 log(1 - 2 i lambda_i t) - i lambda_i t ],
    /// with the principal branch per factor (Re(1 - 2 i lambda t) = 1 > 0).
    std::complex<double> log_char_fn(double t) const {
        double re = 0.0, im = 0.0;
        for (const auto& [l, m] : groups) {
            const double a = 2.0 * l * t;
            re += m * (-0.25 * std::log1p(a * a));
            im += m * (0.5 * std::atan(a) - l * t);
        }
        return {re, im};
    }
};

/// Exponential filter exp(-a eta^8), a = -log(machine epsilon), on the
/// truncated frequency range |t| <= T (eta = |t| / T). Suppresses the Gibbs
/// oscillation that a slowly decaying phi (few eigenvalues, singular edge)
/// would otherwise spread over the whole grid, and leaves rapidly decaying
/// ones untouched.
inline double spectral_filter(double eta) {
    constexpr double a = 36.04365338911715;  // -log(2^-52)
    const double e2 = eta * eta;
    const double e4 = e2 * e2;
    return std::exp(-a * e4 * e4);
}

/// Inverts a characteristic function onto the grid x_j = -hw + j dx with one
/// complex FFT carrying both p (real part) and p' (imaginary part).
/// log_phi(t) is only called for t >= 0; phi(-t) = conj(phi(t)).
inline DensityGrid invert_char_fn(const std::function<std::complex<double>(double)>& log_phi, double half_width,
                                  std::size_t points, std::optional<double> edge,
                                  std::optional<double> edge_exponent) {
    if (points < (std::size_t{1} << 12) || (points & (points - 1)) != 0)
        throw InvalidArgument("density: points must be a power of two >= 2^12");
    if (!(half_width > 0.0)) throw InvalidArgument("density: half_width must be positive");

    const std::size_t N = points;
    const double dx = 2.0 * half_width / static_cast<double>(N);
    const double x0 = -half_width;
    const double dt = 2.0 * std::numbers::pi / (static_cast<double>(N) * dx);
    const std::size_t half = N / 2;

    std::vector<std::complex<double>> buf(N, {0.0, 0.0});
    // Index k <-> t_k = (k - N/2) dt; k = 0 (t = -N/2 dt) has no mirror and is left zero.
    for (std::size_t k = half; k < N; ++k) {
        const double t = static_cast<double>(k - half) * dt;
        const auto lp = log_phi(t);
        if (lp.real() < -700.0) break;  // |phi| is nonincreasing in |t|
        const double eta = static_cast<double>(k - half) / static_cast<double>(half);
        const std::complex<double> phi = std::exp(lp) * spectral_filter(eta);
        const std::complex<double> shift = std::polar(1.0, -t * x0);
        const std::complex<double> X = phi * shift;            // -> p
        const std::complex<double> Y = std::complex<double>(0.0, -t) * X;  // -> p'
        buf[k] = X + std::complex<double>(0.0, 1.0) * Y;
        if (k != half) {
            const std::size_t km = N - (k - half) - half;  // index of -t
            buf[km] = std::conj(X) + std::complex<double>(0.0, 1.0) * std::conj(Y);
        }
    }

    FftPlan plan(N, FftDirection::forward);
    plan.execute(buf);

    DensityGrid g;
    g.x0 = x0;
    g.dx = dx;
    g.p.resize(N);
    g.dp.resize(N);
    g.left_support_edge = edge;
    g.edge_exponent = edge_exponent;
    const double scale = dt / (2.0 * std::numbers::pi);
    for (std::size_t j = 0; j < N; ++j) {
        const double sign = (j % 2 == 0) ? 1.0 : -1.0;
        g.p[j] = sign * scale * buf[j].real();
        g.dp[j] = sign * scale * buf[j].imag();
    }

    double mass = 0.0, clamped = 0.0;
    for (std::size_t j = 0; j < N; ++j) {
        if (edge && g.x(j) <= *edge) {
            g.p[j] = 0.0;
            g.dp[j] = 0.0;
        } else if (g.p[j] < 0.0) {
            clamped -= g.p[j] * dx;
            g.p[j] = 0.0;
        }
        mass += g.p[j] * dx;
    }
    g.mass_defect = 1.0 - mass;
    g.clamped_mass = clamped;

    const double pmax = g.max_density();
    if (g.p.front() > 1e-8 * pmax || g.p.back() > 1e-8 * pmax)
        throw GridTooCoarse("density tail at +/-" + std::to_string(half_width) + " exceeds 1e-8 of the peak");
    // A density that is unbounded or jumps at a hard edge cannot be summed to
    // 1e-4 on any uniform grid; only tail truncation is checked for it.
    const bool bounded = !edge_exponent || *edge_exponent > 0.0;
    if (bounded && std::abs(g.mass_defect) > 1e-4)
        throw GridTooCoarse("density mass defect " + std::to_string(g.mass_defect) + " exceeds 1e-4");
    return g;
}

template <class Attempt>
DensityGrid with_refinement(const GridOptions& opts, Attempt&& attempt) {
    double hw = opts.half_width;
    std::size_t pts = opts.points;
    for (;;) {
        try {
            return attempt(hw, pts);
        } catch (const GridTooCoarse&) {
            if (!opts.auto_refine || pts * 2 > opts.max_points) throw;
            hw *= 2.0;
            pts *= 2;
        }
    }
}

}  // namespace detail

/// phi(t) = prod_i (1 - 2 i lambda_i t)^{-1/2} exp(-i lambda_i t).
inline std::complex<double> char_fn(const SecondChaosSpectrum& s, double t) {
    return std::exp(detail::LambdaGroups(s.lambdas).log_char_fn(t));
}

/// Left support edge -sum lambda_i and its edge exponent k/2 - 1 (k positive
/// eigenvalues), present when every eigenvalue is nonnegative.
inline std::pair<std::optional<double>, std::optional<double>> support_edge(const SecondChaosSpectrum& s) {
    if (!s.all_nonnegative() || s.positive_count() == 0) return {std::nullopt, std::nullopt};
    double sum = 0.0;
    for (double l : s.lambdas) sum += l;
    return {-sum, 0.5 * static_cast<double>(s.positive_count()) - 1.0};
}

/// Density and its derivative on a uniform grid by FFT inversion of the
/// characteristic function.
inline DensityGrid density(const SecondChaosSpectrum& s, const GridOptions& opts = {}) {
    const detail::LambdaGroups groups(s.lambdas);
    const auto [edge, alpha] = support_edge(s);
    return detail::with_refinement(opts, [&](double hw, std::size_t pts) {
        return detail::invert_char_fn([&](double t) { return groups.log_char_fn(t); }, hw, pts, edge, alpha);
    });
}

/// kappa_p = 2^{p-1} (p-1)! sum_i lambda_i^p, kappa_1 = 0.
inline CumulantSet cumulants(const SecondChaosSpectrum& s, int max_order) {
    if (max_order < 2) throw InvalidArgument("cumulants: max_order must be >= 2");
    CumulantSet c;
    c.kappa[1] = 0.0;
    std::vector<double> pw(s.lambdas.begin(), s.lambdas.end());
    double coef = 1.0;  // 2^{p-1} (p-1)!
    for (int p = 2; p <= max_order; ++p) {
        coef *= 2.0 * (p - 1);
        double sum = 0.0;
        for (std::size_t i = 0; i < pw.size(); ++i) {
            pw[i] *= s.lambdas[i];
            sum += pw[i];
        }
        c.kappa[p] = coef * sum;
    }
    return c;
}

/// Piecewise-linear CDF of a density grid (trapezoid accumulation).
class GridCdf {
public:
    explicit GridCdf(const DensityGrid& g) : x0_(g.x0), dx_(g.dx), cum_(g.size(), 0.0) {
        for (std::size_t j = 1; j < g.size(); ++j) cum_[j] = cum_[j - 1] + 0.5 * (g.p[j - 1] + g.p[j]) * g.dx;
    }

    double operator()(double x) const {
        if (x <= x0_) return 0.0;
        const double u = (x - x0_) / dx_;
        const auto j = static_cast<std::size_t>(u);
        if (j + 1 >= cum_.size()) return cum_.back();
        const double w = u - static_cast<double>(j);
        return (1.0 - w) * cum_[j] + w * cum_[j + 1];
    }

    double total() const { return cum_.back(); }

private:
    double x0_, dx_;
    std::vector<double> cum_;
};

}  // namespace chaoslab
