#pragma once

// Distances between a gridded density and the standard Gaussian: total
// variation, L^r, relative entropy, relative Fisher information, and the
// Gaussian-smoothing path used to cross-check entropy against Fisher
// information.

#include "chaoslab/errors.hpp"
#include "chaoslab/fgn_model.hpp"
#include "chaoslab/second_chaos.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace chaoslab {

inline double std_normal_log_pdf(double x) { return -0.5 * x * x - 0.5 * std::log(2.0 * std::numbers::pi); }
inline double std_normal_pdf(double x) { return std::exp(std_normal_log_pdf(x)); }
inline double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Exact N(0, 1) density sampled on the standard grid layout.
inline DensityGrid gaussian_grid(double half_width = 16.0, std::size_t points = std::size_t{1} << 16) {
    DensityGrid g;
    g.dx = 2.0 * half_width / static_cast<double>(points);
    g.x0 = -half_width;
    g.p.resize(points);
    g.dp.resize(points);
    double mass = 0.0;
    for (std::size_t j = 0; j < points; ++j) {
        const double x = g.x(j);
        g.p[j] = std_normal_pdf(x);
        g.dp[j] = -x * g.p[j];
        mass += g.p[j] * g.dx;
    }
    g.mass_defect = 1.0 - mass;
    return g;
}

namespace detail {

inline double trapezoid_weight(std::size_t j, std::size_t n) { return (j == 0 || j + 1 == n) ? 0.5 : 1.0; }

inline constexpr double kFloorRatio = 1e-14;

}  // namespace detail

/// d_TV = (1/2) int |p - p_N|.
inline double tv_distance(const DensityGrid& g) {
    double s = 0.0;
    for (std::size_t j = 0; j < g.size(); ++j)
        s += detail::trapezoid_weight(j, g.size()) * std::abs(g.p[j] - std_normal_pdf(g.x(j)));
    return 0.5 * s * g.dx;
}

/// Uncertainty of tv_distance from Gaussian mass outside the grid, mass
/// defect and clamped ripple.
inline double tv_error_budget(const DensityGrid& g) {
    const double outside = std_normal_cdf(g.x0) + (1.0 - std_normal_cdf(g.x_end()));
    return 0.5 * (outside + std::abs(g.mass_defect)) + g.clamped_mass;
}

/// ||p - p_N||_r; r = infinity gives the grid maximum.
inline double lr_distance(const DensityGrid& g, double r) {
    if (!(r >= 1.0)) throw InvalidArgument("lr_distance: r must be >= 1");
    if (std::isinf(r)) {
        double m = 0.0;
        for (std::size_t j = 0; j < g.size(); ++j) m = std::max(m, std::abs(g.p[j] - std_normal_pdf(g.x(j))));
        return m;
    }
    double s = 0.0;
    for (std::size_t j = 0; j < g.size(); ++j)
        s += detail::trapezoid_weight(j, g.size()) * std::pow(std::abs(g.p[j] - std_normal_pdf(g.x(j))), r);
    return std::pow(s * g.dx, 1.0 / r);
}

/// D(F || N) = int p log(p / p_N), integrand dropped below the density floor.
inline double relative_entropy(const DensityGrid& g) {
    const double floor = detail::kFloorRatio * g.max_density();
    double s = 0.0;
    for (std::size_t j = 0; j < g.size(); ++j) {
        const double p = g.p[j];
        if (p <= floor) continue;
        s += detail::trapezoid_weight(j, g.size()) * p * (std::log(p) - std_normal_log_pdf(g.x(j)));
    }
    return s * g.dx;
}

/// Relative Fisher information J(F) - 1, or Divergent.
class FisherExcess {
public:
    static FisherExcess finite(double v) { return FisherExcess(v); }
    static FisherExcess divergent() { return FisherExcess(std::nullopt); }

    bool is_finite() const { return value_.has_value(); }
    double value() const {
        if (!value_) throw InvalidArgument("Fisher information is divergent");
        return *value_;
    }
    double value_or(double fallback) const { return value_.value_or(fallback); }

private:
    explicit FisherExcess(std::optional<double> v) : value_(v) {}
    std::optional<double> value_;
};

namespace detail {

inline double fisher_integral(const DensityGrid& g, double floor) {
    double s = 0.0;
    for (std::size_t j = 0; j < g.size(); ++j) {
        const double p = g.p[j];
        if (p <= floor) continue;
        const double u = g.dp[j] / p + g.x(j);
        s += trapezoid_weight(j, g.size()) * u * u * p;
    }
    return s * g.dx;
}

}  // namespace detail

/// J(F) - 1 = int (p'/p + x)^2 p over {p > floor}.
///
/// Divergent when the grid carries a hard edge with p ~ (x - edge)^alpha,
/// alpha <= 1 (then p'^2/p is not integrable), or when the value moves by
/// more than 5% as the density floor is lowered tenfold.
inline FisherExcess fisher_excess(const DensityGrid& g) {
    if (g.left_support_edge && g.edge_exponent && *g.edge_exponent <= 1.0 && *g.left_support_edge > g.x0)
        return FisherExcess::divergent();
    const double pmax = g.max_density();
    const double j1 = detail::fisher_integral(g, detail::kFloorRatio * pmax);
    const double j2 = detail::fisher_integral(g, 0.1 * detail::kFloorRatio * pmax);
    if (std::abs(j2 - j1) > 0.05 * std::abs(j1) + 1e-12) return FisherExcess::divergent();
    return FisherExcess::finite(j1);
}

struct ShimizuCheck {
    double sup;
    double bound;
    bool ok;
};

/// ||p - p_N||_inf <= sqrt(J(F) - 1).
inline ShimizuCheck shimizu_check(const DensityGrid& g) {
    const auto J = fisher_excess(g);
    if (!J.is_finite()) throw InvalidArgument("shimizu_check: Fisher information is divergent");
    const double sup = lr_distance(g, std::numeric_limits<double>::infinity());
    const double bound = std::sqrt(std::max(J.value(), 0.0));
    return {sup, bound, sup <= bound + 1e-6};
}

/// Density of sqrt(t) F + sqrt(1 - t) N with N independent of F.
inline DensityGrid gaussian_smoothed_density(const SecondChaosSpectrum& s, double t, const GridOptions& opts = {}) {
    if (!(t > 0.0 && t <= 1.0)) throw InvalidArgument("gaussian_smoothed_density: t must lie in (0, 1]");
    if (t == 1.0) return density(s, opts);
    const detail::LambdaGroups groups(s.lambdas);
    const double st = std::sqrt(t);
    return detail::with_refinement(opts, [&](double hw, std::size_t pts) {
        return detail::invert_char_fn(
            [&](double u) { return groups.log_char_fn(st * u) - 0.5 * (1.0 - t) * u * u; }, hw, pts,
            std::nullopt, std::nullopt);
    });
}

struct DeBruijnResult {
    double value;
    double error_estimate;
    std::size_t evaluations;
};

/// D(F || N) = int_0^1 (J(sqrt(t) F + sqrt(1-t) N) - 1) / (2t) dt by adaptive
/// Gauss-Kronrod quadrature.
inline DeBruijnResult de_bruijn_entropy(const SecondChaosSpectrum& s, const GridOptions& opts = {},
                                        double rel_tol = 1e-5) {
    std::size_t evals = 0;
    auto integrand = [&](double t) {
        ++evals;
        const auto J = fisher_excess(gaussian_smoothed_density(s, t, opts));
        if (!J.is_finite())
            throw QuadratureFailure("de Bruijn integrand divergent at t = " + std::to_string(t));
        return J.value() / (2.0 * t);
    };
    double error = 0.0;
    const double value =
        boost::math::quadrature::gauss_kronrod<double, 15>::integrate(integrand, 0.0, 1.0, 10, rel_tol, &error);
    if (!std::isfinite(value) || error > std::max(1e-3 * std::abs(value), 1e-7))
        throw QuadratureFailure("de Bruijn integral did not stabilize (error estimate " + std::to_string(error) +
                                ")");
    return {value, error, evals};
}

/// All distances of one law to N(0, 1).
struct DistanceReport {
    std::optional<FgnSpec> provenance;
    double tv = 0.0;
    double sup = 0.0;
    double entropy = 0.0;
    FisherExcess fisher = FisherExcess::divergent();
    std::map<double, double> l_r;
    std::optional<double> stein_bound;
    double kappa3 = 0.0;
    double kappa4 = 0.0;
    double error_budget = 0.0;
    double mass_defect = 0.0;
};

struct ChainCheck {
    bool pinsker = true;      // 2 tv^2 <= D
    bool log_sobolev = true;  // D <= (J - 1) / 2
    bool shimizu = true;      // sup <= sqrt(J - 1)
    bool all() const { return pinsker && log_sobolev && shimizu; }
};

inline ChainCheck check_chain(const DistanceReport& r, double tol = 1e-6) {
    ChainCheck c;
    c.pinsker = 2.0 * r.tv * r.tv <= r.entropy + tol;
    if (r.fisher.is_finite()) {
        c.log_sobolev = r.entropy <= 0.5 * r.fisher.value() + tol;
        c.shimizu = r.sup <= std::sqrt(std::max(r.fisher.value(), 0.0)) + tol;
    }
    return c;
}

inline DistanceReport distance_report(const DensityGrid& g, const std::vector<double>& rs = {}) {
    DistanceReport r;
    r.tv = tv_distance(g);
    r.sup = lr_distance(g, std::numeric_limits<double>::infinity());
    r.entropy = relative_entropy(g);
    r.fisher = fisher_excess(g);
    for (double x : rs) r.l_r[x] = lr_distance(g, x);
    r.error_budget = tv_error_budget(g);
    r.mass_defect = g.mass_defect;
    return r;
}

inline DistanceReport distance_report(const SecondChaosSpectrum& s, const GridOptions& opts = {},
                                      const std::vector<double>& rs = {}) {
    auto r = distance_report(density(s, opts), rs);
    const auto k = cumulants(s, 4);
    r.kappa3 = k[3];
    r.kappa4 = k[4];
    r.provenance = s.source;
    return r;
}

}  // namespace chaoslab
