#pragma once

// Fractional Gaussian noise: covariance, normalization of the standardized
// quadratic variation F_n, and its exact second-chaos spectrum.

#include "chaoslab/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <span>
#include <vector>

namespace chaoslab {

class HurstIndex {
public:
    explicit HurstIndex(double h) : h_(h) {
        if (!(h > 0.0 && h < 1.0))
            throw InvalidArgument("Hurst index must lie in (0, 1), got " + std::to_string(h));
    }
    double value() const { return h_; }
    friend bool operator==(HurstIndex a, HurstIndex b) { return a.h_ == b.h_; }

private:
    double h_;
};

/// Hurst index and number of increments defining F_n.
struct FgnSpec {
    HurstIndex hurst;
    std::size_t n;

    FgnSpec(HurstIndex h, std::size_t count) : hurst(h), n(count) {
        if (n < 1) throw InvalidArgument("FgnSpec: n must be >= 1");
    }
    static FgnSpec of(double h, std::size_t n) { return FgnSpec(HurstIndex(h), n); }

    double h() const { return hurst.value(); }
    friend bool operator==(const FgnSpec&, const FgnSpec&) = default;
};

/// Lag-k autocovariance of unit fGn:
///   rho(k) = (|k+1|^{2H} + |k-1|^{2H} - 2|k|^{2H}) / 2.
///
/// For k >= 4 the second difference is summed as the binomial series
/// k^{2H} sum_{j>=1} C(2H, 2j) k^{-2j}, which avoids the cancellation of the
/// closed form at large lags.
inline double rho(HurstIndex h, std::size_t k) {
    const double a = 2.0 * h.value();
    if (a == 1.0) return k == 0 ? 1.0 : 0.0;
    const double kd = static_cast<double>(k);
    if (k < 4) {
        return 0.5 * (std::pow(kd + 1.0, a) + std::pow(std::abs(kd - 1.0), a) - 2.0 * std::pow(kd, a));
    }
    const double u2 = 1.0 / (kd * kd);
    double binom = 1.0;  // C(a, m)
    double upow = 1.0;
    double sum = 0.0;
    for (int m = 1; m <= 80; ++m) {
        binom *= (a - m + 1) / m;
        if (m % 2 == 1) continue;
        upow *= u2;
        const double term = binom * upow;
        sum += term;
        if (std::abs(term) <= 1e-18 * std::abs(sum)) break;
    }
    return std::pow(kd, a) * sum;
}

inline double rho(double h, std::size_t k) { return rho(HurstIndex(h), k); }

/// rho(0), ..., rho(lags - 1).
inline std::vector<double> covariance_sequence(HurstIndex h, std::size_t lags) {
    std::vector<double> out(lags);
    for (std::size_t k = 0; k < lags; ++k) out[k] = rho(h, k);
    return out;
}

/// Normalizer v_n with E[F_n^2] = 1:
///   v_n = (2/n) sum_{k,l<n} rho(k-l)^2 = 2 [1 + 2 sum_{m=1}^{n-1} (1 - m/n) rho(m)^2].
inline double vn_from_covariance(std::span<const double> r) {
    const double n = static_cast<double>(r.size());
    double sum = 0.0, comp = 0.0;  // Neumaier
    for (std::size_t m = 1; m < r.size(); ++m) {
        const double term = (1.0 - static_cast<double>(m) / n) * r[m] * r[m];
        const double t = sum + term;
        comp += std::abs(sum) >= std::abs(term) ? (sum - t) + term : (term - t) + sum;
        sum = t;
    }
    return 2.0 * (1.0 + 2.0 * (sum + comp));
}

inline double vn(const FgnSpec& spec) { return vn_from_covariance(covariance_sequence(spec.hurst, spec.n)); }

/// Toeplitz Gram matrix R[j][k] = rho(j - k) of (xi_0, ..., xi_{n-1}).
inline Eigen::MatrixXd gram_matrix(const FgnSpec& spec) {
    const auto r = covariance_sequence(spec.hurst, spec.n);
    const auto n = static_cast<Eigen::Index>(spec.n);
    Eigen::MatrixXd R(n, n);
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index k = 0; k < n; ++k) R(j, k) = r[static_cast<std::size_t>(std::abs(j - k))];
    return R;
}

/// Law of a centered second-chaos element sum_i lambda_i (Z_i^2 - 1).
struct SecondChaosSpectrum {
    std::vector<double> lambdas;  // ascending
    std::optional<FgnSpec> source;
    double vn = std::numeric_limits<double>::quiet_NaN();

    static SecondChaosSpectrum from_lambdas(std::vector<double> l) {
        std::sort(l.begin(), l.end());
        SecondChaosSpectrum s;
        s.lambdas = std::move(l);
        return s;
    }

    std::size_t size() const { return lambdas.size(); }

    /// E[F^2] = 2 sum lambda_i^2.
    double variance() const {
        double s = 0.0;
        for (double l : lambdas) s += l * l;
        return 2.0 * s;
    }

    bool all_nonnegative() const { return lambdas.empty() || lambdas.front() >= 0.0; }

    std::size_t positive_count() const {
        return static_cast<std::size_t>(
            std::count_if(lambdas.begin(), lambdas.end(), [](double l) { return l > 0.0; }));
    }
};

namespace detail {

inline std::vector<double> symmetric_eigenvalues(const Eigen::MatrixXd& m) {
    if (m.rows() == 0) return {};
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw EigenFailure("symmetric eigensolver did not converge");
    const auto& ev = es.eigenvalues();
    return {ev.data(), ev.data() + ev.size()};
}

}  // namespace detail

/// Eigenvalues of the symmetric Toeplitz matrix T[i][j] = r[|i - j|].
///
/// Symmetric Toeplitz matrices are centrosymmetric, so the orthogonal change of
/// basis (x + Jx, x - Jx) block-diagonalizes T into
///   S[i][j] = r[|i-j|] + r[n-1-i-j]   and   K[i][j] = r[|i-j|] - r[n-1-i-j]
/// (with an extra bordered row/column in S when n is odd). Each half is solved
/// with a dense symmetric eigensolver.
inline std::vector<double> toeplitz_eigenvalues(const std::vector<double>& r) {
    const std::size_t n = r.size();
    if (n < 4) {
        const auto nn = static_cast<Eigen::Index>(n);
        Eigen::MatrixXd T(nn, nn);
        for (Eigen::Index i = 0; i < nn; ++i)
            for (Eigen::Index j = 0; j < nn; ++j) T(i, j) = r[static_cast<std::size_t>(std::abs(i - j))];
        auto ev = detail::symmetric_eigenvalues(T);
        std::sort(ev.begin(), ev.end());
        return ev;
    }
    const std::size_t m = n / 2;
    const bool odd = n % 2 == 1;
    const auto ms = static_cast<Eigen::Index>(m);
    Eigen::MatrixXd S(ms + (odd ? 1 : 0), ms + (odd ? 1 : 0));
    Eigen::MatrixXd K(ms, ms);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            const double a = r[i > j ? i - j : j - i];
            const double b = r[n - 1 - i - j];
            S(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = a + b;
            K(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = a - b;
        }
    }
    if (odd) {
        for (std::size_t i = 0; i < m; ++i) {
            const double x = std::sqrt(2.0) * r[m - i];
            S(static_cast<Eigen::Index>(i), ms) = x;
            S(ms, static_cast<Eigen::Index>(i)) = x;
        }
        S(ms, ms) = r[0];
    }
    auto ev = detail::symmetric_eigenvalues(S);
    const auto ek = detail::symmetric_eigenvalues(K);
    ev.insert(ev.end(), ek.begin(), ek.end());
    std::sort(ev.begin(), ev.end());
    return ev;
}

/// Exact law of F_n = (n v_n)^{-1/2} sum_{k<n} (xi_k^2 - 1) as
/// sum_i lambda_i (Z_i^2 - 1), lambda_i = eig(R)_i / sqrt(n v_n).
inline SecondChaosSpectrum spectrum(const FgnSpec& spec) {
    const auto r = covariance_sequence(spec.hurst, spec.n);
    const bool diagonal = std::all_of(r.begin() + 1, r.end(), [](double x) { return x == 0.0; });
    std::vector<double> mu = diagonal ? std::vector<double>(spec.n, 1.0) : toeplitz_eigenvalues(r);

    const double top = std::max(std::abs(mu.front()), std::abs(mu.back()));
    for (double& x : mu) {
        if (x < 0.0) {
            if (x < -1e-9 * top)
                throw EigenFailure("Gram matrix has a negative eigenvalue " + std::to_string(x));
            if (x >= -1e-12 * top) x = 0.0;
        }
    }
    const double v = vn_from_covariance(r);
    const double scale = 1.0 / std::sqrt(static_cast<double>(spec.n) * v);
    SecondChaosSpectrum s;
    s.lambdas.reserve(mu.size());
    for (double x : mu) s.lambdas.push_back(x * scale);
    std::sort(s.lambdas.begin(), s.lambdas.end());
    s.source = spec;
    s.vn = v;
    return s;
}

}  // namespace chaoslab
