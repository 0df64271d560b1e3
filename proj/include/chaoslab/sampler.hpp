#pragma once

// Exact fGn path sampling (circulant embedding) and Monte Carlo estimators
// for the quantities without closed form: negative moments of ||DF_n||, the
// Stein bound, and the Carbery-Wright anti-concentration constant.

#include "chaoslab/errors.hpp"
#include "chaoslab/fft.hpp"
#include "chaoslab/fgn_model.hpp"

#include <Eigen/Dense>
#include <boost/random/chi_squared_distribution.hpp>
#include <boost/random/normal_distribution.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace chaoslab {

struct McConfig {
    std::size_t samples = 1'000'000;
    std::uint64_t seed = 20140917;
    std::size_t batch = 4096;
    /// Worker threads; results do not depend on this.
    std::size_t threads = 1;

    void validate() const {
        if (samples < 1000) throw InvalidArgument("McConfig: samples must be >= 1000");
        if (batch < 1) throw InvalidArgument("McConfig: batch must be >= 1");
        if (threads < 1) throw InvalidArgument("McConfig: threads must be >= 1");
    }
    std::size_t batches() const { return (samples + batch - 1) / batch; }
    std::size_t batch_size(std::size_t b) const { return std::min(batch, samples - b * batch); }
};

struct McEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t samples_used = 0;
    /// Set when the largest 0.1% of samples carry more than half the total.
    bool tail_flag = false;
};

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Independent generator for batch b of a run seeded with seed.
inline Rng substream(std::uint64_t seed, std::uint64_t b) {
    const std::uint64_t h = splitmix64(splitmix64(seed) ^ splitmix64(b + 0x632be59bd9b4e019ULL));
    std::seed_seq seq{static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32),
                      static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(seed)};
    return Rng(seq);
}

/// Runs fn(batch_index, batch_size, rng) for every batch and returns the
/// results in batch order, independent of how batches map to threads.
template <class Fn>
auto map_batches(const McConfig& cfg, Fn&& fn) {
    cfg.validate();
    using Result = decltype(fn(std::size_t{}, std::size_t{}, std::declval<Rng&>()));
    const std::size_t nb = cfg.batches();
    std::vector<Result> out(nb);
    auto work = [&](std::size_t worker) {
        for (std::size_t b = worker; b < nb; b += cfg.threads) {
            Rng rng = substream(cfg.seed, b);
            out[b] = fn(b, cfg.batch_size(b), rng);
        }
    };
    if (cfg.threads == 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < cfg.threads; ++w) pool.emplace_back(work, w);
        for (auto& t : pool) t.join();
    }
    return out;
}

/// Draws N(0, R) fGn paths. Circulant embedding of size 2(n - 1) yields two
/// independent paths per complex FFT; dense Cholesky is the fallback when an
/// embedding eigenvalue is below -1e-9 max.
///
/// Holds FFT scratch buffers: use one instance per thread.
class FgnSampler {
public:
    enum class Method { automatic, cholesky };

    explicit FgnSampler(const FgnSpec& spec, Method method = Method::automatic)
        : spec_(spec), rho_(covariance_sequence(spec.hurst, spec.n)) {
        const std::size_t n = spec.n;
        if (n >= 2 && method == Method::automatic) {
            m_ = 2 * (n - 1);
            std::vector<std::complex<double>> c(m_);
            for (std::size_t k = 0; k < n; ++k) c[k] = rho_[k];
            for (std::size_t k = n; k < m_; ++k) c[k] = rho_[m_ - k];
            plan_ = std::make_unique<FftPlan>(m_, FftDirection::forward);
            plan_->execute(c);
            eig_.resize(m_);
            double top = 0.0;
            for (std::size_t k = 0; k < m_; ++k) {
                eig_[k] = c[k].real();
                top = std::max(top, std::abs(eig_[k]));
            }
            const double lo = *std::min_element(eig_.begin(), eig_.end());
            if (lo >= -1e-9 * top) {
                circulant_ = true;
                scale_.resize(m_);
                for (std::size_t k = 0; k < m_; ++k)
                    scale_[k] = std::sqrt(std::max(eig_[k], 0.0) / static_cast<double>(m_));
                buf_.resize(m_);
            }
        }
        if (!circulant_) build_cholesky();
        if (n >= 2) build_quadratic_embedding();
    }

    FgnSampler(const FgnSampler&) = delete;
    FgnSampler& operator=(const FgnSampler&) = delete;

    std::size_t n() const { return spec_.n; }
    bool uses_circulant() const { return circulant_; }
    const std::vector<double>& covariance() const { return rho_; }

    /// Two independent paths of length n.
    void draw_pair(Rng& rng, std::span<double> a, std::span<double> b) {
        const std::size_t n = spec_.n;
        if (circulant_) {
            for (std::size_t k = 0; k < m_; ++k) {
                const double re = normal_(rng);
                const double im = normal_(rng);
                buf_[k] = {scale_[k] * re, scale_[k] * im};
            }
            plan_->execute(buf_);
            for (std::size_t k = 0; k < n; ++k) {
                a[k] = buf_[k].real();
                b[k] = buf_[k].imag();
            }
            return;
        }
        Eigen::VectorXd z(static_cast<Eigen::Index>(n));
        for (auto out : {a, b}) {
            for (Eigen::Index k = 0; k < z.size(); ++k) z(k) = normal_(rng);
            const Eigen::VectorXd x = chol_ * z;
            for (std::size_t k = 0; k < n; ++k) out[k] = x(static_cast<Eigen::Index>(k));
        }
    }

    /// xi^T R xi for two paths through any circulant C of size 2n whose first
    /// n lags agree with R: [xi; 0]^T C [xi; 0] = (1/2n) sum_k c_k |DFT([xi; 0])_k|^2.
    /// The size 2n extension keeps the transform length a power of two for
    /// dyadic n; C need not be positive for this identity.
    std::pair<double, double> quadratic_forms(std::span<const double> a, std::span<const double> b) {
        const std::size_t n = spec_.n;
        if (n == 1) return {a[0] * a[0], b[0] * b[0]};
        const std::size_t m = qeig_.size();
        for (std::size_t k = 0; k < m; ++k) qbuf_[k] = k < n ? std::complex<double>(a[k], b[k]) : 0.0;
        qplan_->execute(qbuf_);
        double qa = 0.0, qb = 0.0;
        for (std::size_t k = 0; k < m; ++k) {
            const std::complex<double> zk = qbuf_[k];
            const std::complex<double> zm = std::conj(qbuf_[(m - k) % m]);
            const std::complex<double> A = 0.5 * (zk + zm);
            const std::complex<double> B = std::complex<double>(0.0, -0.5) * (zk - zm);
            qa += qeig_[k] * std::norm(A);
            qb += qeig_[k] * std::norm(B);
        }
        return {qa / static_cast<double>(m), qb / static_cast<double>(m)};
    }

private:
    void build_cholesky() {
        Eigen::MatrixXd R = gram_matrix(spec_);
        Eigen::LLT<Eigen::MatrixXd> llt(R);
        if (llt.info() != Eigen::Success) {
            R.diagonal().array() += 1e-12;
            llt.compute(R);
            if (llt.info() != Eigen::Success)
                throw EmbeddingFailure("circulant embedding and Cholesky both failed for n = " +
                                       std::to_string(spec_.n));
        }
        chol_ = llt.matrixL();
    }

    void build_quadratic_embedding() {
        const std::size_t n = spec_.n;
        const std::size_t m = 2 * n;
        std::vector<std::complex<double>> c(m);
        for (std::size_t k = 0; k < n; ++k) c[k] = rho_[k];
        c[n] = rho(spec_.hurst, n);
        for (std::size_t k = n + 1; k < m; ++k) c[k] = rho_[m - k];
        qplan_ = std::make_unique<FftPlan>(m, FftDirection::forward);
        qplan_->execute(c);
        qeig_.resize(m);
        for (std::size_t k = 0; k < m; ++k) qeig_[k] = c[k].real();
        qbuf_.resize(m);
    }

    FgnSpec spec_;
    std::vector<double> rho_;
    std::size_t m_ = 0;
    bool circulant_ = false;
    std::vector<double> eig_;
    std::vector<double> scale_;
    std::unique_ptr<FftPlan> plan_;
    std::vector<std::complex<double>> buf_;
    std::vector<double> qeig_;
    std::unique_ptr<FftPlan> qplan_;
    std::vector<std::complex<double>> qbuf_;
    Eigen::MatrixXd chol_;
    boost::random::normal_distribution<double> normal_;
};

/// Visits every sampled path batch by batch: visit(batch, path) is called
/// sequentially within a batch; fn_batch wraps per-batch state.
template <class BatchFn>
auto for_each_path_batch(const FgnSpec& spec, const McConfig& cfg, BatchFn&& batch_fn) {
    return map_batches(cfg, [&](std::size_t b, std::size_t count, Rng& rng) {
        FgnSampler sampler(spec);
        std::vector<double> a(spec.n), c(spec.n);
        return batch_fn(b, count, [&](auto&& visit) {
            for (std::size_t i = 0; i < count; i += 2) {
                sampler.draw_pair(rng, a, c);
                visit(sampler, std::span<const double>(a));
                if (i + 1 < count) visit(sampler, std::span<const double>(c));
            }
        });
    });
}

/// Sampled fGn increment vectors, one matrix (paths x n) per batch.
inline std::vector<Eigen::MatrixXd> sample_fgn(const FgnSpec& spec, const McConfig& cfg) {
    return for_each_path_batch(spec, cfg, [&](std::size_t, std::size_t count, auto&& run) {
        Eigen::MatrixXd m(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(spec.n));
        Eigen::Index row = 0;
        run([&](FgnSampler&, std::span<const double> x) {
            for (std::size_t k = 0; k < x.size(); ++k) m(row, static_cast<Eigen::Index>(k)) = x[k];
            ++row;
        });
        return m;
    });
}

/// Per-path values of F_n and ||DF_n||^2 = 4/(n v_n) xi^T R xi.
struct PathFunctionals {
    std::vector<double> F;
    std::vector<double> df_norm_sq;
};

inline PathFunctionals sample_functionals(const FgnSpec& spec, const McConfig& cfg, bool with_derivative = true) {
    const double norm = 1.0 / std::sqrt(static_cast<double>(spec.n) * vn(spec));
    const double dnorm = 4.0 * norm * norm;
    auto parts = map_batches(cfg, [&](std::size_t, std::size_t count, Rng& rng) {
        FgnSampler sampler(spec);
        std::vector<double> a(spec.n), b(spec.n);
        PathFunctionals out;
        out.F.reserve(count);
        if (with_derivative) out.df_norm_sq.reserve(count);
        auto fval = [&](std::span<const double> x) {
            double s = 0.0;
            for (double v : x) s += v * v - 1.0;
            return norm * s;
        };
        for (std::size_t i = 0; i < count; i += 2) {
            sampler.draw_pair(rng, a, b);
            const bool second = i + 1 < count;
            out.F.push_back(fval(a));
            if (second) out.F.push_back(fval(b));
            if (with_derivative) {
                const auto [qa, qb] = sampler.quadratic_forms(a, b);
                out.df_norm_sq.push_back(dnorm * qa);
                if (second) out.df_norm_sq.push_back(dnorm * qb);
            }
        }
        return out;
    });
    PathFunctionals all;
    all.F.reserve(cfg.samples);
    for (auto& p : parts) {
        all.F.insert(all.F.end(), p.F.begin(), p.F.end());
        all.df_norm_sq.insert(all.df_norm_sq.end(), p.df_norm_sq.begin(), p.df_norm_sq.end());
    }
    return all;
}

/// Realizations of F_n = (n v_n)^{-1/2} sum (xi_k^2 - 1).
inline std::vector<double> sample_Fn(const FgnSpec& spec, const McConfig& cfg) {
    return sample_functionals(spec, cfg, false).F;
}

/// Realizations of ||DF_n||^2.
inline std::vector<double> sample_DF_norm_sq(const FgnSpec& spec, const McConfig& cfg) {
    return sample_functionals(spec, cfg, true).df_norm_sq;
}

/// Realizations of sum_i lambda_i (Z_i^2 - 1) drawn from the spectrum directly
/// (n normals per sample instead of a path and a transform). A run of m equal
/// eigenvalues is drawn as one chi-square(m) variate.
inline std::vector<double> sample_spectral(const SecondChaosSpectrum& s, const McConfig& cfg) {
    std::vector<std::pair<double, std::size_t>> groups;
    for (double l : s.lambdas) {
        if (!groups.empty() && groups.back().first == l)
            ++groups.back().second;
        else
            groups.emplace_back(l, 1);
    }
    auto parts = map_batches(cfg, [&](std::size_t, std::size_t count, Rng& rng) {
        boost::random::normal_distribution<double> normal;
        std::vector<boost::random::chi_squared_distribution<double>> chi;
        for (const auto& [l, m] : groups) chi.emplace_back(static_cast<double>(m));
        std::vector<double> out(count);
        for (auto& v : out) {
            double acc = 0.0;
            for (std::size_t g = 0; g < groups.size(); ++g) {
                const auto [l, m] = groups[g];
                if (m == 1) {
                    const double z = normal(rng);
                    acc += l * (z * z - 1.0);
                } else {
                    acc += l * (chi[g](rng) - static_cast<double>(m));
                }
            }
            v = acc;
        }
        return out;
    });
    std::vector<double> all;
    all.reserve(cfg.samples);
    for (auto& p : parts) all.insert(all.end(), p.begin(), p.end());
    return all;
}

/// Sample mean and standard error. Batches of `batch` consecutive values are
/// reduced with Welford's update and merged in order (Chan et al.).
inline McEstimate estimate_mean(std::span<const double> values, std::size_t batch = 4096) {
    McEstimate e;
    if (values.empty()) return e;
    double count = 0.0, mean = 0.0, m2 = 0.0;
    for (std::size_t start = 0; start < values.size(); start += batch) {
        const std::size_t end = std::min(values.size(), start + batch);
        double bc = 0.0, bm = 0.0, bm2 = 0.0;
        for (std::size_t i = start; i < end; ++i) {
            bc += 1.0;
            const double d = values[i] - bm;
            bm += d / bc;
            bm2 += d * (values[i] - bm);
        }
        const double tot = count + bc;
        const double delta = bm - mean;
        mean += delta * bc / tot;
        m2 += bm2 + delta * delta * count * bc / tot;
        count = tot;
    }
    e.mean = mean;
    e.samples_used = values.size();
    e.std_error = count > 1.0 ? std::sqrt(m2 / (count - 1.0) / count) : 0.0;

    const std::size_t k = std::max<std::size_t>(1, values.size() / 1000);
    std::vector<double> mags(values.size());
    std::transform(values.begin(), values.end(), mags.begin(), [](double v) { return std::abs(v); });
    double total = 0.0;
    for (double v : mags) total += v;
    std::nth_element(mags.begin(), mags.begin() + static_cast<std::ptrdiff_t>(k - 1), mags.end(),
                     std::greater<>());
    double top = 0.0;
    for (std::size_t i = 0; i < k; ++i) top += mags[i];
    e.tail_flag = total > 0.0 && top > 0.5 * total;
    return e;
}

/// E[||DF_n||^{-p}] by plain Monte Carlo.
inline McEstimate neg_moment(const FgnSpec& spec, double p, const McConfig& cfg) {
    if (p < 0.0 || p > 8.0) throw InvalidArgument("neg_moment: power must lie in [0, 8]");
    if (p == 0.0) return {1.0, 0.0, cfg.samples, false};
    auto d = sample_DF_norm_sq(spec, cfg);
    for (double& v : d) v = std::pow(v, -0.5 * p);
    return estimate_mean(d, cfg.batch);
}

/// Negative moments for several powers from one set of paths.
inline std::vector<McEstimate> neg_moments(std::span<const double> df_norm_sq, std::span<const double> powers,
                                           std::size_t batch = 4096) {
    std::vector<McEstimate> out;
    std::vector<double> v(df_norm_sq.size());
    for (double p : powers) {
        if (p < 0.0 || p > 8.0) throw InvalidArgument("neg_moment: power must lie in [0, 8]");
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::pow(df_norm_sq[i], -0.5 * p);
        out.push_back(estimate_mean(v, batch));
    }
    return out;
}

struct SteinEstimate {
    McEstimate bound;      // 2 E|1 - ||DF||^2 / 2|
    McEstimate sigma_sq;   // E[(1 - ||DF||^2 / 2)^2]
};

inline SteinEstimate stein_from_samples(std::span<const double> df_norm_sq, std::size_t batch = 4096) {
    std::vector<double> a(df_norm_sq.size()), b(df_norm_sq.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double s = 1.0 - 0.5 * df_norm_sq[i];
        a[i] = 2.0 * std::abs(s);
        b[i] = s * s;
    }
    return {estimate_mean(a, batch), estimate_mean(b, batch)};
}

/// Stein-method bound 2 E|1 - (1/2)||DF_n||^2| on d_TV(F_n, N).
inline SteinEstimate stein_bound(const FgnSpec& spec, const McConfig& cfg) {
    return stein_from_samples(sample_DF_norm_sq(spec, cfg), cfg.batch);
}

struct CarberyWrightResult {
    double c_hat = 0.0;
    double std_error = 0.0;
    double argmax_x = 0.0;
    std::vector<double> ratios;  // per x in the grid
};

/// c_hat = max_x P(|Q| <= x) E|Q|^{1/2} / (2 x^{1/2}) over the x grid
/// (degree-2 anti-concentration ratio). The standard error is the
/// delta-method error of the ratio at the argmax.
inline CarberyWrightResult carbery_wright(std::span<const double> q, std::span<const double> x_grid) {
    if (q.empty() || x_grid.empty()) throw InvalidArgument("carbery_wright: empty input");
    std::vector<double> mags(q.size());
    std::transform(q.begin(), q.end(), mags.begin(), [](double v) { return std::abs(v); });
    const auto mabs = estimate_mean(mags);
    std::sort(mags.begin(), mags.end());
    const double N = static_cast<double>(mags.size());
    const double sd_abs = mabs.std_error * std::sqrt(N);

    CarberyWrightResult r;
    r.c_hat = -1.0;
    for (double x : x_grid) {
        if (!(x > 0.0)) throw InvalidArgument("carbery_wright: x must be positive");
        const double P = static_cast<double>(std::upper_bound(mags.begin(), mags.end(), x) - mags.begin()) / N;
        const double ratio = P * std::sqrt(mabs.mean) / (2.0 * std::sqrt(x));
        r.ratios.push_back(ratio);
        if (ratio > r.c_hat) {
            r.c_hat = ratio;
            r.argmax_x = x;
            const double dP = std::sqrt(mabs.mean) / (2.0 * std::sqrt(x));
            const double dE = mabs.mean > 0.0 ? P / (4.0 * std::sqrt(x * mabs.mean)) : 0.0;
            r.std_error = std::sqrt(dP * dP * P * (1.0 - P) / N + dE * dE * sd_abs * sd_abs / N);
        }
    }
    return r;
}

/// Kolmogorov-Smirnov distance between a sample and a continuous CDF.
template <class Cdf>
double ks_distance(std::vector<double> sample, Cdf&& cdf) {
    std::sort(sample.begin(), sample.end());
    const double N = static_cast<double>(sample.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        const double F = cdf(sample[i]);
        d = std::max({d, F - static_cast<double>(i) / N, static_cast<double>(i + 1) / N - F});
    }
    return d;
}

/// Asymptotic 95% KS critical value 1.358 / sqrt(N).
inline double ks_critical_95(std::size_t n) { return 1.358 / std::sqrt(static_cast<double>(n)); }

struct TrendTest {
    double slope = 0.0;
    double std_error = 0.0;
    double z = 0.0;
    /// One-sided test of slope > 0 at 95%.
    bool upward = false;
};

/// Weighted least-squares slope of estimates against log2 n.
inline TrendTest upward_trend_test(std::span<const double> ns, std::span<const McEstimate> est) {
    if (ns.size() != est.size() || ns.size() < 3) throw InsufficientData("trend test needs >= 3 points");
    double sw = 0.0, sx = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < ns.size(); ++i) {
        const double w = 1.0 / std::max(est[i].std_error * est[i].std_error, 1e-300);
        sw += w;
        sx += w * std::log2(ns[i]);
        sy += w * est[i].mean;
    }
    const double xb = sx / sw, yb = sy / sw;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < ns.size(); ++i) {
        const double w = 1.0 / std::max(est[i].std_error * est[i].std_error, 1e-300);
        const double dx = std::log2(ns[i]) - xb;
        sxx += w * dx * dx;
        sxy += w * dx * (est[i].mean - yb);
    }
    TrendTest t;
    t.slope = sxy / sxx;
    t.std_error = std::sqrt(1.0 / sxx);
    t.z = t.slope / t.std_error;
    t.upward = t.z > 1.645;
    return t;
}

/// Pathwise <DF_n, DF_m> for the first n and first m increments of one path:
/// 4 / sqrt(n v_n m v_m) sum_{j<n, k<m} xi_j xi_k rho(j - k).
inline double path_derivative_inner_product(std::span<const double> xi, std::size_t n, std::size_t m,
                                       const std::vector<double>& rho, double vn_n, double vn_m) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = 0; k < m; ++k) s += xi[j] * xi[k] * rho[j > k ? j - k : k - j];
    return 4.0 * s / std::sqrt(static_cast<double>(n) * vn_n * static_cast<double>(m) * vn_m);
}

struct IppEstimate {
    McEstimate lhs;   // E[F_n delta(DF_m)] = 2 E[F_n F_m]
    McEstimate rhs;   // E[<DF_n, DF_m>]
    McEstimate diff;  // paired difference
};

/// Integration by parts E[F_n delta(D F_m)] = E[<DF_n, DF_m>] with
/// delta(D F_m) = 2 F_m, on shared paths (m <= n).
inline IppEstimate integration_by_parts(const FgnSpec& spec, std::size_t m, const McConfig& cfg) {
    if (m < 1 || m > spec.n) throw InvalidArgument("integration_by_parts: need 1 <= m <= n");
    const FgnSpec sm(spec.hurst, m);
    const double vn_n = vn(spec), vn_m = vn(sm);
    const auto rho_seq = covariance_sequence(spec.hurst, spec.n);
    auto parts = for_each_path_batch(spec, cfg, [&](std::size_t, std::size_t count, auto&& run) {
        std::array<std::vector<double>, 2> out;
        out[0].reserve(count);
        out[1].reserve(count);
        run([&](FgnSampler&, std::span<const double> x) {
            double fn = 0.0, fm = 0.0;
            for (std::size_t k = 0; k < spec.n; ++k) {
                fn += x[k] * x[k] - 1.0;
                if (k < m) fm += x[k] * x[k] - 1.0;
            }
            fn /= std::sqrt(static_cast<double>(spec.n) * vn_n);
            fm /= std::sqrt(static_cast<double>(m) * vn_m);
            out[0].push_back(2.0 * fn * fm);
            out[1].push_back(path_derivative_inner_product(x, spec.n, m, rho_seq, vn_n, vn_m));
        });
        return out;
    });
    std::vector<double> l, r, d;
    for (auto& p : parts) {
        l.insert(l.end(), p[0].begin(), p[0].end());
        r.insert(r.end(), p[1].begin(), p[1].end());
    }
    d.resize(l.size());
    for (std::size_t i = 0; i < l.size(); ++i) d[i] = l[i] - r[i];
    return {estimate_mean(l, cfg.batch), estimate_mean(r, cfg.batch), estimate_mean(d, cfg.batch)};
}

}  // namespace chaoslab
