#pragma once

// Experiment harness: rate tables over an (h, n) matrix, slope fits, and the
// verification suites behind the command-line tool.

#include "chaoslab/chaos_algebra.hpp"
#include "chaoslab/errors.hpp"
#include "chaoslab/fgn_model.hpp"
#include "chaoslab/io.hpp"
#include "chaoslab/metrics.hpp"
#include "chaoslab/sampler.hpp"
#include "chaoslab/second_chaos.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace chaoslab {

struct ExperimentMatrix {
    std::vector<double> hurst;
    std::vector<std::size_t> ns;

    /// n = n_min, 2 n_min, ..., up to n_max.
    static std::vector<std::size_t> geometric(std::size_t n_min, std::size_t n_max) {
        if (n_min < 1 || n_max < n_min) throw InvalidArgument("n range must satisfy 1 <= n_min <= n_max");
        std::vector<std::size_t> out;
        for (std::size_t n = n_min; n <= n_max; n *= 2) out.push_back(n);
        return out;
    }

    static ExperimentMatrix default_matrix() { return {{0.3, 0.5, 0.55, 0.625, 0.7}, geometric(64, 4096)}; }

    static ExperimentMatrix from_json(const Json& j) {
        ExperimentMatrix m;
        m.hurst = j.at("hurst").get<std::vector<double>>();
        if (j.contains("n")) {
            m.ns = j["n"].get<std::vector<std::size_t>>();
        } else {
            m.ns = geometric(j.at("n_min").get<std::size_t>(), j.at("n_max").get<std::size_t>());
        }
        for (double h : m.hurst) HurstIndex{h};
        if (m.hurst.empty() || m.ns.empty()) throw InvalidArgument("experiment matrix is empty");
        return m;
    }
};

/// Memoized spectra keyed by (h, n); eigen-decomposition dominates the cost of
/// every exact quantity.
class SpectrumCache {
public:
    const SecondChaosSpectrum& get(const FgnSpec& spec) {
        const auto key = std::make_pair(spec.h(), spec.n);
        {
            std::lock_guard lock(mutex_);
            if (auto it = cache_.find(key); it != cache_.end()) return it->second;
        }
        auto s = spectrum(spec);
        std::lock_guard lock(mutex_);
        return cache_.emplace(key, std::move(s)).first->second;
    }

private:
    std::mutex mutex_;
    std::map<std::pair<double, std::size_t>, SecondChaosSpectrum> cache_;
};

/// Seed of the Monte Carlo run attached to one matrix point, so a point's
/// estimate does not depend on which other points are in the run.
inline std::uint64_t point_seed(std::uint64_t seed, const FgnSpec& spec) {
    return splitmix64(seed ^ splitmix64(std::bit_cast<std::uint64_t>(spec.h())) ^ splitmix64(spec.n * 0x9e37ULL));
}

struct RateRow {
    double h = 0.0;
    std::size_t n = 0;
    double kappa3 = std::nan("");
    double kappa4 = std::nan("");
    double tv = std::nan("");
    double sup = std::nan("");
    double entropy = std::nan("");
    FisherExcess fisher = FisherExcess::divergent();
    std::optional<McEstimate> stein;
    double error_budget = std::nan("");
    /// Numerical failures recorded instead of aborting the table.
    std::vector<std::string> notes;
};

struct RateTable {
    std::vector<RateRow> rows;

    void sort() {
        std::stable_sort(rows.begin(), rows.end(),
                         [](const RateRow& a, const RateRow& b) { return std::tie(a.h, a.n) < std::tie(b.h, b.n); });
    }

    /// (n, value) pairs of a column at one h; non-finite values are kept as nan.
    std::vector<std::pair<double, double>> column(const std::string& name, double h) const {
        std::vector<std::pair<double, double>> out;
        for (const auto& r : rows) {
            if (r.h != h) continue;
            double v;
            if (name == "kappa3") v = r.kappa3;
            else if (name == "kappa4") v = r.kappa4;
            else if (name == "tv") v = r.tv;
            else if (name == "sup") v = r.sup;
            else if (name == "entropy") v = r.entropy;
            else if (name == "fisher_excess") v = r.fisher.value_or(std::nan(""));
            else if (name == "stein_bound") v = r.stein ? r.stein->mean : std::nan("");
            else throw InvalidArgument("unknown column " + name);
            out.emplace_back(static_cast<double>(r.n), v);
        }
        return out;
    }
};

inline RateRow rate_row(const SecondChaosSpectrum& s, const std::optional<McConfig>& mc, const GridOptions& grid = {}) {
    RateRow row;
    if (s.source) {
        row.h = s.source->h();
        row.n = s.source->n;
    }
    const auto k = cumulants(s, 4);
    row.kappa3 = k[3];
    row.kappa4 = k[4];
    try {
        const auto rep = distance_report(s, grid);
        row.tv = rep.tv;
        row.sup = rep.sup;
        row.entropy = rep.entropy;
        row.fisher = rep.fisher;
        row.error_budget = rep.error_budget;
    } catch (const GridTooCoarse& e) {
        row.notes.push_back(std::string("GridTooCoarse: ") + e.what());
    }
    if (mc && s.source) {
        McConfig cfg = *mc;
        cfg.seed = point_seed(mc->seed, *s.source);
        row.stein = stein_bound(*s.source, cfg).bound;
        if (row.stein->tail_flag) row.notes.push_back("warning: Stein estimate dominated by <0.1% of samples");
    }
    return row;
}

/// One row per matrix point, computed on `threads` workers and returned in
/// (h, n) order.
inline RateTable rate_table(const ExperimentMatrix& m, const std::optional<McConfig>& mc, SpectrumCache& cache,
                            const GridOptions& grid = {}, std::size_t threads = 1) {
    std::vector<FgnSpec> points;
    for (double h : m.hurst)
        for (std::size_t n : m.ns) points.push_back(FgnSpec::of(h, n));
    RateTable t;
    t.rows.resize(points.size());
    auto work = [&](std::size_t w) {
        for (std::size_t i = w; i < points.size(); i += threads) {
            try {
                t.rows[i] = rate_row(cache.get(points[i]), mc, grid);
            } catch (const Error& e) {
                t.rows[i].h = points[i].h();
                t.rows[i].n = points[i].n;
                t.rows[i].notes.push_back(e.what());
            }
        }
    };
    if (threads <= 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < threads; ++w) pool.emplace_back(work, w);
        for (auto& th : pool) th.join();
    }
    t.sort();
    return t;
}

inline Json to_json(const RateRow& r) {
    Json j{{"h", r.h},
           {"n", r.n},
           {"kappa3", json_number(r.kappa3)},
           {"kappa4", json_number(r.kappa4)},
           {"tv", json_number(r.tv)},
           {"sup", json_number(r.sup)},
           {"entropy", json_number(r.entropy)},
           {"fisher_excess", fisher_json(r.fisher)}};
    j["stein_bound"] = r.stein ? to_json(*r.stein) : Json(nullptr);
    j["error_budget"] = json_number(r.error_budget);
    j["notes"] = r.notes;
    return j;
}

inline Json to_json(const RateTable& t) {
    Json rows = Json::array();
    for (const auto& r : t.rows) rows.push_back(to_json(r));
    return {{"schema", kSchema}, {"rows", rows}};
}

inline std::string rate_table_csv(const RateTable& t) {
    std::string s = "h,n,kappa3,kappa4,tv,sup,entropy,fisher_excess,stein_bound,stein_se,error_budget,notes\n";
    for (const auto& r : t.rows) {
        s += format_number(r.h) + ',' + std::to_string(r.n);
        for (double v : {r.kappa3, r.kappa4, r.tv, r.sup, r.entropy}) s += ',' + format_number(v);
        s += ',' + (r.fisher.is_finite() ? format_number(r.fisher.value()) : std::string("divergent"));
        s += ',' + (r.stein ? format_number(r.stein->mean) : std::string());
        s += ',' + (r.stein ? format_number(r.stein->std_error) : std::string());
        s += ',' + format_number(r.error_budget);
        std::string notes;
        for (const auto& n : r.notes) notes += (notes.empty() ? "" : "; ") + n;
        std::replace(notes.begin(), notes.end(), '"', '\'');
        s += ",\"" + notes + "\"\n";
    }
    return s;
}

struct SlopeFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    std::pair<double, double> n_range{0.0, 0.0};
};

/// Ordinary least squares of log y on log n.
inline SlopeFit fit_slope(std::span<const double> ns, std::span<const double> ys) {
    if (ns.size() != ys.size()) throw DimensionMismatch("fit_slope: length mismatch");
    std::vector<double> x, y;
    std::pair<double, double> range{INFINITY, 0.0};
    for (std::size_t i = 0; i < ns.size(); ++i) {
        if (std::isfinite(ys[i]) && ys[i] > 0.0 && ns[i] > 0.0) {
            range = {std::min(range.first, ns[i]), std::max(range.second, ns[i])};
            x.push_back(std::log(ns[i]));
            y.push_back(std::log(ys[i]));
        }
    }
    if (x.size() < 5) throw InsufficientData("fit_slope needs >= 5 finite positive values, got " + std::to_string(x.size()));
    const double k = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= k;
    my /= k;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0) throw InsufficientData("fit_slope: all n are equal");
    SlopeFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    f.r_squared = syy == 0.0 ? 1.0 : std::clamp(sxy * sxy / (sxx * syy), 0.0, 1.0);
    f.n_range = range;
    return f;
}

inline SlopeFit fit_slope(const RateTable& t, const std::string& column, double h) {
    std::vector<double> ns, ys;
    for (const auto& [n, v] : t.column(column, h)) {
        ns.push_back(n);
        ys.push_back(v);
    }
    return fit_slope(ns, ys);
}

inline Json to_json(const SlopeFit& f) {
    return {{"slope", f.slope},
            {"intercept", f.intercept},
            {"r_squared", f.r_squared},
            {"n_range", {f.n_range.first, f.n_range.second}}};
}

/// F_n as the chaos expansion I_2(A) on the Gaussian basis Z with xi = L Z,
/// R = L L^T, A = L^T L / sqrt(n v_n).
inline ChaosExpansion fn_chaos_expansion(const FgnSpec& spec) {
    const Eigen::MatrixXd R = gram_matrix(spec);
    const Eigen::LLT<Eigen::MatrixXd> llt(R);
    if (llt.info() != Eigen::Success) throw EigenFailure("Gram matrix is not positive definite");
    const Eigen::MatrixXd L = llt.matrixL();
    const Eigen::MatrixXd A = (L.transpose() * L) / std::sqrt(static_cast<double>(spec.n) * vn(spec));
    return ChaosExpansion::integral(SymmetricTensor::from_matrix(A));
}

// ---------------------------------------------------------------------------
// Verification suites

struct Check {
    std::string name;
    bool passed = false;
    /// Reported but excluded from the suite verdict.
    bool informational = false;
    Json details = Json::object();
};

struct SuiteReport {
    std::string suite;
    std::vector<Check> checks;

    bool passed() const {
        return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.informational || c.passed; });
    }

    Json to_json() const {
        Json cs = Json::array();
        for (const auto& c : checks)
            cs.push_back({{"name", c.name}, {"passed", c.passed}, {"informational", c.informational}, {"details", c.details}});
        return {{"schema", kSchema}, {"suite", suite}, {"passed", passed()}, {"checks", cs}};
    }
};

inline std::string point_name(double h, std::size_t n) { return "h=" + format_number(h) + ",n=" + std::to_string(n); }

/// Pinsker, entropy vs Fisher and sup vs Fisher on every matrix point.
inline SuiteReport verify_inequalities(const ExperimentMatrix& m, SpectrumCache& cache, const GridOptions& grid = {}) {
    SuiteReport rep{"inequalities", {}};
    for (double h : m.hurst) {
        for (std::size_t n : m.ns) {
            Check c{"chain " + point_name(h, n)};
            try {
                auto r = distance_report(cache.get(FgnSpec::of(h, n)), grid);
                const auto chain = check_chain(r);
                c.passed = chain.all();
                c.details = to_json(r);
            } catch (const Error& e) {
                c.details = {{"error", e.what()}};
            }
            rep.checks.push_back(std::move(c));
        }
    }
    return rep;
}

/// Relative entropy from the grid against the de Bruijn integral of the
/// Fisher excess along the Gaussian smoothing path.
inline SuiteReport verify_debruijn(const ExperimentMatrix& m, const GridOptions& grid = {}) {
    SuiteReport rep{"debruijn", {}};
    SpectrumCache cache;
    for (double h : m.hurst) {
        for (std::size_t n : m.ns) {
            Check c{"de Bruijn " + point_name(h, n)};
            try {
                const auto& s = cache.get(FgnSpec::of(h, n));
                const double direct = relative_entropy(density(s, grid));
                const auto db = de_bruijn_entropy(s, grid);
                const double diff = std::abs(direct - db.value);
                const double tol = std::max(0.01 * std::abs(direct), 1e-5);
                c.passed = diff <= tol;
                c.details = {{"direct", direct}, {"de_bruijn", db.value}, {"quadrature_error", db.error_estimate},
                             {"evaluations", db.evaluations}, {"difference", diff}, {"tolerance", tol}};
            } catch (const Error& e) {
                c.details = {{"error", e.what()}};
            }
            rep.checks.push_back(std::move(c));
        }
    }
    return rep;
}

inline const std::vector<double>& default_cw_grid() {
    static const std::vector<double> g{0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0};
    return g;
}

/// Closed form of the anti-concentration ratio for Q = Z^2 over an x grid:
/// max_x (2 Phi(sqrt x) - 1) / (2 sqrt x), with E|Q| = 1.
inline double chi1_cw_constant(std::span<const double> x_grid) {
    double best = 0.0;
    for (double x : x_grid) best = std::max(best, (2.0 * std_normal_cdf(std::sqrt(x)) - 1.0) / (2.0 * std::sqrt(x)));
    return best;
}

inline SuiteReport verify_carbery_wright(const ExperimentMatrix& m, const McConfig& cfg) {
    SuiteReport rep{"carbery-wright", {}};
    const auto& grid = default_cw_grid();
    {
        McConfig c1 = cfg;
        auto draws = map_batches(c1, [](std::size_t, std::size_t count, Rng& rng) {
            boost::random::normal_distribution<double> normal;
            std::vector<double> out(count);
            for (auto& v : out) {
                const double z = normal(rng);
                v = z * z;
            }
            return out;
        });
        std::vector<double> q;
        for (auto& d : draws) q.insert(q.end(), d.begin(), d.end());
        const auto cw = carbery_wright(q, grid);
        const double exact = chi1_cw_constant(grid);
        Check c{"single Gaussian square"};
        c.passed = std::abs(cw.c_hat - exact) <= 4.0 * cw.std_error;
        c.details = {{"c_hat", cw.c_hat}, {"se", cw.std_error}, {"closed_form", exact}, {"argmax_x", cw.argmax_x}};
        rep.checks.push_back(std::move(c));
    }
    for (double h : m.hurst) {
        for (std::size_t n : m.ns) {
            const auto spec = FgnSpec::of(h, n);
            McConfig c1 = cfg;
            c1.seed = point_seed(cfg.seed, spec);
            const auto cw = carbery_wright(sample_DF_norm_sq(spec, c1), grid);
            Check c{"c_hat < 10 " + point_name(h, n)};
            c.passed = std::isfinite(cw.c_hat) && cw.c_hat < 10.0;
            c.details = {{"c_hat", cw.c_hat}, {"se", cw.std_error}, {"argmax_x", cw.argmax_x}};
            rep.checks.push_back(std::move(c));
        }
    }
    return rep;
}

/// E||DF_n||^{-p} must show no significant upward trend in n for h <= 3/4;
/// rows with h > 3/4 are informational.
inline SuiteReport verify_negmoments(const ExperimentMatrix& m, std::span<const double> powers, const McConfig& cfg) {
    SuiteReport rep{"negmoments", {}};
    {
        const auto spec = FgnSpec::of(0.5, 64);
        McConfig c1 = cfg;
        c1.seed = point_seed(cfg.seed, spec);
        const auto e = neg_moment(spec, 2.0, c1);
        const double exact = 64.0 / (2.0 * 62.0);
        Check c{"closed form h=0.5,n=64,p=2"};
        c.passed = std::abs(e.mean - exact) <= 4.0 * e.std_error;
        c.details = {{"estimate", to_json(e)}, {"closed_form", exact}};
        rep.checks.push_back(std::move(c));
    }
    for (double h : m.hurst) {
        std::vector<std::vector<McEstimate>> by_power(powers.size());
        std::vector<double> ns;
        Json rows = Json::array();
        for (std::size_t n : m.ns) {
            const auto spec = FgnSpec::of(h, n);
            McConfig c1 = cfg;
            c1.seed = point_seed(cfg.seed, spec);
            const auto est = neg_moments(sample_DF_norm_sq(spec, c1), powers, cfg.batch);
            ns.push_back(static_cast<double>(n));
            for (std::size_t i = 0; i < powers.size(); ++i) {
                by_power[i].push_back(est[i]);
                rows.push_back(mc_row(spec, powers[i], est[i], c1.seed));
            }
        }
        for (std::size_t i = 0; i < powers.size(); ++i) {
            Check c{"no upward trend h=" + format_number(h) + ",p=" + format_number(powers[i])};
            c.informational = h > 0.75;
            try {
                const auto t = upward_trend_test(ns, by_power[i]);
                const bool tail = std::any_of(by_power[i].begin(), by_power[i].end(),
                                              [](const McEstimate& e) { return e.tail_flag; });
                c.passed = !t.upward;
                c.details = {{"slope_per_log2n", t.slope}, {"se", t.std_error}, {"z", t.z}, {"tail_flag", tail}};
            } catch (const Error& e) {
                c.details = {{"error", e.what()}};
            }
            rep.checks.push_back(std::move(c));
        }
        rep.checks.push_back({"estimates h=" + format_number(h), true, true, {{"rows", rows}}});
    }
    return rep;
}

/// Product formula, isometry, derivative/divergence and cumulant identities
/// on random small kernels and on the explicit F_n kernel.
inline SuiteReport verify_algebra(std::uint64_t seed = 7) {
    SuiteReport rep{"algebra", {}};
    Rng rng(seed);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    boost::random::normal_distribution<double> normal;
    auto random_kernel = [&](int q, int d) {
        SymmetricTensor f(q, d);
        for (std::size_t r = 0; r < f.size(); ++r) f.coefficient(r) = unif(rng);
        return f;
    };
    const int d = 3;
    for (int p = 1; p <= 3; ++p) {
        for (int q = 1; q <= 3; ++q) {
            const auto f = random_kernel(p, d);
            const auto g = random_kernel(q, d);
            const auto prod = product_formula(f, g);
            double worst = 0.0;
            for (int trial = 0; trial < 20; ++trial) {
                std::vector<double> z(d);
                for (auto& v : z) v = normal(rng);
                const double lhs = evaluate_hermite(f, z) * evaluate_hermite(g, z);
                double rhs = prod.constant();
                for (const auto& [k, h] : prod.kernels()) rhs += evaluate_hermite(h, z);
                worst = std::max(worst, std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)));
            }
            Check c{"product formula pointwise p=" + std::to_string(p) + ",q=" + std::to_string(q)};
            c.passed = worst < 1e-10;
            c.details = {{"max_relative_error", worst}};
            rep.checks.push_back(std::move(c));

            const double e_fg = expectation_of_product(ChaosExpansion::integral(f), ChaosExpansion::integral(g));
            const double expect = p == q ? detail::factorial(q) * f.inner(g) : 0.0;
            Check iso{"isometry p=" + std::to_string(p) + ",q=" + std::to_string(q)};
            iso.passed = std::abs(prod.constant() - expect) < 1e-10 && std::abs(e_fg - expect) < 1e-10;
            iso.details = {{"E[I_p I_q]", e_fg}, {"expected", expect}};
            rep.checks.push_back(std::move(iso));
        }
    }
    for (int q = 1; q <= 3; ++q) {
        const auto F = ChaosExpansion::integral(random_kernel(q, d));
        const auto LF = divergence_of_derivative(F);
        double worst = 0.0;
        for (int trial = 0; trial < 20; ++trial) {
            std::vector<double> z(d);
            for (auto& v : z) v = normal(rng);
            worst = std::max(worst, std::abs(evaluate(LF, z) - q * evaluate(F, z)));
        }
        Check c{"delta D F = q F, q=" + std::to_string(q)};
        c.passed = worst < 1e-10;
        c.details = {{"max_abs_error", worst}};
        rep.checks.push_back(std::move(c));

        const double dnorm = derivative_inner_product(F, F).constant();
        Check e{"E||DF||^2 = q E[F^2], q=" + std::to_string(q)};
        e.passed = std::abs(dnorm - q * F.second_moment()) < 1e-10 * std::max(1.0, dnorm);
        e.details = {{"E||DF||^2", dnorm}, {"q E[F^2]", q * F.second_moment()}};
        rep.checks.push_back(std::move(e));
    }
    for (double h : {0.3, 0.5, 0.7}) {
        for (std::size_t n : {2, 5, 8}) {
            const auto spec = FgnSpec::of(h, n);
            const auto F = fn_chaos_expansion(spec);
            const auto k = cumulants(spectrum(spec), 4);
            const double k3 = third_moment(F);
            const double k4 = fourth_cumulant(F);
            Check c{"F_n cumulants vs spectrum " + point_name(h, n)};
            c.passed = std::abs(k3 - k[3]) < 1e-9 && std::abs(k4 - k[4]) < 1e-9 && std::abs(F.second_moment() - 1.0) < 1e-9;
            c.details = {{"kappa3_algebra", k3}, {"kappa3_spectral", k[3]}, {"kappa4_algebra", k4}, {"kappa4_spectral", k[4]}};
            rep.checks.push_back(std::move(c));
        }
    }
    return rep;
}

}  // namespace chaoslab
