#include "chaoslab/experiments.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace chaoslab;

TEST(ExperimentMatrix, GeometricAndJson) {
    EXPECT_EQ(ExperimentMatrix::geometric(64, 4096).size(), 7u);
    EXPECT_EQ(ExperimentMatrix::geometric(64, 100), (std::vector<std::size_t>{64}));
    EXPECT_THROW(ExperimentMatrix::geometric(0, 8), InvalidArgument);
    const auto m = ExperimentMatrix::from_json(Json::parse(R"({"hurst":[0.4],"n_min":8,"n_max":32})"));
    EXPECT_EQ(m.ns, (std::vector<std::size_t>{8, 16, 32}));
    const auto e = ExperimentMatrix::from_json(Json::parse(R"({"hurst":[0.4],"n":[3,5]})"));
    EXPECT_EQ(e.ns, (std::vector<std::size_t>{3, 5}));
    EXPECT_THROW(ExperimentMatrix::from_json(Json::parse(R"({"hurst":[1.2],"n":[3]})")), InvalidArgument);
}

TEST(FitSlope, ExactPowerLaw) {
    std::vector<double> ns, ys;
    for (double n = 64; n <= 4096; n *= 2) {
        ns.push_back(n);
        ys.push_back(3.0 * std::pow(n, -0.75));
    }
    const auto f = fit_slope(ns, ys);
    EXPECT_NEAR(f.slope, -0.75, 1e-12);
    EXPECT_NEAR(std::exp(f.intercept), 3.0, 1e-10);
    EXPECT_NEAR(f.r_squared, 1.0, 1e-12);
    EXPECT_DOUBLE_EQ(f.n_range.first, 64.0);
    EXPECT_DOUBLE_EQ(f.n_range.second, 4096.0);

    ys[1] = std::nan("");
    ys[2] = -1.0;
    ys[3] = 0.0;
    EXPECT_THROW(fit_slope(ns, ys), InsufficientData);
}

TEST(RateTable, WhiteNoiseKappa4AndOrdering) {
    SpectrumCache cache;
    const ExperimentMatrix m{{0.5, 0.3}, ExperimentMatrix::geometric(64, 1024)};
    const auto t = rate_table(m, std::nullopt, cache, {}, 2);
    ASSERT_EQ(t.rows.size(), 10u);
    EXPECT_EQ(t.rows.front().h, 0.3);
    EXPECT_EQ(t.rows.back().h, 0.5);
    for (const auto& [n, k4] : t.column("kappa4", 0.5)) EXPECT_NEAR(k4, 12.0 / n, 1e-12 / n);
    const auto f = fit_slope(t, "kappa4", 0.5);
    EXPECT_NEAR(f.slope, -1.0, 1e-9);
    for (const auto& r : t.rows) {
        EXPECT_TRUE(r.notes.empty());
        EXPECT_FALSE(r.stein.has_value());
        EXPECT_TRUE(r.fisher.is_finite());
    }
    EXPECT_THROW(t.column("nope", 0.5), InvalidArgument);
}

TEST(RateTable, FisherTracksKappa4AtShortMemory) {
    SpectrumCache cache;
    const ExperimentMatrix m{{0.3, 0.5, 0.55}, ExperimentMatrix::geometric(64, 4096)};
    const auto t = rate_table(m, std::nullopt, cache);
    for (double h : m.hurst) {
        const auto J = t.column("fisher_excess", h);
        const auto K = t.column("kappa4", h);
        const auto TV = t.column("tv", h);
        const auto K3 = t.column("kappa3", h);
        double lo = INFINITY, hi = 0, tlo = INFINITY, thi = 0;
        for (std::size_t i = 0; i < J.size(); ++i) {
            const double r = J[i].second / K[i].second;
            lo = std::min(lo, r);
            hi = std::max(hi, r);
            const double s = TV[i].second / std::max(std::abs(K3[i].second), K[i].second);
            tlo = std::min(tlo, s);
            thi = std::max(thi, s);
        }
        EXPECT_LT(hi, 10 * lo) << h;
        EXPECT_LT(thi, 10 * tlo) << h;
    }
}

TEST(RateTable, LongMemoryKappa4DoesNotVanish) {
    SpectrumCache cache;
    const ExperimentMatrix m{{0.8}, ExperimentMatrix::geometric(64, 2048)};
    const auto t = rate_table(m, std::nullopt, cache);
    const auto K = t.column("kappa4", 0.8);
    // The limit is a Rosenblatt variable with kappa4 bounded away from zero.
    for (const auto& [n, k] : K) EXPECT_GT(k, 0.5 * K.front().second);
}

TEST(RateTable, MonteCarloColumnIsReproducible) {
    SpectrumCache cache;
    McConfig mc;
    mc.samples = 4000;
    mc.batch = 1000;
    const ExperimentMatrix m{{0.6}, {64, 128}};
    const auto a = rate_table(m, mc, cache, {}, 1);
    const auto b = rate_table(m, mc, cache, {}, 2);
    EXPECT_EQ(rate_table_csv(a), rate_table_csv(b));
    ASSERT_TRUE(a.rows[0].stein.has_value());
    EXPECT_GE(a.rows[0].stein->mean, a.rows[0].tv);
    // A point's seed depends only on the point.
    const auto c = rate_table(ExperimentMatrix{{0.6}, {128}}, mc, cache);
    EXPECT_EQ(c.rows[0].stein->mean, a.rows[1].stein->mean);
}

TEST(RateTable, CsvEscapesNotes) {
    RateTable t;
    RateRow r;
    r.h = 0.5;
    r.n = 4;
    r.notes = {"GridTooCoarse: \"x\"", "second"};
    t.rows.push_back(r);
    const auto csv = rate_table_csv(t);
    EXPECT_NE(csv.find("\"GridTooCoarse: 'x'; second\""), std::string::npos);
    EXPECT_NE(csv.find("divergent"), std::string::npos);
    EXPECT_EQ(to_json(t)["rows"][0]["stein_bound"], nullptr);
}

TEST(FnChaosExpansion, MatchesSpectrum) {
    const auto spec = FgnSpec::of(0.65, 6);
    const auto F = fn_chaos_expansion(spec);
    ASSERT_EQ(F.pure_order(), 2);
    const auto k = cumulants(spectrum(spec), 4);
    EXPECT_NEAR(F.second_moment(), 1.0, 1e-12);
    EXPECT_NEAR(third_moment(F), k[3], 1e-12);
    EXPECT_NEAR(fourth_cumulant(F), k[4], 1e-12);
}

TEST(Suites, AlgebraPasses) {
    const auto rep = verify_algebra(11);
    EXPECT_TRUE(rep.passed());
    EXPECT_GT(rep.checks.size(), 20u);
    const auto j = rep.to_json();
    EXPECT_EQ(j["suite"], "algebra");
    EXPECT_TRUE(j["passed"].get<bool>());
}

TEST(Suites, InequalitiesPass) {
    SpectrumCache cache;
    const auto rep = verify_inequalities({{0.3, 0.7}, {64, 256}}, cache);
    EXPECT_TRUE(rep.passed());
    EXPECT_EQ(rep.checks.size(), 4u);
}

TEST(Suites, NegMomentsAboveThreeQuartersIsInformational) {
    McConfig cfg;
    cfg.samples = 4000;
    cfg.batch = 1000;
    const std::vector<double> powers{2.0};
    const auto rep = verify_negmoments({{0.76}, {64, 128, 256}}, powers, cfg);
    bool saw = false;
    for (const auto& c : rep.checks)
        if (c.name.rfind("no upward trend", 0) == 0) {
            EXPECT_TRUE(c.informational);
            saw = true;
        }
    EXPECT_TRUE(saw);
}

TEST(Suites, ChiOneConstant) {
    const auto& g = default_cw_grid();
    EXPECT_NEAR(chi1_cw_constant(g), (2 * std_normal_cdf(0.1) - 1) / 0.2, 1e-15);
    EXPECT_LT(chi1_cw_constant(g), 1 / std::sqrt(2 * std::numbers::pi));
}

TEST(PointSeed, DependsOnPoint) {
    EXPECT_EQ(point_seed(1, FgnSpec::of(0.5, 64)), point_seed(1, FgnSpec::of(0.5, 64)));
    EXPECT_NE(point_seed(1, FgnSpec::of(0.5, 64)), point_seed(1, FgnSpec::of(0.5, 128)));
    EXPECT_NE(point_seed(1, FgnSpec::of(0.5, 64)), point_seed(1, FgnSpec::of(0.6, 64)));
    EXPECT_NE(point_seed(1, FgnSpec::of(0.5, 64)), point_seed(2, FgnSpec::of(0.5, 64)));
}
