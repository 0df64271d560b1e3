#include "chaoslab/chaos_algebra.hpp"
#include "chaoslab/fgn_model.hpp"
#include "chaoslab/second_chaos.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

using namespace chaoslab;

namespace {

std::mt19937_64& rng() {
    static std::mt19937_64 g(11);
    return g;
}

SymmetricTensor random_symmetric(int q, int d) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    SymmetricTensor f(q, d);
    for (std::size_t r = 0; r < f.size(); ++r) f.coefficient(r) = u(rng());
    return f;
}

std::vector<double> gaussian_vector(int d) {
    std::normal_distribution<double> n;
    std::vector<double> z(static_cast<std::size_t>(d));
    for (auto& v : z) v = n(rng());
    return z;
}

struct Moments {
    double mean, se;
};

template <class Fn>
Moments monte_carlo(std::size_t samples, Fn&& fn) {
    double s = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < samples; ++i) {
        const double v = fn();
        s += v;
        s2 += v * v;
    }
    const double m = s / samples;
    return {m, std::sqrt((s2 / samples - m * m) / samples)};
}

// F_n = I_2(L^T L / sqrt(n v_n)) with R = L L^T.
ChaosExpansion fn_expansion(double h, std::size_t n) {
    const auto spec = FgnSpec::of(h, n);
    const Eigen::MatrixXd L = gram_matrix(spec).llt().matrixL();
    return ChaosExpansion::integral(SymmetricTensor::from_matrix(L.transpose() * L / std::sqrt(n * vn(spec))));
}

}  // namespace

TEST(Hermite, Values) {
    for (double x : {-2.5, -0.3, 0.0, 1.0, 3.7}) {
        EXPECT_DOUBLE_EQ(hermite(0, x), 1.0);
        EXPECT_DOUBLE_EQ(hermite(1, x), x);
        EXPECT_NEAR(hermite(2, x), x * x - 1, 1e-14);
        EXPECT_NEAR(hermite(4, x), x * x * x * x - 6 * x * x + 3, 1e-12);
    }
    EXPECT_DOUBLE_EQ(hermite(3, 2.0), 2.0);
    for (int q : {1, 3, 5, 7, 9}) EXPECT_EQ(hermite(q, 0.0), 0.0);
}

TEST(SymmetricTensor, CanonicalStorage) {
    SymmetricTensor f(3, 3);
    f.set({2, 0, 1}, 1.5);
    EXPECT_EQ(f({0, 1, 2}), 1.5);
    EXPECT_EQ(f({1, 2, 0}), 1.5);
    EXPECT_EQ(f.size(), 10u);  // C(3 + 3 - 1, 3)
    // ||f||^2 counts all 6 permutations of (0, 1, 2).
    EXPECT_DOUBLE_EQ(f.norm_sq(), 6 * 1.5 * 1.5);
    EXPECT_THROW(f.set({0, 1}, 1.0), RankError);
    EXPECT_THROW(f.set({0, 1, 3}, 1.0), DimensionMismatch);
}

TEST(Contract, InnerProductCases) {
    const auto e1 = SymmetricTensor::basis(0, 3);
    EXPECT_DOUBLE_EQ(contract(e1, e1, 1).data()[0], 1.0);
    for (int q = 1; q <= 3; ++q) {
        const auto f = random_symmetric(q, 3);
        EXPECT_NEAR(contract(f, f, q).data()[0], f.norm_sq(), 1e-12);
    }
}

TEST(Contract, BruteForceOnTwoDimensions) {
    // f = e1 (x) e1, g = sym(e1 (x) e2); (f (x)_1 g)_{ij} = sum_k f_ik g_jk.
    SymmetricTensor f(2, 2), g(2, 2);
    f.set({0, 0}, 1.0);
    g.set({0, 1}, 0.5);
    double F[2][2] = {{1, 0}, {0, 0}}, G[2][2] = {{0, 0.5}, {0.5, 0}};
    const auto c = contract(f, g, 1);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            double s = 0;
            for (int k = 0; k < 2; ++k) s += F[i][k] * G[j][k];
            EXPECT_DOUBLE_EQ(c({i, j}), s);
        }
    const auto sc = symmetrized_contraction(f, g, 1);
    EXPECT_DOUBLE_EQ(sc({0, 1}), 0.25);
    EXPECT_DOUBLE_EQ(sc({1, 0}), 0.25);
    EXPECT_DOUBLE_EQ(sc({0, 0}), 0.0);
}

TEST(Contract, Errors) {
    const auto f = random_symmetric(2, 3);
    EXPECT_THROW(contract(f, random_symmetric(2, 4), 1), DimensionMismatch);
    EXPECT_THROW(contract(f, f, 3), RankError);
    EXPECT_THROW(contract(f, f, -1), RankError);
    EXPECT_THROW(product_formula(f, random_symmetric(1, 2)), DimensionMismatch);
}

TEST(Symmetrize, Idempotent) {
    const auto f = random_symmetric(3, 3);
    const auto g = symmetrize(f.to_dense());
    for (std::size_t r = 0; r < f.size(); ++r) EXPECT_NEAR(g.coefficient(r), f.coefficient(r), 1e-15);
}

TEST(Symmetrize, ElementaryTensor) {
    Tensor t(2, 2);
    t({0, 1}) = 1.0;
    const auto s = symmetrize(t);
    EXPECT_DOUBLE_EQ(s({0, 1}), 0.5);
    EXPECT_DOUBLE_EQ(s({1, 0}), 0.5);
    EXPECT_DOUBLE_EQ(s({0, 0}), 0.0);
}

TEST(Symmetrize, MatchesExplicitPermutationAverage) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Tensor t(3, 3);
    for (auto& x : t.data()) x = u(rng());
    const auto s = symmetrize(t);
    const int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) {
                const int idx[3] = {i, j, k};
                double avg = 0.0;
                for (const auto& p : perms) avg += t({idx[p[0]], idx[p[1]], idx[p[2]]});
                EXPECT_NEAR(s({i, j, k}), avg / 6.0, 1e-14);
            }
}

TEST(SymmetrizedContraction, EqualsSymmetrizeOfContract) {
    for (int p = 0; p <= 3; ++p)
        for (int q = 0; q <= 3; ++q)
            for (int r = 0; r <= std::min(p, q); ++r) {
                const auto f = random_symmetric(p, 3), g = random_symmetric(q, 3);
                const auto a = symmetrized_contraction(f, g, r);
                const auto b = symmetrize(contract(f, g, r));
                for (std::size_t i = 0; i < a.size(); ++i)
                    EXPECT_NEAR(a.coefficient(i), b.coefficient(i), 1e-12) << p << q << r;
            }
}

TEST(ProductFormula, FirstChaos) {
    const auto f = random_symmetric(1, 3), g = random_symmetric(1, 3);
    const auto P = product_formula(f, g);
    EXPECT_NEAR(P.constant(), f.inner(g), 1e-14);
    const auto& k = P.kernel(2);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) EXPECT_NEAR(k({i, j}), 0.5 * (f({i}) * g({j}) + f({j}) * g({i})), 1e-14);
}

TEST(ProductFormula, ConstantFactor) {
    const auto f = random_symmetric(1, 2);
    const auto P = product_formula(f, SymmetricTensor::scalar(3.0, 2));
    EXPECT_EQ(P.orders(), std::vector<int>{1});
    for (std::size_t r = 0; r < f.size(); ++r) EXPECT_DOUBLE_EQ(P.kernel(1).coefficient(r), 3.0 * f.coefficient(r));
}

TEST(ProductFormula, SquareOfSecondHermite) {
    SymmetricTensor f(2, 1);
    f.set({0, 0}, 1.0);
    const auto P = product_formula(f, f);
    EXPECT_DOUBLE_EQ(P.constant(), 2.0);
    EXPECT_DOUBLE_EQ(P.kernel(2)({0, 0}), 4.0);
    EXPECT_DOUBLE_EQ(P.kernel(4)({0, 0, 0, 0}), 1.0);

    // 10^7-sample check of E and E[.^2] for both sides: E = 2, E[H_2^4] = 60.
    std::normal_distribution<double> nd;
    std::vector<double> z(1);
    const auto lhs = monte_carlo(10'000'000, [&] {
        z[0] = nd(rng());
        const double h = z[0] * z[0] - 1.0;
        return h * h;
    });
    const auto rhs = monte_carlo(10'000'000, [&] {
        z[0] = nd(rng());
        return evaluate(P, z);
    });
    EXPECT_NEAR(lhs.mean, 2.0, 4 * lhs.se);
    EXPECT_NEAR(rhs.mean, 2.0, 4 * rhs.se);
    const auto rhs2 = monte_carlo(10'000'000, [&] {
        z[0] = nd(rng());
        const double v = evaluate(P, z);
        return v * v;
    });
    EXPECT_NEAR(rhs2.mean, 60.0, 4 * rhs2.se);
    for (int t = 0; t < 100; ++t) {
        z[0] = nd(rng());
        for (int m = 1; m <= 4; ++m) {
            const double a = std::pow(hermite(2, z[0]) * hermite(2, z[0]), m);
            EXPECT_NEAR(std::pow(evaluate(P, z), m), a, 1e-9 * std::max(1.0, std::abs(a)));
        }
    }
}

TEST(ProductFormula, PointwiseIdentity) {
    for (int p = 1; p <= 3; ++p)
        for (int q = 1; q <= 3; ++q) {
            const int d = 3;
            const auto f = random_symmetric(p, d), g = random_symmetric(q, d);
            const auto P = product_formula(f, g);
            for (int t = 0; t < 10; ++t) {
                const auto z = gaussian_vector(d);
                const double lhs = evaluate_hermite(f, z) * evaluate_hermite(g, z);
                EXPECT_NEAR(evaluate(P, z), lhs, 1e-10 * std::max(1.0, std::abs(lhs)));
            }
        }
}

TEST(Isometry, ExactViaConstantTerm) {
    for (int d = 1; d <= 4; ++d)
        for (int p = 1; p <= 3; ++p)
            for (int q = 1; q <= 3; ++q) {
                const auto f = random_symmetric(p, d), g = random_symmetric(q, d);
                const double expected = p == q ? detail::factorial(q) * f.inner(g) : 0.0;
                EXPECT_NEAR(product_formula(f, g).constant(), expected, 1e-12);
                EXPECT_NEAR(expectation_of_product(ChaosExpansion::integral(f), ChaosExpansion::integral(g)),
                            expected, 1e-12);
            }
}

TEST(Isometry, MonteCarlo) {
    for (int q = 1; q <= 3; ++q) {
        const auto f = random_symmetric(q, 3);
        const auto F = ChaosExpansion::integral(f);
        const auto m = monte_carlo(1'000'000, [&] {
            const double v = evaluate(F, gaussian_vector(3));
            return v * v;
        });
        EXPECT_NEAR(m.mean, detail::factorial(q) * f.norm_sq(), 4 * m.se) << q;
    }
}

TEST(Evaluate, Examples) {
    SymmetricTensor a(2, 2), b(2, 2);
    a.set({0, 0}, 1.0);
    b.set({0, 1}, 0.5);
    const std::vector<double> z{1.7, -0.4};
    EXPECT_NEAR(evaluate(ChaosExpansion::integral(a), z), 1.7 * 1.7 - 1, 1e-15);
    EXPECT_NEAR(evaluate(ChaosExpansion::integral(b), z), 1.7 * -0.4, 1e-15);
    EXPECT_THROW(evaluate(ChaosExpansion::integral(a), std::vector<double>{1.0}), DimensionMismatch);
}

TEST(Evaluate, QuadraticAndHermitePathsAgree) {
    for (int d = 1; d <= 5; ++d) {
        const auto f = random_symmetric(2, d);
        const Eigen::MatrixXd A = f.to_matrix();
        for (int t = 0; t < 20; ++t) {
            const auto z = gaussian_vector(d);
            const Eigen::Map<const Eigen::VectorXd> zv(z.data(), d);
            const double direct = zv.dot(A * zv) - A.trace();
            EXPECT_NEAR(evaluate_quadratic(f, z), direct, 1e-12);
            EXPECT_NEAR(evaluate_hermite(f, z), direct, 1e-12);
        }
    }
}

TEST(MalliavinDerivative, Examples) {
    const auto D1 = malliavin_derivative(ChaosExpansion::integral(SymmetricTensor::basis(0, 3)));
    ASSERT_EQ(D1.size(), 3u);
    EXPECT_DOUBLE_EQ(D1[0].constant(), 1.0);
    EXPECT_TRUE(D1[1].orders().empty() && D1[1].constant() == 0.0);

    SymmetricTensor f(2, 2);
    f.set({0, 0}, 1.0);
    const auto D2 = malliavin_derivative(ChaosExpansion::integral(f));
    const std::vector<double> z{0.8, 2.0};
    EXPECT_NEAR(evaluate(D2[0], z), 2 * 0.8, 1e-15);
    EXPECT_NEAR(evaluate(D2[1], z), 0.0, 1e-15);
    EXPECT_TRUE(malliavin_derivative(ChaosExpansion::constant(4.0, 2))[0].orders().empty());
}

TEST(MalliavinDerivative, MatchesNumericalGradient) {
    for (int q = 1; q <= 3; ++q) {
        const auto F = ChaosExpansion::integral(random_symmetric(q, 3));
        const auto D = malliavin_derivative(F);
        auto z = gaussian_vector(3);
        for (int x = 0; x < 3; ++x) {
            const double h = 1e-5;
            auto zp = z, zm = z;
            zp[x] += h;
            zm[x] -= h;
            EXPECT_NEAR(evaluate(D[x], z), (evaluate(F, zp) - evaluate(F, zm)) / (2 * h), 1e-6);
        }
    }
}

TEST(IntegrationByParts, ExactAndMonteCarlo) {
    // E<DF, DG> = E[F delta(DG)] = q_G E[F G].
    for (int q = 1; q <= 3; ++q) {
        const auto F = ChaosExpansion::integral(random_symmetric(q, 3));
        const auto G = ChaosExpansion::integral(random_symmetric(q, 3));
        const double lhs = derivative_inner_product(F, G).mean();
        EXPECT_NEAR(lhs, expectation_of_product(F, divergence_of_derivative(G)), 1e-12);
        EXPECT_NEAR(lhs, q * expectation_of_product(F, G), 1e-12);
        const auto ip = derivative_inner_product(F, G);
        const auto m = monte_carlo(200'000, [&] {
            const auto z = gaussian_vector(3);
            return evaluate(ip, z) - q * evaluate(F, z) * evaluate(G, z);
        });
        EXPECT_NEAR(m.mean, 0.0, 4 * m.se);
    }
}

TEST(FourthCumulant, GaussianIsZero) {
    const auto e = SymmetricTensor::basis(1, 3);
    EXPECT_NEAR(fourth_cumulant(ChaosExpansion::integral(e)), 0.0, 1e-14);
}

TEST(FourthCumulant, SecondChaosTraceFormula) {
    for (int d = 1; d <= 4; ++d) {
        const auto f = random_symmetric(2, d);
        const Eigen::MatrixXd A = f.to_matrix();
        const Eigen::MatrixXd A2 = A * A;
        const auto F = ChaosExpansion::integral(f);
        EXPECT_NEAR(fourth_cumulant(F), 48 * (A2 * A2).trace(), 1e-10);
        EXPECT_NEAR(third_moment(F), 8 * (A2 * A).trace(), 1e-10);
        // ||f (x)_1 f||^2 = tr A^4 = kappa_4 / 48.
        EXPECT_NEAR(symmetrized_contraction(f, f, 1).norm_sq(), (A2 * A2).trace(), 1e-12);
    }
}

TEST(FourthCumulant, MonteCarloFourthMoment) {
    const auto f = random_symmetric(2, 3);
    const auto F = ChaosExpansion::integral(f);
    const double m2 = F.second_moment();
    const auto m = monte_carlo(2'000'000, [&] {
        const double v = evaluate(F, gaussian_vector(3));
        return v * v * v * v;
    });
    EXPECT_NEAR(m.mean, 3 * m2 * m2 + fourth_cumulant(F), 4 * m.se);
}

TEST(FourthCumulant, NonnegativeOnPureChaos) {
    std::uniform_int_distribution<int> dd(1, 4), qq(2, 3);
    for (int t = 0; t < 500; ++t) {
        const auto F = ChaosExpansion::integral(random_symmetric(qq(rng()), dd(rng())));
        EXPECT_GE(fourth_cumulant(F), -1e-10);
    }
}

TEST(FourthCumulant, WhiteNoiseFn) {
    for (std::size_t n = 1; n <= 8; ++n) {
        const auto F = fn_expansion(0.5, n);
        EXPECT_NEAR(F.second_moment(), 1.0, 1e-12);
        EXPECT_NEAR(fourth_cumulant(F), 12.0 / n, 1e-12);
        EXPECT_NEAR(third_moment(F), 2 * std::sqrt(2.0) / std::sqrt(n), 1e-12);
    }
}

TEST(FourthCumulant, MatchesSpectralCumulants) {
    for (double h : {0.3, 0.5, 0.7})
        for (std::size_t n = 1; n <= 8; ++n) {
            const auto F = fn_expansion(h, n);
            const auto k = cumulants(spectrum(FgnSpec::of(h, n)), 4);
            EXPECT_NEAR(third_moment(F), k[3], 1e-9);
            EXPECT_NEAR(fourth_cumulant(F), k[4], 1e-9);
        }
}

TEST(FourthCumulant, RejectsMixedChaos) {
    auto F = ChaosExpansion::integral(random_symmetric(2, 2));
    F.add(random_symmetric(1, 2));
    EXPECT_THROW(fourth_cumulant(F), NotPureChaos);
    EXPECT_THROW(fourth_cumulant(ChaosExpansion::integral(random_symmetric(2, 2)) + ChaosExpansion::constant(1, 2)),
                 NotPureChaos);
}

TEST(DivergenceOfDerivative, IsOrderTimesF) {
    for (int q = 1; q <= 3; ++q) {
        const auto F = ChaosExpansion::integral(random_symmetric(q, 3));
        const auto L = divergence_of_derivative(F);
        const auto z = gaussian_vector(3);
        EXPECT_NEAR(evaluate(L, z), q * evaluate(F, z), 1e-12);
    }
}
