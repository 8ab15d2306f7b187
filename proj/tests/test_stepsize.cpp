#include <gtest/gtest.h>

#include "msplit/stepsize.hpp"
#include "msplit/synthetic.hpp"
#include "oracles.hpp"

using namespace msplit;

TEST(Chi, Values) {
    EXPECT_NEAR(chi(0.7, 0.0, 1.0), 1.4, 1e-15);
    EXPECT_NEAR(chi(1.0, 1.0, 0.0), 4.0 / (1.0 + std::sqrt(17.0)), 1e-15);
    EXPECT_NEAR(chi(1.0, 1.0, 0.0), 0.780776, 1e-6);
    EXPECT_NEAR(chi(1.0, 1.0, -2.0), 0.5, 1e-15);
    EXPECT_THROW(chi(0.0, 1.0, 0.0), DomainError);
}

TEST(GammaFbhf, MidpointAndDefaultSafety) {
    const double c = chi(1.0, 1.0, 0.0);
    const auto mid = gamma_fbhf(c, 0.5);
    EXPECT_NEAR(mid.gamma, c / 2, 1e-15);
    EXPECT_NEAR(mid.epsilon, c / 4, 1e-15);
    const auto standard = gamma_fbhf(c, 0.9975);
    EXPECT_NEAR(standard.gamma, 3.99 / (1.0 + std::sqrt(17.0)), 1e-15);
    EXPECT_NEAR(standard.gamma, 0.778824, 1e-6);
    EXPECT_GT(standard.epsilon, 0.0);
    EXPECT_LE(standard.epsilon, standard.gamma);
    EXPECT_LE(standard.gamma, c - standard.epsilon);
    EXPECT_THROW(gamma_fbhf(c, 1.0), DomainError);
    EXPECT_THROW(gamma_fbhf(c, 0.0), DomainError);
}

TEST(GammaFdrf, CubicRoot) {
    // Real root of γ³ + γ² − 1 = 0.
    const double root = oracle::golden_section([](double g) { return std::abs(g * g * g + g * g - 1.0); }, 0.0, 1.0);
    const auto s = gamma_fdrf(0.5, 1.0, 0.0);
    EXPECT_NEAR(s.gamma_hat, root, 1e-9);
    EXPECT_NEAR(s.gamma_hat, 0.754878, 1e-6);
    EXPECT_NEAR(s.gamma, 0.999 * s.gamma_hat, 1e-15);
    EXPECT_TRUE(in_gamma_set(s.gamma, 0.5, 1.0, 0.0));
}

TEST(GammaFdrf, LargeBetaLimit) { EXPECT_NEAR(gamma_fdrf(1e6, 1.0, 0.0).gamma_hat, 1.0, 1e-6); }

TEST(GammaFdrf, NegativeRhoClamp) {
    const auto s = gamma_fdrf(0.5, 1.0, -4.0);
    EXPECT_NEAR(s.gamma, 0.999 * 0.25, 1e-15);
    EXPECT_TRUE(in_gamma_set(s.gamma, 0.5, 1.0, -4.0));
    EXPECT_THROW(gamma_fdrf(0.5, 0.0, 0.0), DomainError);
}

TEST(EpsilonsFdrf, Values) {
    const auto e = epsilons_fdrf(0.5, 0.5, 1.0);
    EXPECT_NEAR(e.eps2, 0.5 * 0.625 / 0.75, 1e-15);
    EXPECT_NEAR(e.eps2, 0.41667, 1e-5);
    EXPECT_NEAR(e.eps1, 0.535714, 1e-6);
    const auto lim = epsilons_fdrf(1.0, 1.0, 1e-6);
    EXPECT_NEAR(lim.eps2, 0.5, 1e-9);
    EXPECT_NEAR(lim.eps1, 1.0, 1e-9);
    EXPECT_THROW(epsilons_fdrf(2.0, 0.5, 1.0), DomainError);
}

TEST(Theta1, Values) {
    EXPECT_EQ(theta1(0, 0, 5.0), 0.0);
    EXPECT_EQ(theta1(1, 2, 3), 9.0);
}

TEST(Theta1, PerturbationBoundOnRandomPoints) {
    QuadraticOptions o;
    o.mismatch = 0.1;
    const auto d = random_quadratic(o, 8);
    const auto family = MismatchFamily(LinearMap::dense(d.K), ScheduleKind::geometric, 0.3, 0.8, 5);
    const auto spec = make_quadratic_problem(d, family);
    const double t1 = theta1(spec.alpha, spec.B.zeta, oracle::dense_norm(d.L));
    auto rng = seeded_engine(2);
    for (int i = 0; i < 200; ++i) {
        const long n = i % 13;
        const Vector z = gaussian_vector(spec.dim(), rng), zs = gaussian_vector(spec.dim(), rng);
        const double lhs = (d_map(family.perturbation(n), spec, z) - d_map(family.base(), spec, z)).norm();
        const Vector lzs = spec.L.apply(zs);
        const double rhs =
            family.omega(n) * (t1 * (z - zs).norm() + (spec.alpha * (lzs - spec.c) + spec.B.eval(lzs)).norm());
        EXPECT_LE(lhs, rhs + 1e-12);
    }
}

TEST(ContractionFactors, Values) {
    // min{κ²ε/2, ρ̂} = min{0.1, 0.5}
    EXPECT_NEAR(contraction_fbhf(1.0, 0.2, 0.5), std::sqrt(0.98), 1e-15);
    EXPECT_NEAR(contraction_fbhf(1.0, 0.2, 0.5), 0.989949, 1e-6);
    EXPECT_NEAR(contraction_fbhf(1.0, 0.2, 0.05), std::sqrt(0.99), 1e-15);
    EXPECT_NEAR(contraction_fdrf(0.5, 0.5, 0.535714, 0.5 * 0.625 / 0.75, 0.1), std::sqrt(1.0 - 0.1 / 3.0), 1e-15);
    EXPECT_NEAR(contraction_fdrf(0.5, 0.5, 0.535714, 0.5 * 0.625 / 0.75, 0.1), 0.983192, 1e-6);
    EXPECT_NEAR(contraction_fbhf(1.0, 0.2, 1e-14), 1.0, 1e-12);
    EXPECT_NEAR(contraction_fdrf(0.5, 0.5, 0.5, 0.4, 1e-14), 1.0, 1e-12);
    EXPECT_THROW(contraction_fbhf(1.0, 0.2, 0.0), DomainError);
}

TEST(Admissibility, RandomTriples) {
    auto rng = seeded_engine(77);
    std::uniform_real_distribution<double> logu(-3.0, 3.0);
    std::uniform_real_distribution<double> rr(-5.0, 5.0);
    for (int i = 0; i < 1000; ++i) {
        const double beta = std::pow(10.0, logu(rng)), kappa = std::pow(10.0, logu(rng)), rho = rr(rng);
        const double c = chi(beta, kappa, std::max(rho, 0.0));
        ASSERT_LT(c, std::min(2.0 * beta, 1.0 / kappa));
        const auto s = gamma_fdrf(beta, kappa, rho);
        ASSERT_TRUE(in_gamma_set(s.gamma, beta, kappa, rho));
        ASSERT_FALSE(in_gamma_set(1.01 * s.gamma_hat, beta, kappa, rho));
        ASSERT_FALSE(in_gamma_set(1.01 * s.gamma / 0.999, beta, kappa, rho));
        ASSERT_LE(s.gamma, 0.999 * s.gamma_hat * (1 + 1e-12));
        ASSERT_GT(epsilons_fdrf(s.gamma, beta, kappa).eps1, 0.0);
        const auto f = contraction_fdrf(beta, s.gamma, epsilons_fdrf(s.gamma, beta, kappa).eps1,
                                        epsilons_fdrf(s.gamma, beta, kappa).eps2, 0.3);
        ASSERT_LT(f, 1.0);
    }
}

TEST(Ledger, JsonHasAllFields) {
    const auto d = random_quadratic({}, 1);
    const auto spec = make_quadratic_problem(d);
    const auto ledger = build_ledger(spec, estimate_spectra(spec.L, spec.K()));
    const nlohmann::json j = ledger;
    for (const char* k : {"alpha", "beta", "zeta", "rho", "lambda_min", "kappa_K", "zeta_tilde_mismatch", "rho_hat",
                          "chi", "gamma_fbhf", "gamma_hat", "gamma_fdrf", "eps1", "eps2", "theta1"}) {
        EXPECT_TRUE(j.contains(k)) << k;
    }
    EXPECT_EQ(j.get<ConstantsLedger>().chi, ledger.chi);
    EXPECT_NEAR(ledger.rho_hat, 0.5, 1e-6);
    EXPECT_LT(ledger.theta_fbhf, 1.0);
    EXPECT_LT(ledger.theta_fdrf, 1.0);
}
