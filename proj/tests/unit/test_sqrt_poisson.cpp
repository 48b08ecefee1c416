#include <gtest/gtest.h>

#include <cmath>

#include "sccoex/sqrt_poisson.hpp"

using namespace sccoex;

// Reference values computed independently with mpmath at 30 digits.
TEST(SqrtPoisson, PhiOracleValues) {
    EXPECT_NEAR(phi(1.0), 0.7731926563792859874827625676, 1e-14);
    EXPECT_NEAR(phi(3.7), 1.840083580464905961508484727, 1e-14);
    EXPECT_EQ(phi(0.0), 0.0);
}

TEST(SqrtPoisson, TauOracleValues) {
    EXPECT_NEAR(tau(100.0), 0.25095110717103932, 1e-12);
    EXPECT_NEAR(tau(20.0), 0.25506745140904320, 1e-12);
    EXPECT_EQ(tau(0.0), 0.0);
    EXPECT_NEAR(tau(1.3189529204543128), 0.41249250939398681, 1e-12);
}

TEST(SqrtPoisson, PsiOracleValues) {
    EXPECT_NEAR(psi(2.0), 4.298535376529870239532, 1e-12);
    EXPECT_NEAR(psi(50.0) - 2500.0, 0.25003751751573943, 1e-9);
    EXPECT_EQ(psi(0.0), 0.0);
}

TEST(SqrtPoisson, PsiSecondOracleValues) {
    EXPECT_NEAR(psi_second(0.0), 2.0 - std::sqrt(2.0), 1e-9);
    EXPECT_NEAR(psi_second(2.0), 2.1506981892098289, 1e-9);
    EXPECT_NEAR(psi_second(100.0), 2.0000000056271885, 1e-9);
}

TEST(SqrtPoisson, DerivativesMatchFiniteDifferences) {
    for (double x : {0.3, 1.0, 2.5, 7.0, 40.0}) {
        const auto d = phi_derivatives(x);
        const double h = 1e-4 * std::max(1.0, x);
        EXPECT_NEAR(d.value, phi(x), 1e-15);
        EXPECT_NEAR(d.first, (phi(x + h) - phi(x - h)) / (2 * h), 1e-7) << x;
        EXPECT_NEAR(d.second, (phi(x + h) - 2 * phi(x) + phi(x - h)) / (h * h), 1e-4) << x;
        // psi' = 1 / phi'(psi(y))
        const double y = phi(x);
        EXPECT_NEAR(psi_prime(y) * d.first, 1.0, 1e-10) << x;
    }
}

TEST(SqrtPoisson, MonotoneOnDenseGrid) {
    double prev_phi = -1.0, prev_psi = -1.0;
    for (int i = 0; i <= 1000; ++i) {
        const double x = i;
        const double f = phi(x), p = psi(std::sqrt(x));
        EXPECT_GT(f, prev_phi) << x;
        EXPECT_GT(p, prev_psi) << x;
        prev_phi = f;
        prev_psi = p;
    }
}

TEST(SqrtPoisson, InverseIdentities) {
    for (int i = 0; i <= 400; ++i) {
        const double x = 0.25 * i;
        EXPECT_NEAR(psi(phi(x)), x, 1e-8 * std::max(1.0, x)) << x;
        const double y = std::sqrt(x);
        EXPECT_NEAR(phi(psi(y)), y, 1e-8) << y;
    }
}

TEST(SqrtPoisson, TauBounds) {
    for (int i = 0; i <= 5000; ++i) {
        const double x = 0.01 * i * i / 50.0;
        const double t = tau(x);
        EXPECT_GE(t, 0.0) << x;
        EXPECT_LE(t, kTauMax + 1e-6) << x;
    }
}

TEST(SqrtPoisson, ContinuousAcrossAsymptoticSwitch) {
    const SqrtPoissonEval eval;
    const double s = eval.asymptotic_switch;
    // Remove the slope across the 2e-12 relative gap before comparing.
    const double gap = phi(s * (1 + 1e-12), eval) - phi(s * (1 - 1e-12), eval);
    EXPECT_NEAR(gap, 2e-12 * s * 0.5 / std::sqrt(s), 1e-10);
    EXPECT_NEAR(tau(s * (1 - 1e-12), eval), tau(s * (1 + 1e-12), eval), 1e-10);
    EXPECT_NEAR(psi_second(std::sqrt(s) * 1.001, eval), 2.0, 1e-9);
}

TEST(SqrtPoisson, RejectsBadArgumentsAndSettings) {
    EXPECT_THROW(phi(-1.0), std::invalid_argument);
    EXPECT_THROW(tau(-0.5), std::invalid_argument);
    EXPECT_THROW(psi(-0.1), std::invalid_argument);
    SqrtPoissonEval bad;
    bad.series_rel_tol = 0.5;
    EXPECT_THROW(bad.validate(), std::invalid_argument);
}
