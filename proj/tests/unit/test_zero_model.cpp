#include <gtest/gtest.h>

#include <cmath>

#include "sccoex/error.hpp"
#include "sccoex/estimation.hpp"
#include "sccoex/synthetic.hpp"
#include "sccoex/zero_model.hpp"
#include "test_util.hpp"

using namespace sccoex;

TEST(FA, Examples) {
    EXPECT_EQ(f_a(0.0, 3.5), 3.5);
    EXPECT_NEAR(f_a(1.0, 1.0), std::log(2.0), 1e-15);
    EXPECT_EQ(f_a(-1.0, 3.0), 6.0);
    EXPECT_EQ(f_a(0.7, 0.0), 0.0);
    // Continuous at a = 0 and finite for huge a.
    EXPECT_NEAR(f_a(1e-12, 2.0), 2.0, 1e-11);
    EXPECT_TRUE(std::isfinite(f_a(1e300, 1e10)));
}

TEST(FA, DecreasingInAAndConcaveInX) {
    for (double x : {0.1, 1.0, 5.0, 50.0}) {
        double prev = f_a(-5.0, x);
        for (double a = -4.9; a <= 5.0; a += 0.1) {
            const double v = f_a(a, x);
            EXPECT_LT(v, prev) << a << " " << x;
            prev = v;
        }
    }
    for (double a : {0.0, 0.3, 2.0}) {
        for (double x = 0.5; x < 20.0; x += 0.5) {
            EXPECT_LE(f_a(a, x + 0.5) - f_a(a, x), f_a(a, x) - f_a(a, x - 0.5) + 1e-15);
        }
    }
}

TEST(ExpectedZeros, Examples) {
    const std::vector<double> zeros(7, 0.0);
    EXPECT_EQ(expected_zeros(3.0, zeros), 7.0);
    const std::vector<double> ones2{1.0, 1.0};
    EXPECT_NEAR(expected_zeros(0.0, ones2), 2 * std::exp(-1.0), 1e-15);
    const std::vector<double> ones10(10, 1.0);
    EXPECT_NEAR(expected_zeros(1.0, ones10), 5.0, 1e-14);
}

TEST(SolveDispersion, AnalyticCases) {
    const std::vector<double> ones(10, 1.0);
    EXPECT_NEAR(solve_dispersion(ones, 5).a, 1.0, 1e-6);
    EXPECT_NEAR(solve_dispersion(ones, 2).a, 1.0 - std::log(5.0), 1e-6);
}

TEST(SolveDispersion, PoissonMatchGivesZero) {
    // Observed zeros equal sum exp(-mu) exactly: mu chosen so that it is 3.
    const std::vector<double> mu(6, std::log(2.0));
    const auto s = solve_dispersion(mu, 3);
    EXPECT_NEAR(s.a, 0.0, 1e-7);
}

TEST(SolveDispersion, ResidualAndBracketValidity) {
    const std::vector<double> mu{0.1, 0.5, 2.0, 7.0, 0.0, 3.3, 12.0, 0.9};
    for (std::uint32_t z = 1; z < mu.size(); ++z) {
        const auto s = solve_dispersion(mu, z);
        EXPECT_LE(std::abs(s.residual), 1e-8 * mu.size());
        EXPECT_NEAR(expected_zeros(s.a, mu) - z, s.residual, 1e-12);
        EXPECT_LT(expected_zeros(s.a - 1e-6, mu), z + 1e-8 * mu.size());
        EXPECT_GE(expected_zeros(s.a + 1e-6, mu), z - 1e-8 * mu.size());
    }
}

TEST(SolveDispersion, Preconditions) {
    const std::vector<double> mu{1.0, 2.0};
    EXPECT_THROW(solve_dispersion(mu, 2), std::invalid_argument);
    const std::vector<double> zero{0.0, 0.0};
    EXPECT_THROW(solve_dispersion(zero, 1), std::invalid_argument);
    const std::vector<double> neg{-1.0, 2.0};
    EXPECT_THROW(solve_dispersion(neg, 1), std::invalid_argument);
}

TEST(ChanceOfExpression, Examples) {
    ModelParams p;
    p.nu = {1.0, 2.0};
    p.lambda = {1.0, 0.0};
    DispersionFit fit;
    fit.a = {1.0, 0.0};
    fit.residual = {0.0, 0.0};
    fit.fitted = {1, 0};
    const auto rho = chance_of_expression(p, fit);
    EXPECT_NEAR(rho.at(0, 0), 0.5, 1e-15);
    EXPECT_EQ(rho.at(1, 0), 0.0);
    EXPECT_EQ(rho.at(1, 1), 0.0);
    p.lambda = {2.0, 0.0};
    fit.a = {0.0, 0.0};
    EXPECT_NEAR(chance_of_expression(p, fit).at(0, 0), 1.0 - std::exp(-2.0), 1e-15);
    fit.a.pop_back();
    EXPECT_THROW(chance_of_expression(p, fit), std::invalid_argument);
}

TEST(FitDispersion, MarginalsMatchOnSyntheticData) {
    DeskPreset preset;
    preset.genes = 200;
    preset.cells = 300;
    preset.seed = 5;
    const auto data = generate(desk_config(preset), 1);
    const auto m = filter_genes(data.matrix, 1).matrix;
    for (auto kind : {EstimatorKind::Average, EstimatorKind::SqrtCorrected}) {
        const auto p = estimate(m, kind, 1);
        const auto fit = fit_dispersion(m, p, 1e-8, 3);
        EXPECT_EQ(fit.mu_source, kind);
        const auto rho = chance_of_expression(p, fit, 2);
        for (std::size_t g = 0; g < m.n_genes(); ++g) {
            for (double v : rho.row(g)) {
                EXPECT_GE(v, 0.0);
                EXPECT_LE(v, 1.0);
            }
            if (!fit.fitted[g]) {
                EXPECT_EQ(p.lambda[g], 0.0);
                continue;
            }
            double zeros = 0.0;
            for (double v : rho.row(g)) zeros += 1.0 - v;
            EXPECT_LE(std::abs(zeros - static_cast<double>(m.n_cells() - m.row(g).size())),
                      1e-6 * m.n_cells());
        }
        EXPECT_EQ(fit_dispersion(m, p, 1e-8, 1).a, fit.a);
    }
}

TEST(RhoBinary, RoundTripAndHeader) {
    TempDir dir;
    RhoMatrix rho(2, 3, {0.0, 0.25, 0.5, 1.0, 0.125, 0.75});
    write_rho_binary(rho, dir / "r.bin");
    EXPECT_EQ(read_rho_binary(dir / "r.bin"), rho);
    const auto bytes = slurp(dir / "r.bin");
    ASSERT_EQ(bytes.size(), 16u + 6 * 8);
    EXPECT_EQ(bytes.substr(0, 5), "SCRHO");
    EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 2u);
    EXPECT_EQ(static_cast<unsigned char>(bytes[12]), 3u);
    dir.write("bad.bin", "not a rho file at all");
    EXPECT_THROW(read_rho_binary(dir / "bad.bin"), InputError);
    std::filesystem::resize_file(dir / "r.bin", 30);
    EXPECT_THROW(read_rho_binary(dir / "r.bin"), InputError);
}
