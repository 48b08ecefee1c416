#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "sccoex/error.hpp"
#include "sccoex/estimation.hpp"
#include "sccoex/synthetic.hpp"

using namespace sccoex;

namespace {

CountMatrix dense(std::vector<std::vector<count_t>> rows) { return CountMatrix::from_dense(rows); }

double mean(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

TEST(EstimateAverage, HandArithmeticExamples) {
    const auto p = estimate_average(dense({{2, 0}, {0, 2}}));
    EXPECT_EQ(p.lambda, (std::vector<double>{1.0, 1.0}));
    EXPECT_EQ(p.nu, (std::vector<double>{1.0, 1.0}));
    EXPECT_EQ(p.kind, EstimatorKind::Average);
    EXPECT_EQ(mu(p, 0, 0), 1.0);

    const auto one = estimate_average(dense({{3}, {5}}));
    EXPECT_EQ(one.nu, (std::vector<double>{1.0}));

    const auto q = estimate_average(dense({{4, 0}}));
    EXPECT_EQ(q.lambda, (std::vector<double>{2.0}));
    EXPECT_EQ(q.nu, (std::vector<double>{2.0, 0.0}));
}

TEST(EstimateAverage, ExactRatiosOfIntegerMarginals) {
    const auto m = dense({{1, 2, 3}, {0, 5, 1}, {7, 0, 0}});
    const auto p = estimate_average(m);
    EXPECT_EQ(p.lambda[1], 6.0 / 3.0);
    EXPECT_EQ(p.nu[0], 8.0 * 3.0 / 19.0);
    EXPECT_NEAR(mean(p.nu), 1.0, 1e-15);
}

TEST(EstimateAverage, RejectsAllZeroMatrix) {
    EXPECT_THROW(estimate_average(dense({{0, 0}, {0, 0}})), InputError);
}

TEST(EstimateSqrt, ConstantRowOracle) {
    // X = 2, S^2 = 0: lambda = psi(2) + psi''(2) (4 - psi(2)) / 2 (mpmath).
    const auto p = estimate_sqrt(dense({{4, 4, 4, 4}, {1, 0, 2, 0}}));
    EXPECT_NEAR(p.lambda[0], 3.9775056296709370, 1e-10);
    EXPECT_NEAR(sqrt_corrected_level(2.0, 0.0), 3.9775056296709370, 1e-10);
}

TEST(EstimateSqrt, ZeroRowAndNormalization) {
    const auto p = estimate_sqrt(dense({{0, 0, 0}, {1, 4, 9}, {2, 0, 3}}));
    EXPECT_EQ(p.lambda[0], 0.0);
    EXPECT_NEAR(mean(p.nu), 1.0, 1e-12);
    EXPECT_EQ(p.kind, EstimatorKind::SqrtCorrected);
}

TEST(EstimateSqrt, DimensionAndZeroChecks) {
    EXPECT_THROW(estimate_sqrt(dense({{1, 2, 3}})), InputError);
    EXPECT_THROW(estimate_sqrt(dense({{1}, {2}})), InputError);
    EXPECT_THROW(estimate_sqrt(dense({{0, 0}, {0, 0}})), InputError);
}

TEST(EstimateSqrt, NegativeLevelsAreClampedAndFlagged) {
    // A single read in many cells: the second-order correction undershoots.
    std::vector<std::vector<count_t>> rows(2, std::vector<count_t>(50, 0));
    rows[0][0] = 1;
    for (auto& v : rows[1]) v = 3;
    const auto p = estimate_sqrt(dense(rows));
    for (std::size_t g = 0; g < 2; ++g) {
        EXPECT_GE(p.lambda[g], 0.0);
        EXPECT_EQ(p.lambda_clamped[g] != 0, sqrt_corrected_level(g == 0 ? 1.0 / 50 : std::sqrt(3.0),
                                                                 g == 0 ? (1.0 / 50) * (49.0 / 50) : 0.0) < 0.0);
    }
}

TEST(Estimators, SyntheticInvariants) {
    DeskPreset preset;
    preset.genes = 300;
    preset.cells = 400;
    preset.seed = 11;
    const auto data = generate(desk_config(preset), 2);
    const auto avg = estimate(data.matrix, EstimatorKind::Average, 1);
    const auto sq1 = estimate(data.matrix, EstimatorKind::SqrtCorrected, 1);
    const auto sq4 = estimate(data.matrix, EstimatorKind::SqrtCorrected, 4);
    EXPECT_NEAR(mean(avg.nu), 1.0, 1e-9);
    EXPECT_NEAR(mean(sq1.nu), 1.0, 1e-9);
    // Deterministic for any thread count.
    EXPECT_EQ(sq1.lambda, sq4.lambda);
    EXPECT_EQ(sq1.nu, sq4.nu);
    // Jensen gap: squared mean of sqrt counts never exceeds the mean count.
    for (std::size_t g = 0; g < data.matrix.n_genes(); ++g) {
        const auto r = data.matrix.row(g);
        double s = 0.0;
        for (auto v : r.counts) s += std::sqrt(static_cast<double>(v));
        const double x = s / static_cast<double>(data.matrix.n_cells());
        EXPECT_LE(x * x, avg.lambda[g] * (1 + 1e-12)) << g;
        EXPECT_GE(avg.lambda[g], 0.0);
    }
}

TEST(Estimators, ParseAndPrintKinds) {
    EXPECT_EQ(parse_estimator("average"), EstimatorKind::Average);
    EXPECT_EQ(parse_estimator("sqrt"), EstimatorKind::SqrtCorrected);
    EXPECT_EQ(to_string(EstimatorKind::SqrtCorrected), "sqrt");
    EXPECT_THROW(parse_estimator("mle"), std::invalid_argument);
}
