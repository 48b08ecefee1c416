#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "sccoex/chi2.hpp"
#include "sccoex/downstream.hpp"
#include "sccoex/error.hpp"
#include "sccoex/estimation.hpp"
#include "sccoex/synthetic.hpp"
#include "test_util.hpp"

using namespace sccoex;

namespace {

// S by brute force: sort a gene's n - 1 squared values, take the nearest rank.
std::vector<double> brute_s(const std::vector<GeneR>& rs, std::size_t n, double alpha) {
    std::vector<std::vector<double>> per(n);
    for (const auto& x : rs) {
        per[x.g1].push_back(x.r * x.r);
        per[x.g2].push_back(x.r * x.r);
    }
    std::vector<double> s(n, 0.0);
    for (std::size_t g = 0; g < n; ++g) {
        auto& v = per[g];
        if (v.empty()) continue;
        std::sort(v.begin(), v.end());
        s[g] = v[percentile_rank(alpha, v.size()) - 1];
    }
    return s;
}

std::vector<GeneR> random_stream(std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> z;
    std::vector<GeneR> out;
    for (std::uint32_t a = 0; a < n; ++a) {
        for (std::uint32_t b = a + 1; b < n; ++b) out.push_back({a, b, z(rng)});
    }
    std::shuffle(out.begin(), out.end(), rng);
    return out;
}

}  // namespace

TEST(Gdi, TransformOracles) {
    // log(-log P(chi2_1 > s)), mpmath at 50 digits.
    EXPECT_NEAR(gdi_from_s(15.136705226623397, -10.0), 2.2203268063678583, 1e-9);
    EXPECT_NEAR(gdi_from_s(1.0), std::log(-std::log(chi2_survival(1.0, 1))), 1e-13);
    EXPECT_EQ(gdi_from_s(0.0), -10.0);
    EXPECT_EQ(gdi_from_s(0.0, -3.5), -3.5);
    EXPECT_THROW(gdi_from_s(-1.0), std::invalid_argument);
    EXPECT_TRUE(std::isfinite(gdi_from_s(1e6)));
}

TEST(Gdi, TransformIsIncreasing) {
    double prev = gdi_from_s(1e-12);
    for (double s = 1e-3; s < 5000.0; s *= 1.5) {
        const double v = gdi_from_s(s);
        EXPECT_GT(v, prev) << s;
        prev = v;
    }
}

TEST(Gdi, PercentileRank) {
    EXPECT_EQ(percentile_rank(0.1, 10), 9u);
    EXPECT_EQ(percentile_rank(0.5, 3), 2u);
    EXPECT_EQ(percentile_rank(1e-3, 999), 999u);
    EXPECT_EQ(percentile_rank(1e-3, 1000), 999u);
    EXPECT_EQ(percentile_rank(0.999, 5), 1u);
    EXPECT_EQ(percentile_rank(0.3, 0), 0u);
    EXPECT_THROW(percentile_rank(0.0, 5), std::invalid_argument);
    EXPECT_THROW(percentile_rank(1.0, 5), std::invalid_argument);
}

TEST(Gdi, ElevenGeneExample) {
    // Gene 0 pairs with R = 1..10; the 0.9 percentile of R^2 over 10 values is rank 9.
    std::vector<GeneR> rs;
    for (std::uint32_t a = 0; a < 11; ++a) {
        for (std::uint32_t b = a + 1; b < 11; ++b) rs.push_back({a, b, a == 0 ? double(b) : 0.0});
    }
    GdiOptions opt;
    opt.alpha = 0.1;
    const auto sc = gdi_scores(rs, 11, opt);
    EXPECT_EQ(sc.s[0], 81.0);
    EXPECT_EQ(sc.s[3], 0.0);
    EXPECT_EQ(sc.gdi[3], -10.0);
    EXPECT_NEAR(sc.gdi[0], gdi_from_s(81.0), 0.0);
}

TEST(Gdi, HeapMatchesFullSort) {
    std::mt19937_64 rng(99);
    for (std::size_t n : {2u, 3u, 17u, 120u, 500u}) {
        for (double alpha : {1e-3, 0.05, 0.5}) {
            const auto rs = random_stream(n, rng);
            GdiOptions opt;
            opt.alpha = alpha;
            const auto sc = gdi_scores(rs, n, opt);
            EXPECT_EQ(sc.s, brute_s(rs, n, alpha)) << n << " " << alpha;
        }
    }
}

TEST(Gdi, AccumulatorAsSinkAndIncompleteStream) {
    std::mt19937_64 rng(1);
    const auto rs = random_stream(30, rng);
    GdiAccumulator acc(30);
    std::vector<PairRecord> batch;
    for (const auto& x : rs) {
        PairRecord rec;
        rec.g1 = x.g1;
        rec.g2 = x.g2;
        rec.result.r = x.r;
        batch.push_back(rec);
    }
    acc.consume(std::span(batch).first(100), TileInfo{});
    EXPECT_THROW(acc.finalize(), InputError);
    acc.consume(std::span(batch).subspan(100), TileInfo{});
    EXPECT_EQ(acc.finalize().s, gdi_scores(rs, 30).s);
    EXPECT_THROW(acc.add(3, 3, 1.0), std::invalid_argument);
    EXPECT_THROW(acc.add(3, 30, 1.0), std::invalid_argument);
}

TEST(Gdi, ThresholdTest) {
    GdiScores sc;
    sc.s = {15.2, 0.0, 15.1, 400.0};
    sc.gdi.resize(4);
    EXPECT_EQ(gdi_threshold_test(sc), (std::vector<std::uint8_t>{1, 0, 0, 1}));
    EXPECT_EQ(gdi_threshold_test(sc, 0.5), (std::vector<std::uint8_t>{1, 0, 1, 1}));
}

TEST(DiffExp, NoDeviationGivesZero) {
    const std::vector<std::vector<count_t>> rows{{1, 0, 1, 0}};
    const auto m = CountMatrix::from_dense(rows);
    const RhoMatrix rho(1, 4, {1.0, 0.0, 1.0, 0.0});
    ConditionPartition part{{0, 0, 1, 1}, {"x", "y"}};
    const auto r = diff_expression(m, rho, part, 0);
    EXPECT_EQ(r.w, 0.0);
    EXPECT_EQ(r.dof, 1);
    EXPECT_EQ(r.p_value, 1.0);
    EXPECT_EQ(r.observed_nonzero, (std::vector<std::uint32_t>{1, 1}));
    EXPECT_EQ(r.observed_zero, (std::vector<std::uint32_t>{1, 1}));
}

TEST(DiffExp, HandTable) {
    const std::vector<std::vector<count_t>> rows{{3, 2, 0, 0, 0, 0}};
    const auto m = CountMatrix::from_dense(rows);
    const RhoMatrix rho(1, 6, std::vector<double>(6, 0.5));
    ConditionPartition part{{0, 0, 1, 1, 2, 2}, {"a", "b", "c"}};
    const auto r = diff_expression(m, rho, part, 0);
    // O = (2,0 | 0,2 | 0,2), E = 1 everywhere.
    EXPECT_DOUBLE_EQ(r.w, 6.0);
    EXPECT_EQ(r.dof, 2);
    EXPECT_NEAR(r.p_value, std::exp(-3.0), 1e-14);
}

TEST(DiffExp, PartitionChecks) {
    const std::vector<std::vector<count_t>> rows{{1, 0, 1}};
    const auto m = CountMatrix::from_dense(rows);
    const RhoMatrix rho(1, 3, {0.5, 0.5, 0.5});
    EXPECT_THROW(diff_expression(m, rho, {{0, 0, 0}, {"only"}}, 0), InputError);
    EXPECT_THROW(diff_expression(m, rho, {{0, 0, 0}, {"a", "b"}}, 0), InputError);
    EXPECT_THROW(diff_expression(m, rho, {{0, 1}, {"a", "b"}}, 0), InputError);
    EXPECT_THROW(diff_expression(m, rho, {{0, 1, 1}, {"a", "b"}}, 1), std::invalid_argument);
}

TEST(DiffExp, DetectsClusterSpecificGene) {
    SynthConfig cfg;
    cfg.seed = 3;
    // Gene 0 differs between the clusters; 200 flat genes keep the cell factors honest.
    std::vector<double> l0(201, 1.0), l1(201, 1.0), a(201, 0.2);
    l0[0] = 3.0;
    l1[0] = 0.05;
    cfg.clusters = {{300, l0, a}, {300, l1, a}};
    const auto data = generate(cfg, 1);
    const auto p = estimate(data.matrix, EstimatorKind::Average, 1);
    const auto fit = fit_dispersion(data.matrix, p, 1e-8, 1);
    const auto rho = chance_of_expression(p, fit, 1);
    ConditionPartition part;
    part.labels = {"c0", "c1"};
    part.assignment = data.truth.cluster_of;
    EXPECT_LT(diff_expression(data.matrix, rho, part, 0).p_value, 1e-6);
    EXPECT_GT(diff_expression(data.matrix, rho, part, 1).p_value, 1e-4);
}

TEST(DiffExp, LoadPartition) {
    TempDir dir;
    const std::vector<std::vector<count_t>> rows{{1, 0, 1}};
    const auto m = CountMatrix::from_dense(rows);
    dir.write("ok.tsv", "cell\tcondition\nc2\tB\nc1\tA\n# note\nc3\tB\n");
    const auto part = load_partition(dir / "ok.tsv", m);
    EXPECT_EQ(part.labels, (std::vector<std::string>{"B", "A"}));
    EXPECT_EQ(part.assignment, (std::vector<std::uint32_t>{1, 0, 0}));

    dir.write("dup.tsv", "c1\tA\nc1\tB\nc2\tA\nc3\tB\n");
    try {
        load_partition(dir / "dup.tsv", m);
        FAIL();
    } catch (const InputError& e) {
        EXPECT_EQ(e.line(), 2u);
    }
    dir.write("missing.tsv", "c1\tA\nc2\tB\n");
    EXPECT_THROW(load_partition(dir / "missing.tsv", m), InputError);
    dir.write("unknown.tsv", "c1\tA\nc9\tB\n");
    EXPECT_THROW(load_partition(dir / "unknown.tsv", m), InputError);
    dir.write("one.tsv", "c1\tA\nc2\tA\nc3\tA\n");
    EXPECT_THROW(load_partition(dir / "one.tsv", m), InputError);
}
