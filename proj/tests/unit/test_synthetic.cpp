#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "sccoex/error.hpp"
#include "sccoex/estimation.hpp"
#include "sccoex/keyvalue.hpp"
#include "sccoex/synthetic.hpp"
#include "test_util.hpp"

using namespace sccoex;

namespace {

SynthConfig single(std::size_t cells, std::vector<double> lambda, std::vector<double> a,
                   std::uint64_t seed) {
    SynthConfig cfg;
    cfg.seed = seed;
    cfg.clusters = {{cells, std::move(lambda), std::move(a)}};
    cfg.nu.kind = NuLaw::Kind::Explicit;
    cfg.nu.values.assign(cells, 1.0);
    return cfg;
}

double row_mean(const CountMatrix& m, std::size_t g) {
    const auto r = m.row(g);
    double s = 0.0;
    for (auto v : r.counts) s += v;
    return s / static_cast<double>(m.n_cells());
}

double row_var(const CountMatrix& m, std::size_t g) {
    const double mean = row_mean(m, g);
    const auto r = m.row(g);
    double ss = 0.0;
    for (auto v : r.counts) ss += (v - mean) * (v - mean);
    ss += static_cast<double>(m.n_cells() - r.size()) * mean * mean;
    return ss / static_cast<double>(m.n_cells() - 1);
}

}  // namespace

TEST(Synthetic, KeyedStreamsAreReproducible) {
    auto a = keyed_stream(1, 2, 3);
    auto b = keyed_stream(1, 2, 3);
    auto c = keyed_stream(1, 3, 2);
    const auto x = a();
    EXPECT_EQ(x, b());
    EXPECT_NE(x, c());
    SplitMix64 s(0);
    EXPECT_EQ(s(), 0xe220a8397b1dcdafULL);
}

TEST(Synthetic, SameOutputForAnyThreadCount) {
    DeskPreset p;
    p.genes = 120;
    p.cells = 90;
    p.clusters = 3;
    p.seed = 42;
    const auto cfg = desk_config(p);
    const auto one = generate(cfg, 1);
    const auto four = generate(cfg, 4);
    EXPECT_EQ(one.matrix, four.matrix);
    EXPECT_EQ(one.truth.nu, four.truth.nu);
    EXPECT_EQ(one.truth.lambda, four.truth.lambda);
    EXPECT_EQ(one.matrix.gene_ids().front(), "gene1");
    EXPECT_EQ(one.matrix.cell_ids().back(), "cell90");
    auto other = cfg;
    other.seed = 43;
    EXPECT_NE(generate(other, 1).matrix, one.matrix);
}

TEST(Synthetic, ZeroLevelGivesZeroRow) {
    const auto d = generate(single(500, {0.0, 1.0}, {0.3, 0.3}, 1), 1);
    EXPECT_EQ(d.matrix.row(0).size(), 0u);
    EXPECT_GT(d.matrix.row(1).size(), 0u);
}

TEST(Synthetic, PoissonMoments) {
    const auto d = generate(single(100000, {2.0}, {0.0}, 7), 1);
    EXPECT_NEAR(row_mean(d.matrix, 0), 2.0, 0.02);
    EXPECT_NEAR(row_var(d.matrix, 0), 2.0, 0.06);
}

TEST(Synthetic, GammaPoissonMoments) {
    // mean 4, variance 4 + 0.5 * 16 = 12
    const auto d = generate(single(1000000, {4.0}, {0.5}, 11), 1);
    EXPECT_NEAR(row_mean(d.matrix, 0), 4.0, 0.02);
    EXPECT_NEAR(row_var(d.matrix, 0), 12.0, 0.36);
}

TEST(Synthetic, CellFactorsHaveUnitMean) {
    DeskPreset p;
    p.genes = 10;
    p.cells = 777;
    p.nu_log_sd = 0.8;
    const auto d = generate(desk_config(p), 1);
    EXPECT_NEAR(std::accumulate(d.truth.nu.begin(), d.truth.nu.end(), 0.0) / 777.0, 1.0, 1e-12);
    for (double v : d.truth.nu) EXPECT_GT(v, 0.0);
}

TEST(Synthetic, NbZeroProbability) {
    EXPECT_NEAR(nb_zero_probability(1.0, 1.0), 0.5, 1e-15);
    EXPECT_NEAR(nb_zero_probability(0.0, 2.0), std::exp(-2.0), 1e-15);
    EXPECT_NEAR(nb_zero_probability(0.5, 3.0), 0.16, 1e-15);
    EXPECT_EQ(nb_zero_probability(0.7, 0.0), 1.0);
}

TEST(Synthetic, ZeroRatesMatchTruth) {
    DeskPreset p;
    p.genes = 300;
    p.cells = 3000;
    p.clusters = 2;
    p.seed = 8;
    const auto d = generate(desk_config(p), 1);
    const auto rep = zero_rate_check(d.truth, d.matrix);
    ASSERT_EQ(rep.expected.size(), 300u);
    // Binomial noise over 3000 cells: 5 sd is under 0.05.
    EXPECT_LT(rep.max_abs_diff, 0.05);
}

TEST(Synthetic, ConfigValidation) {
    auto cfg = single(10, {1.0, 2.0}, {0.1, 0.1}, 1);
    EXPECT_NO_THROW(cfg.validate());
    EXPECT_EQ(cfg.n_cells(), 10u);
    auto bad = cfg;
    bad.clusters[0].a[1] = -0.5;
    EXPECT_THROW(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.clusters[0].lambda.pop_back();
    EXPECT_THROW(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.nu.values.pop_back();
    EXPECT_THROW(bad.validate(), std::invalid_argument);
    DeskPreset p;
    p.clusters = 0;
    EXPECT_THROW(desk_config(p), std::invalid_argument);
}

TEST(FitClusterParams, SingleClusterReproducesEstimates) {
    DeskPreset p;
    p.genes = 80;
    p.cells = 200;
    p.seed = 3;
    const auto d = generate(desk_config(p), 1);
    const auto est = estimate(d.matrix, EstimatorKind::Average, 1);
    const std::vector<std::uint32_t> clusters(200, 0);
    const auto fitted = fit_cluster_params(d.matrix, clusters, est, 9, 1);
    ASSERT_EQ(fitted.config.clusters.size(), 1u);
    for (std::size_t g = 0; g < 80; ++g) {
        EXPECT_NEAR(fitted.config.clusters[0].lambda[g], est.lambda[g], 1e-12 * (1 + est.lambda[g]));
        EXPECT_GE(fitted.config.clusters[0].a[g], 0.0);
    }
    EXPECT_EQ(fitted.config.nu.values, est.nu);
    EXPECT_EQ(fitted.config.seed, 9u);
    EXPECT_NO_THROW(fitted.config.validate());
}

TEST(FitClusterParams, ClosedLoopRecoversLevels) {
    DeskPreset p;
    p.genes = 300;
    p.cells = 2000;
    p.clusters = 2;
    p.seed = 12;
    const auto d = generate(desk_config(p), 1);
    const auto est = estimate(d.matrix, EstimatorKind::Average, 1);
    const auto fitted = fit_cluster_params(d.matrix, d.truth.cluster_of, est, 1, 1);
    double ss = 0.0;
    std::size_t n = 0;
    for (std::size_t j = 0; j < 2; ++j) {
        for (std::size_t g = 0; g < 300; ++g) {
            const double truth = d.truth.lambda[j][g];
            if (truth < 1.0) continue;
            const double rel = fitted.config.clusters[j].lambda[g] / truth - 1.0;
            ss += rel * rel;
            ++n;
        }
    }
    ASSERT_GT(n, 20u);
    EXPECT_LT(std::sqrt(ss / n), 0.1);
    for (std::size_t j = 0; j < 2; ++j) {
        for (std::size_t g = 0; g < 300; ++g) {
            if (fitted.a_floored[j][g]) {
                EXPECT_EQ(fitted.config.clusters[j].a[g], 0.0);
            }
        }
    }
}

TEST(KeyValue, ParsingAndErrors) {
    const auto kv = KeyValueConfig::parse("# comment\ngenes = 5\n\nname=abc  \nlist = 1, 2.5,3\n");
    EXPECT_EQ(kv.get_uint("genes", 0), 5u);
    EXPECT_EQ(kv.get_string("name", ""), "abc");
    EXPECT_EQ(kv.get_doubles("list"), (std::vector<double>{1.0, 2.5, 3.0}));
    EXPECT_EQ(kv.get_double("missing", 0.25), 0.25);
    EXPECT_FALSE(kv.get("missing").has_value());
    EXPECT_THROW(kv.reject_unknown({"genes", "name"}), InputError);
    EXPECT_NO_THROW(kv.reject_unknown({"genes", "name", "list"}));
    EXPECT_THROW(kv.get_double("name", 0.0), InputError);
    EXPECT_THROW(KeyValueConfig::parse("a=1\na=2\n"), InputError);
    try {
        KeyValueConfig::parse("a=1\nno equals sign\n");
        FAIL();
    } catch (const InputError& e) {
        EXPECT_EQ(e.line(), 2u);
    }
    const auto neg = KeyValueConfig::parse("n=-3\n");
    EXPECT_EQ(neg.get_int("n", 0), -3);
    EXPECT_THROW(neg.get_uint("n", 0), InputError);
}

TEST(KeyValue, SynthConfigFromFile) {
    TempDir dir;
    const auto kv = KeyValueConfig::parse(
        "genes=20\ncells=40\nclusters=2\nseed=5\nlambda_median=1.5\nde_fraction=0\n");
    const auto cfg = synth_config_from(kv);
    EXPECT_EQ(cfg.n_genes(), 20u);
    EXPECT_EQ(cfg.n_cells(), 40u);
    EXPECT_EQ(cfg.clusters.size(), 2u);
    EXPECT_EQ(cfg.seed, 5u);
    // No differential genes: both clusters share levels.
    EXPECT_EQ(cfg.clusters[0].lambda, cfg.clusters[1].lambda);
    EXPECT_THROW(synth_config_from(KeyValueConfig::parse("genes=2\nbogus=1\n")), InputError);

    dir.write("params.csv", "cluster,gene,lambda,a\n0,0,1.0,0.1\n0,1,2.0,0.0\n1,0,0.5,0.2\n1,1,0,0.3\n");
    const auto kv2 = KeyValueConfig::parse("params_file=params.csv\ncells=3,4\nseed=2\n");
    const auto cfg2 = synth_config_from(kv2, dir.path());
    ASSERT_EQ(cfg2.clusters.size(), 2u);
    EXPECT_EQ(cfg2.clusters[1].cells, 4u);
    EXPECT_EQ(cfg2.clusters[0].lambda, (std::vector<double>{1.0, 2.0}));
    EXPECT_EQ(cfg2.clusters[1].a, (std::vector<double>{0.2, 0.3}));
}

TEST(Synthetic, GroundTruthFiles) {
    TempDir dir;
    const auto d = generate(single(3, {1.0}, {0.0}, 1), 1);
    write_ground_truth(d.truth, d.matrix, dir / "t");
    const auto cells = slurp(dir / "t_cells.csv");
    const auto genes = slurp(dir / "t_genes.csv");
    EXPECT_EQ(cells.substr(0, cells.find('\n')), "cell,cluster,nu");
    EXPECT_EQ(genes, "gene,cluster,lambda,a\ngene1,0,1,0\n");
}
