#include <gtest/gtest.h>

#include "sccoex/count_matrix.hpp"
#include "sccoex/error.hpp"
#include "test_util.hpp"

using namespace sccoex;

namespace {

const char* kHeader = "%%MatrixMarket matrix coordinate integer general\n";

std::size_t error_line(const std::filesystem::path& p) {
    try {
        load_matrix_market(p);
    } catch (const InputError& e) {
        return e.line();
    }
    ADD_FAILURE() << "no InputError for " << p;
    return 0;
}

CountMatrix small() {
    const std::vector<std::vector<count_t>> rows{{1, 0, 3}, {0, 0, 0}, {2, 5, 0}};
    return CountMatrix::from_dense(rows);
}

}  // namespace

TEST(CountMatrix, DenseConstructionAndAccess) {
    const auto m = small();
    EXPECT_EQ(m.n_genes(), 3u);
    EXPECT_EQ(m.n_cells(), 3u);
    EXPECT_EQ(m.nnz(), 4u);
    EXPECT_EQ(m.at(0, 2), 3u);
    EXPECT_EQ(m.at(1, 1), 0u);
    EXPECT_EQ(m.gene_ids()[2], "g3");
    EXPECT_EQ(m.cell_ids()[0], "c1");
    const auto r = m.row(2);
    ASSERT_EQ(r.size(), 2u);
    EXPECT_EQ(r.cells[1], 1u);
    EXPECT_EQ(r.counts[1], 5u);
}

TEST(CountMatrix, ConstructorRejectsBrokenInvariants) {
    EXPECT_THROW(CountMatrix({"a", "a"}, {"c"}, {0, 0, 0}, {}, {}), InputError);
    EXPECT_THROW(CountMatrix({"a"}, {"c1", "c2"}, {0, 2}, {1, 0}, {1, 1}), InputError);
    EXPECT_THROW(CountMatrix({"a"}, {"c1"}, {0, 1}, {1}, {1}), InputError);
    EXPECT_THROW(CountMatrix({"a"}, {"c1"}, {0, 1}, {0}, {0}), InputError);
    EXPECT_THROW(CountMatrix({"a"}, {"c1"}, {0, 2}, {0}, {1}), InputError);
}

TEST(CountMatrix, Marginals) {
    const auto mg = marginals(small());
    EXPECT_EQ(mg.grand_total, 11u);
    EXPECT_EQ(mg.genes.row_sum, (std::vector<std::uint64_t>{4, 0, 7}));
    EXPECT_EQ(mg.genes.nonzero_cells, (std::vector<std::uint32_t>{2, 0, 2}));
    EXPECT_EQ(mg.genes.zero_cells, (std::vector<std::uint32_t>{1, 3, 1}));
    EXPECT_EQ(mg.cell_totals, (std::vector<std::uint64_t>{3, 5, 3}));
    EXPECT_EQ(mg.cell_nonzero, (std::vector<std::uint32_t>{2, 1, 1}));
}

TEST(CountMatrix, FilterDropsEmptyGenesAndIsIdempotent) {
    const auto f = filter_genes(small(), 1);
    EXPECT_EQ(f.matrix.n_genes(), 2u);
    EXPECT_EQ(f.kept, (std::vector<std::size_t>{0, 2}));
    EXPECT_FALSE(f.empty);
    EXPECT_EQ(f.matrix.gene_ids()[1], "g3");
    const auto again = filter_genes(f.matrix, 1);
    EXPECT_EQ(again.matrix, f.matrix);

    const auto strict = filter_genes(small(), 5);
    EXPECT_EQ(strict.matrix.n_genes(), 1u);
    const auto none = filter_genes(small(), 100);
    EXPECT_TRUE(none.empty);
    EXPECT_THROW(filter_genes(small(), 0), std::invalid_argument);
}

TEST(CountMatrix, SelectCells) {
    const std::vector<std::size_t> cells{2, 0};
    const auto s = small().select_cells(cells);
    EXPECT_EQ(s.n_cells(), 2u);
    EXPECT_EQ(s.cell_ids()[0], "c3");
    EXPECT_EQ(s.at(0, 0), 3u);
    EXPECT_EQ(s.at(0, 1), 1u);
    EXPECT_EQ(s.at(2, 0), 0u);
    EXPECT_EQ(s.at(2, 1), 2u);
}

TEST(MatrixMarket, RoundTripKeepsIds) {
    TempDir dir;
    const std::vector<std::vector<count_t>> rows{{1, 0, 3}, {0, 7, 0}};
    const auto m = CountMatrix::from_dense(rows, {"ACTB", "GAPDH"}, {"AAAC", "AAAG", "TTTC"});
    write_matrix_market(m, dir / "m.mtx");
    EXPECT_EQ(load_matrix_market(dir / "m.mtx"), m);
    write_dense_tsv(m, dir / "m.tsv");
    EXPECT_EQ(load_dense_tsv(dir / "m.tsv"), m);
    EXPECT_EQ(load_matrix(dir / "m.tsv", format_from_path(dir / "m.tsv")), m);
}

TEST(MatrixMarket, ParsesPlainFileWithoutIds) {
    TempDir dir;
    const auto p = dir.write("a.mtx", std::string(kHeader) + "% a comment\n2 3 3\n1 1 4\n2 3 1\n1 2 0\n");
    const auto m = load_matrix_market(p);
    EXPECT_EQ(m.n_genes(), 2u);
    EXPECT_EQ(m.n_cells(), 3u);
    EXPECT_EQ(m.nnz(), 2u);  // explicit zero skipped
    EXPECT_EQ(m.at(0, 0), 4u);
    EXPECT_EQ(m.at(1, 2), 1u);
    EXPECT_EQ(m.gene_ids()[1], "g2");
}

TEST(MatrixMarket, ErrorsCarryLineNumbers) {
    TempDir dir;
    const std::string h = kHeader;
    EXPECT_EQ(error_line(dir.write("h.mtx", "%%MatrixMarket matrix array real general\n1 1\n1\n")), 1u);
    EXPECT_EQ(error_line(dir.write("s.mtx", h + "2 x 1\n")), 2u);
    EXPECT_EQ(error_line(dir.write("n.mtx", h + "2 2 2\n1 1 3\n2 2 -1\n")), 4u);
    EXPECT_EQ(error_line(dir.write("f.mtx", h + "2 2 1\n1 1 2.5\n")), 3u);
    EXPECT_EQ(error_line(dir.write("r.mtx", h + "2 2 1\n3 1 2\n")), 3u);
    EXPECT_EQ(error_line(dir.write("d.mtx", h + "2 2 3\n1 1 2\n2 2 1\n1 1 5\n")), 5u);
    EXPECT_GT(error_line(dir.write("c.mtx", h + "2 2 3\n1 1 2\n")), 0u);
    EXPECT_GT(error_line(dir.write("e.mtx", h + "2 2 1\n1 1 2\n2 2 2\n")), 0u);
    EXPECT_THROW(load_matrix_market(dir / "missing.mtx"), InputError);
}

TEST(DenseTsv, HeaderWithAndWithoutCornerLabel) {
    TempDir dir;
    const auto a = load_dense_tsv(dir.write("a.tsv", "gene\tc1\tc2\nx\t1\t0\ny\t0\t2\n"));
    const auto b = load_dense_tsv(dir.write("b.tsv", "c1\tc2\nx\t1\t0\ny\t0\t2\n"));
    EXPECT_EQ(a, b);
    EXPECT_EQ(a.cell_ids()[1], "c2");
    EXPECT_EQ(a.at(1, 1), 2u);
    const auto ws = load_dense_tsv(dir.write("w.tsv", "c1 c2\nx 1 0\ny 0 2\n"));
    EXPECT_EQ(ws, a);
}

TEST(DenseTsv, RejectsRaggedAndNonIntegerRows) {
    TempDir dir;
    try {
        load_dense_tsv(dir.write("r.tsv", "gene\tc1\tc2\nx\t1\t0\ny\t0\n"));
        FAIL() << "ragged row accepted";
    } catch (const InputError& e) {
        EXPECT_EQ(e.line(), 3u);
    }
    EXPECT_THROW(load_dense_tsv(dir.write("f.tsv", "gene\tc1\nx\t1.5\n")), InputError);
    EXPECT_THROW(load_dense_tsv(dir.write("n.tsv", "gene\tc1\nx\t-1\n")), InputError);
}

TEST(MatrixFormat, FromExtension) {
    EXPECT_EQ(format_from_path("a/b.mtx"), MatrixFormat::MatrixMarket);
    EXPECT_EQ(format_from_path("b.tsv"), MatrixFormat::DenseTsv);
    EXPECT_EQ(format_from_path("b.txt"), MatrixFormat::DenseTsv);
    EXPECT_THROW(format_from_path("b.h5"), InputError);
}

TEST(MatrixMarket, BundledFixtureLoads) {
    const auto m = load_matrix_market(std::filesystem::path(SCCOEX_TEST_DATA) / "fixture_50x100.mtx");
    EXPECT_EQ(m.n_genes(), 50u);
    EXPECT_EQ(m.n_cells(), 100u);
    EXPECT_EQ(m.gene_ids().front(), "gene1");
}
