#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace sccoex {

using count_t = std::uint32_t;
using index_t = std::uint32_t;

/// Genes x cells read counts, stored sparse by gene row (CSR).
///
/// Only strictly positive counts are stored; an absent entry is exactly zero.
/// Cell indices inside a row are strictly increasing. Instances are immutable
/// once built and may be shared read-only across threads.
class CountMatrix {
public:
    struct Row {
        std::span<const index_t> cells;
        std::span<const count_t> counts;

        std::size_t size() const noexcept { return cells.size(); }
    };

    CountMatrix() = default;

    /// Validating constructor. Throws InputError on any broken invariant
    /// (duplicate ids, unsorted or out-of-range cells, stored zeros).
    CountMatrix(std::vector<std::string> gene_ids, std::vector<std::string> cell_ids,
                std::vector<std::size_t> row_offsets, std::vector<index_t> cells,
                std::vector<count_t> counts);

    /// Dense row-major construction, mostly for tests and small fixtures.
    /// Empty id lists are replaced by generated ids ("g1".., "c1"..).
    static CountMatrix from_dense(std::span<const std::vector<count_t>> rows,
                                  std::vector<std::string> gene_ids = {},
                                  std::vector<std::string> cell_ids = {});

    std::size_t n_genes() const noexcept { return gene_ids_.size(); }
    std::size_t n_cells() const noexcept { return cell_ids_.size(); }
    std::size_t nnz() const noexcept { return counts_.size(); }

    Row row(std::size_t gene) const;
    count_t at(std::size_t gene, std::size_t cell) const;

    const std::vector<std::string>& gene_ids() const noexcept { return gene_ids_; }
    const std::vector<std::string>& cell_ids() const noexcept { return cell_ids_; }

    std::span<const std::size_t> row_offsets() const noexcept { return row_offsets_; }
    std::span<const index_t> cell_indices() const noexcept { return cells_; }
    std::span<const count_t> counts() const noexcept { return counts_; }

    /// Sub-matrix restricted to the given cells (in the given order).
    CountMatrix select_cells(std::span<const std::size_t> cells) const;

    friend bool operator==(const CountMatrix&, const CountMatrix&) = default;

private:
    std::vector<std::string> gene_ids_;
    std::vector<std::string> cell_ids_;
    std::vector<std::size_t> row_offsets_{0};
    std::vector<index_t> cells_;
    std::vector<count_t> counts_;
};

struct GeneMarginals {
    std::vector<std::uint64_t> row_sum;
    std::vector<std::uint32_t> nonzero_cells;
    std::vector<std::uint32_t> zero_cells;
};

struct Marginals {
    GeneMarginals genes;
    std::vector<std::uint64_t> cell_totals;
    std::vector<std::uint32_t> cell_nonzero;
    std::uint64_t grand_total = 0;
};

Marginals marginals(const CountMatrix& m);

struct FilterResult {
    CountMatrix matrix;
    std::vector<std::size_t> kept;  ///< original row index of every kept gene
    bool empty = false;             ///< warning: no gene survived the filter
};

/// Drops genes whose total count is below `min_total` (which must be >= 1).
FilterResult filter_genes(const CountMatrix& m, std::uint64_t min_total);

// I/O -----------------------------------------------------------------------

enum class MatrixFormat { MatrixMarket, DenseTsv };

/// Picks the format from the extension: ".mtx" is MatrixMarket, ".tsv"/".txt"
/// dense. Throws InputError for anything else.
MatrixFormat format_from_path(const std::filesystem::path& path);

/// Coordinate integer MatrixMarket, 1-based. Duplicate coordinates, negative
/// values and out-of-range indices are rejected with the line number.
/// Optional "% gene <id>" / "% cell <id>" comment lines carry identifiers.
CountMatrix load_matrix_market(const std::filesystem::path& path);
CountMatrix load_dense_tsv(const std::filesystem::path& path);
CountMatrix load_matrix(const std::filesystem::path& path, MatrixFormat format);

void write_matrix_market(const CountMatrix& m, const std::filesystem::path& path);
void write_dense_tsv(const CountMatrix& m, const std::filesystem::path& path);
void write_matrix(const CountMatrix& m, const std::filesystem::path& path, MatrixFormat format);

}  // namespace sccoex
