#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "sccoex/coexpression.hpp"
#include "sccoex/count_matrix.hpp"
#include "sccoex/zero_model.hpp"

namespace sccoex {

// Differential expression -----------------------------------------------------

/// Assignment of every cell to one of k >= 2 non-empty conditions.
struct ConditionPartition {
    std::vector<std::uint32_t> assignment;  ///< 0-based condition per cell
    std::vector<std::string> labels;        ///< label of each condition

    std::size_t k() const noexcept { return labels.size(); }

    /// Throws InputError unless the partition covers `n_cells` cells with
    /// k >= 2 and no empty condition.
    void validate(std::size_t n_cells) const;
};

/// Two-column TSV (cell id, condition label). Conditions are numbered in
/// order of first appearance; every cell of `m` must be listed exactly once.
ConditionPartition load_partition(const std::filesystem::path& path, const CountMatrix& m);

struct DiffExpResult {
    double w = 0.0;
    int dof = 0;
    double p_value = 1.0;
    std::vector<std::uint32_t> observed_nonzero;  ///< per condition
    std::vector<std::uint32_t> observed_zero;
    std::vector<double> expected_nonzero;
    std::vector<double> expected_zero;
};

/// Expression/condition 2 x k table test, chi-square with k - 1 dof.
DiffExpResult diff_expression(const CountMatrix& m, const RhoMatrix& rho,
                              const ConditionPartition& part, std::size_t gene);

// Global differentiation index -------------------------------------------------

struct GdiOptions {
    double alpha = 1e-3;   ///< S_g is the (1 - alpha) nearest-rank percentile
    double floor = -10.0;  ///< reported GDI when S_g == 0
};

struct GdiScores {
    std::vector<double> s;
    std::vector<double> gdi;
};

/// log(-log(1 - F_chi2(1)(s))), evaluated through the log-survival so that it
/// stays finite and increasing far into the tail. Returns `floor` for s == 0.
double gdi_from_s(double s, double floor = -10.0);

/// 1-based nearest rank of the (1 - alpha) percentile among `count` values.
std::size_t percentile_rank(double alpha, std::size_t count);

/// Streams R values of all unordered pairs and keeps, per gene, the largest
/// (count - rank + 1) squared values in a bounded min-heap. Thread-safe:
/// genes are sharded over mutex-protected heaps.
class GdiAccumulator : public PairSink {
public:
    GdiAccumulator(std::size_t n_genes, GdiOptions options = {});

    void add(std::uint32_t g1, std::uint32_t g2, double r);
    void consume(std::span<const PairRecord> batch, const TileInfo& tile) override;

    /// Throws InputError when some gene did not receive exactly n - 1 values.
    GdiScores finalize() const;

private:
    void push(std::uint32_t gene, double r2);

    static constexpr std::size_t kShards = 64;
    std::size_t n_genes_;
    GdiOptions options_;
    std::size_t keep_;
    std::vector<std::vector<double>> heaps_;
    std::vector<std::uint32_t> seen_;
    std::vector<std::mutex> locks_;
};

struct GeneR {
    std::uint32_t g1;
    std::uint32_t g2;
    double r;
};

/// Convenience wrapper around GdiAccumulator for an in-memory stream.
GdiScores gdi_scores(std::span<const GeneR> results, std::size_t n_genes, GdiOptions options = {});

/// Flags genes with S_g above the chi-square(1) upper `quantile` point.
std::vector<std::uint8_t> gdi_threshold_test(const GdiScores& scores, double quantile = 1e-4);

}  // namespace sccoex
