#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "sccoex/count_matrix.hpp"
#include "sccoex/kernels.hpp"
#include "sccoex/zero_model.hpp"

namespace sccoex {

// Cells of a 2x2 co-expression table are ordered (1,1), (1,0), (0,1), (0,0):
// first index for gene 1 (1 = nonzero count), second for gene 2.
enum TableCell : std::size_t { k11 = 0, k10 = 1, k01 = 2, k00 = 3 };

struct CoexTable {
    std::array<std::uint32_t, 4> observed{};
    std::array<double, 4> expected{};
    std::uint32_t m = 0;
};

struct CoexResult {
    double w = 0.0;        ///< sum (O - E)^2 / max(1, E)
    double r = 0.0;        ///< signed co-expression index, r^2 == w
    double p_value = 1.0;  ///< chi-square(1) survival of w
};

/// Observed table from zero/nonzero status; g1 == g2 is rejected.
std::array<std::uint32_t, 4> observed_table(const CountMatrix& m, std::size_t g1, std::size_t g2);

/// Expected table under independence from the chances of expression.
std::array<double, 4> expected_table(const RhoMatrix& rho, std::size_t g1, std::size_t g2);

/// Classical product-of-marginals expectation, for comparison only.
/// `row1` / `col1` are the nonzero marginals of gene 1 / gene 2.
std::array<double, 4> classical_expected(double row1, double row0, double col1, double col0,
                                         double m);

CoexResult coex_stats(const CoexTable& table);

/// observed_table + expected_table for one pair.
CoexTable coex_table(const CountMatrix& m, const RhoMatrix& rho, std::size_t g1, std::size_t g2);

// Pieces shared by the per-pair functions and the all-pairs engine, so that
// both produce identical bits.

/// Sum of a gene's chances of expression (its expected nonzero cells).
double expression_mass(std::span<const double> rho_row);

/// Expected table from the joint term and the two marginal masses.
std::array<double, 4> complete_expected(double e11, double mass1, double mass2, double m);

/// Observed table from the joint count and the two nonzero marginals.
std::array<std::uint32_t, 4> complete_observed(std::uint32_t o11, std::uint32_t nz1,
                                               std::uint32_t nz2, std::uint32_t m);

// All-pairs engine ------------------------------------------------------------

struct PairRecord {
    std::uint32_t g1 = 0;
    std::uint32_t g2 = 0;
    CoexTable table;
    CoexResult result;
};

/// Which tile a batch came from. Tiles are (row_tile, col_tile) with
/// row_tile <= col_tile; `col_tiles` is the number of gene tiles.
struct TileInfo {
    std::size_t row_tile = 0;
    std::size_t col_tile = 0;
    std::size_t tiles = 0;
};

/// Receives result batches, possibly from several worker threads at once.
class PairSink {
public:
    virtual ~PairSink() = default;
    virtual void consume(std::span<const PairRecord> batch, const TileInfo& tile) = 0;
};

struct EngineOptions {
    std::size_t tile = 256;  ///< genes per tile side
    unsigned threads = 0;    ///< 0 = all hardware threads
    const kernels::KernelTable* kernels = nullptr;  ///< null = kernels::best()
};

/// Thrown when the sink fails; the sink has received `pairs_emitted` pairs.
class PairwiseAborted : public std::runtime_error {
public:
    PairwiseAborted(const std::string& what, std::uint64_t emitted)
        : std::runtime_error(what), pairs_emitted(emitted) {}
    std::uint64_t pairs_emitted;
};

/// Every unordered pair g1 < g2 exactly once. Per-pair results are identical
/// to coex_stats(coex_table(m, rho, g1, g2)); emission order is unspecified.
/// Returns the number of pairs emitted.
std::uint64_t pairwise_coex(const CountMatrix& m, const RhoMatrix& rho, PairSink& sink,
                            const EngineOptions& options = {});

/// The explicit-list variant: each (g1, g2) pair with g1 != g2, in list order.
std::uint64_t pairwise_coex_list(const CountMatrix& m, const RhoMatrix& rho,
                                 std::span<const std::pair<std::uint32_t, std::uint32_t>> pairs,
                                 PairSink& sink, const EngineOptions& options = {});

/// Gene zero/nonzero status packed 64 cells per word, one padded row per gene.
struct ExpressionBits {
    std::size_t words = 0;
    std::vector<std::uint64_t> bits;

    explicit ExpressionBits(const CountMatrix& m);
    const std::uint64_t* row(std::size_t g) const { return bits.data() + g * words; }
};

}  // namespace sccoex
