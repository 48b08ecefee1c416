#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "sccoex/count_matrix.hpp"
#include "sccoex/estimation.hpp"

namespace sccoex {

/// The zero-probability model family: log(1 + a x) / a for a > 0 and
/// (1 - a) x for a <= 0. Continuous in a, f_a(0) = 0, f_a'(0) = 1.
double f_a(double a, double x);

/// Sum over cells of exp(-f_a(mu)): the expected number of zero counts.
/// Strictly increasing in a whenever some mu > 0.
double expected_zeros(double a, std::span<const double> mu_row);

struct DispersionSolution {
    double a = 0.0;
    double residual = 0.0;  ///< expected_zeros(a) - observed
    int iterations = 0;
};

/// Finds the unique a with expected_zeros(a, mu_row) == observed_zeros, to
/// |residual| <= rel_tol * m. Requires some mu > 0 and observed_zeros < m.
DispersionSolution solve_dispersion(std::span<const double> mu_row, std::uint32_t observed_zeros,
                                    double rel_tol = 1e-8);

struct DispersionFit {
    std::vector<double> a;
    std::vector<double> residual;
    std::vector<std::uint8_t> fitted;  ///< 0 for genes without any positive expected count
    EstimatorKind mu_source = EstimatorKind::Average;
    double rel_tol = 1e-8;

    std::size_t n_genes() const noexcept { return a.size(); }
};

/// One solve per gene against its observed zero count, mu = nu[c] * lambda[g].
DispersionFit fit_dispersion(const CountMatrix& m, const ModelParams& params,
                             double rel_tol = 1e-8, unsigned threads = 1);

/// Dense genes x cells matrix of chances of expression.
class RhoMatrix {
public:
    RhoMatrix() = default;
    RhoMatrix(std::size_t n_genes, std::size_t n_cells)
        : n_genes_(n_genes), n_cells_(n_cells), data_(n_genes * n_cells, 0.0) {}
    RhoMatrix(std::size_t n_genes, std::size_t n_cells, std::vector<double> data);

    std::size_t n_genes() const noexcept { return n_genes_; }
    std::size_t n_cells() const noexcept { return n_cells_; }

    std::span<const double> row(std::size_t g) const {
        return std::span(data_).subspan(g * n_cells_, n_cells_);
    }
    std::span<double> row(std::size_t g) { return std::span(data_).subspan(g * n_cells_, n_cells_); }
    double at(std::size_t g, std::size_t c) const { return data_[g * n_cells_ + c]; }
    std::span<const double> data() const noexcept { return data_; }

    friend bool operator==(const RhoMatrix&, const RhoMatrix&) = default;

private:
    std::size_t n_genes_ = 0;
    std::size_t n_cells_ = 0;
    std::vector<double> data_;
};

/// rho = 1 - exp(-f_a(mu)) for a single gene, written into `out` (size m).
/// This is the on-demand path for callers that cannot hold the dense matrix.
void chance_of_expression_row(const ModelParams& params, const DispersionFit& fit,
                              std::size_t gene, std::span<double> out);

RhoMatrix chance_of_expression(const ModelParams& params, const DispersionFit& fit,
                               unsigned threads = 1);

/// Binary layout: 8-byte magic "SCRHO\0\0\1", uint32 n, uint32 m (little
/// endian), then n*m little-endian IEEE doubles, row-major by gene.
void write_rho_binary(const RhoMatrix& rho, const std::filesystem::path& path);
RhoMatrix read_rho_binary(const std::filesystem::path& path);

}  // namespace sccoex
