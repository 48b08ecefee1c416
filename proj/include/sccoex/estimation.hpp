#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "sccoex/count_matrix.hpp"
#include "sccoex/sqrt_poisson.hpp"

namespace sccoex {

enum class EstimatorKind { Average, SqrtCorrected };

std::string_view to_string(EstimatorKind kind);
/// Accepts "average" and "sqrt"; throws std::invalid_argument otherwise.
EstimatorKind parse_estimator(std::string_view name);

/// Per-cell efficiencies (mean exactly 1 up to rounding) and per-gene
/// expression levels. The expected read count is mu(g, c) = nu[c] * lambda[g].
struct ModelParams {
    std::vector<double> nu;
    std::vector<double> lambda;
    EstimatorKind kind = EstimatorKind::Average;
    std::vector<std::uint8_t> lambda_clamped;  ///< 1 where a negative estimate was set to 0
    std::vector<std::uint8_t> nu_clamped;

    double mu(std::size_t gene, std::size_t cell) const { return nu[cell] * lambda[gene]; }
};

/// Ratios of integer marginals: lambda = row mean, nu = column mean / grand mean.
/// Throws InputError for an all-zero matrix.
ModelParams estimate_average(const CountMatrix& m);

/// Square-root estimators: second-order correction around psi of the mean
/// square-root count, rows for lambda and columns for nu. Needs at least two
/// genes and two cells.
ModelParams estimate_sqrt(const CountMatrix& m, const SqrtPoissonEval& eval = {},
                          unsigned threads = 1);

ModelParams estimate(const CountMatrix& m, EstimatorKind kind, unsigned threads = 1);

/// The corrected estimate from the mean and biased variance of square-root
/// counts: psi(X) + psi''(X)/2 * (var - psi(X) + X^2).
double sqrt_corrected_level(double mean_sqrt, double biased_var, const SqrtPoissonEval& eval = {});

inline double mu(const ModelParams& p, std::size_t gene, std::size_t cell) {
    return p.mu(gene, cell);
}

}  // namespace sccoex
