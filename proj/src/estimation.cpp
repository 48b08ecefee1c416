#include "sccoex/estimation.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "sccoex/error.hpp"
#include "sccoex/parallel.hpp"

namespace sccoex {

std::string_view to_string(EstimatorKind kind) {
    return kind == EstimatorKind::Average ? "average" : "sqrt";
}

EstimatorKind parse_estimator(std::string_view name) {
    if (name == "average") return EstimatorKind::Average;
    if (name == "sqrt") return EstimatorKind::SqrtCorrected;
    throw std::invalid_argument("unknown estimator '" + std::string(name) +
                                "' (expected average|sqrt)");
}

ModelParams estimate_average(const CountMatrix& m) {
    const auto marg = marginals(m);
    if (marg.grand_total == 0) throw InputError("estimate_average: all-zero matrix");
    const auto n = m.n_genes();
    const auto cells = m.n_cells();
    ModelParams out;
    out.kind = EstimatorKind::Average;
    out.lambda.resize(n);
    out.nu.resize(cells);
    out.lambda_clamped.assign(n, 0);
    out.nu_clamped.assign(cells, 0);
    const double inv_m = 1.0 / static_cast<double>(cells);
    for (std::size_t g = 0; g < n; ++g) {
        out.lambda[g] = static_cast<double>(marg.genes.row_sum[g]) * inv_m;
    }
    // (total_c / n) / (grand / (n m)) = total_c * m / grand
    const double scale = static_cast<double>(cells) / static_cast<double>(marg.grand_total);
    for (std::size_t c = 0; c < cells; ++c) {
        out.nu[c] = static_cast<double>(marg.cell_totals[c]) * scale;
    }
    return out;
}

double sqrt_corrected_level(double mean_sqrt, double biased_var, const SqrtPoissonEval& eval) {
    const double base = psi(mean_sqrt, eval);
    const double curvature = psi_second(mean_sqrt, eval);
    return base + 0.5 * curvature * (biased_var - base + mean_sqrt * mean_sqrt);
}

ModelParams estimate_sqrt(const CountMatrix& m, const SqrtPoissonEval& eval, unsigned threads) {
    eval.validate();
    const auto n = m.n_genes();
    const auto cells = m.n_cells();
    if (n < 2 || cells < 2) {
        throw InputError("estimate_sqrt: needs at least 2 genes and 2 cells");
    }
    const auto marg = marginals(m);
    if (marg.grand_total == 0) throw InputError("estimate_sqrt: all-zero matrix");

    ModelParams out;
    out.kind = EstimatorKind::SqrtCorrected;
    out.lambda.assign(n, 0.0);
    out.nu.assign(cells, 0.0);
    out.lambda_clamped.assign(n, 0);
    out.nu_clamped.assign(cells, 0);

    // Rows. Two passes over the stored entries; the implicit zeros add
    // (m - nnz) * mean^2 to the centered sum of squares.
    const double md = static_cast<double>(cells);
    parallel_for(n, threads, [&](std::size_t g) {
        const auto r = m.row(g);
        double sum = 0.0;
        for (auto v : r.counts) sum += std::sqrt(static_cast<double>(v));
        const double mean = sum / md;
        double ss = static_cast<double>(cells - r.size()) * mean * mean;
        for (auto v : r.counts) {
            const double d = std::sqrt(static_cast<double>(v)) - mean;
            ss += d * d;
        }
        double level = sqrt_corrected_level(mean, ss / md, eval);
        if (level < 0.0) {
            level = 0.0;
            out.lambda_clamped[g] = 1;
        }
        out.lambda[g] = level;
    });

    // Columns, accumulated in gene order for a fixed reduction order.
    const double nd = static_cast<double>(n);
    std::vector<double> col_mean(cells, 0.0);
    for (std::size_t g = 0; g < n; ++g) {
        const auto r = m.row(g);
        for (std::size_t k = 0; k < r.size(); ++k) {
            col_mean[r.cells[k]] += std::sqrt(static_cast<double>(r.counts[k]));
        }
    }
    for (auto& v : col_mean) v /= nd;
    std::vector<double> col_ss(cells, 0.0);
    for (std::size_t c = 0; c < cells; ++c) {
        col_ss[c] = static_cast<double>(n - marg.cell_nonzero[c]) * col_mean[c] * col_mean[c];
    }
    for (std::size_t g = 0; g < n; ++g) {
        const auto r = m.row(g);
        for (std::size_t k = 0; k < r.size(); ++k) {
            const double d = std::sqrt(static_cast<double>(r.counts[k])) - col_mean[r.cells[k]];
            col_ss[r.cells[k]] += d * d;
        }
    }
    parallel_for(cells, threads, [&](std::size_t c) {
        double level = sqrt_corrected_level(col_mean[c], col_ss[c] / nd, eval);
        if (level < 0.0) {
            level = 0.0;
            out.nu_clamped[c] = 1;
        }
        out.nu[c] = level;
    });

    double mean_nu = 0.0;
    for (auto v : out.nu) mean_nu += v;
    mean_nu /= md;
    if (!(mean_nu > 0.0)) throw NumericError("estimate_sqrt: degenerate cell efficiencies");
    for (auto& v : out.nu) v /= mean_nu;
    return out;
}

ModelParams estimate(const CountMatrix& m, EstimatorKind kind, unsigned threads) {
    return kind == EstimatorKind::Average ? estimate_average(m) : estimate_sqrt(m, {}, threads);
}

}  // namespace sccoex
