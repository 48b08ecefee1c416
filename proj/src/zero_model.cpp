#include "sccoex/zero_model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

#include "sccoex/error.hpp"
#include "sccoex/parallel.hpp"

#include "binary_io.hpp"

namespace sccoex {

using detail::get_le;
using detail::put_le;

double f_a(double a, double x) {
    if (a <= 0.0) return (1.0 - a) * x;
    const double ax = a * x;
    if (ax > 1e300) return (std::log(a) + std::log(x + 1.0 / a)) / a;
    return std::log1p(ax) / a;
}

double expected_zeros(double a, std::span<const double> mu_row) {
    double s = 0.0;
    for (double mu : mu_row) s += std::exp(-f_a(a, mu));
    return s;
}

DispersionSolution solve_dispersion(std::span<const double> mu_row, std::uint32_t observed_zeros,
                                    double rel_tol) {
    const auto m = mu_row.size();
    if (observed_zeros >= m) {
        throw std::invalid_argument("solve_dispersion: observed zeros must be < number of cells");
    }
    bool any_positive = false;
    for (double mu : mu_row) {
        if (mu < 0.0 || !std::isfinite(mu)) {
            throw std::invalid_argument("solve_dispersion: expected counts must be finite and >= 0");
        }
        any_positive = any_positive || mu > 0.0;
    }
    if (!any_positive) throw std::invalid_argument("solve_dispersion: all expected counts are 0");

    const double target = observed_zeros;
    const double tol = rel_tol * static_cast<double>(m);
    DispersionSolution sol;
    auto residual = [&](double a) {
        ++sol.iterations;
        return expected_zeros(a, mu_row) - target;
    };

    // The zero curve runs from #{mu == 0} (a -> -inf) to m (a -> +inf).
    double lo = -50.0, hi = 50.0;
    double r_lo = residual(lo), r_hi = residual(hi);
    while (r_lo > 0.0) {
        if (lo < -1e300) throw NumericError("solve_dispersion: cannot bracket from below");
        hi = lo;
        r_hi = r_lo;
        lo *= 2.0;
        r_lo = residual(lo);
    }
    while (r_hi < 0.0) {
        if (hi > 1e300) throw NumericError("solve_dispersion: cannot bracket from above");
        lo = hi;
        r_lo = r_hi;
        hi *= 2.0;
        r_hi = residual(hi);
    }
    if (std::abs(r_lo) <= tol) return {lo, r_lo, sol.iterations};
    if (std::abs(r_hi) <= tol) return {hi, r_hi, sol.iterations};

    // Bisection, accelerated by Illinois-weighted false position while the
    // interpolated point stays strictly inside the bracket.
    int side = 0;
    for (int step = 0; step < 200; ++step) {
        double mid = (lo * r_hi - hi * r_lo) / (r_hi - r_lo);
        if (!(mid > lo && mid < hi) || step % 4 == 3) mid = 0.5 * (lo + hi);
        const double r = residual(mid);
        if (std::abs(r) <= tol) return {mid, r, sol.iterations};
        if (r < 0.0) {
            lo = mid;
            r_lo = r;
            if (side == -1) r_hi *= 0.5;
            side = -1;
        } else {
            hi = mid;
            r_hi = r;
            if (side == 1) r_lo *= 0.5;
            side = 1;
        }
        if (lo == hi || std::nextafter(lo, hi) == hi) {
            // Bracket collapsed to adjacent doubles; the root is representable
            // no better than this.
            const double a = std::abs(r_lo) < std::abs(r_hi) ? lo : hi;
            const double r = expected_zeros(a, mu_row) - target;
            if (std::abs(r) <= tol) return {a, r, sol.iterations};
            break;
        }
    }
    throw NumericError("solve_dispersion: no convergence within 200 steps");
}

DispersionFit fit_dispersion(const CountMatrix& m, const ModelParams& params, double rel_tol,
                             unsigned threads) {
    const auto n = m.n_genes();
    const auto cells = m.n_cells();
    if (params.lambda.size() != n || params.nu.size() != cells) {
        throw std::invalid_argument("fit_dispersion: parameters do not match the matrix");
    }
    DispersionFit fit;
    fit.a.assign(n, 0.0);
    fit.residual.assign(n, 0.0);
    fit.fitted.assign(n, 0);
    fit.mu_source = params.kind;
    fit.rel_tol = rel_tol;
    parallel_for(n, threads, [&](std::size_t g) {
        const auto zeros = static_cast<std::uint32_t>(cells - m.row(g).size());
        if (zeros == cells || !(params.lambda[g] > 0.0)) return;
        std::vector<double> mu(cells);
        for (std::size_t c = 0; c < cells; ++c) mu[c] = params.nu[c] * params.lambda[g];
        const auto sol = solve_dispersion(mu, zeros, rel_tol);
        fit.a[g] = sol.a;
        fit.residual[g] = sol.residual;
        fit.fitted[g] = 1;
    });
    return fit;
}

RhoMatrix::RhoMatrix(std::size_t n_genes, std::size_t n_cells, std::vector<double> data)
    : n_genes_(n_genes), n_cells_(n_cells), data_(std::move(data)) {
    if (data_.size() != n_genes * n_cells) throw std::invalid_argument("RhoMatrix: size mismatch");
}

void chance_of_expression_row(const ModelParams& params, const DispersionFit& fit,
                              std::size_t gene, std::span<double> out) {
    if (out.size() != params.nu.size()) throw std::invalid_argument("rho row: size mismatch");
    const double a = fit.a[gene];
    const double lambda = params.lambda[gene];
    for (std::size_t c = 0; c < out.size(); ++c) {
        out[c] = -std::expm1(-f_a(a, params.nu[c] * lambda));
    }
}

RhoMatrix chance_of_expression(const ModelParams& params, const DispersionFit& fit,
                               unsigned threads) {
    if (params.lambda.size() != fit.n_genes()) {
        throw std::invalid_argument("chance_of_expression: fit and parameters differ in size");
    }
    RhoMatrix rho(params.lambda.size(), params.nu.size());
    parallel_for(rho.n_genes(), threads,
                 [&](std::size_t g) { chance_of_expression_row(params, fit, g, rho.row(g)); });
    return rho;
}

// Binary rho ----------------------------------------------------------------

namespace {

constexpr char kRhoMagic[8] = {'S', 'C', 'R', 'H', 'O', '\0', '\0', '\1'};

}  // namespace

void write_rho_binary(const RhoMatrix& rho, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write '" + path.string() + "'");
    out.write(kRhoMagic, sizeof(kRhoMagic));
    put_le(out, static_cast<std::uint32_t>(rho.n_genes()));
    put_le(out, static_cast<std::uint32_t>(rho.n_cells()));
    for (double v : rho.data()) put_le(out, v);
    if (!out) throw InputError("write failed for '" + path.string() + "'");
}

RhoMatrix read_rho_binary(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path.string() + "'");
    char magic[8];
    if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kRhoMagic, sizeof(magic)) != 0) {
        throw InputError("'" + path.string() + "' is not a rho matrix file");
    }
    const auto n = get_le<std::uint32_t>(in, "rho file");
    const auto m = get_le<std::uint32_t>(in, "rho file");
    std::vector<double> data(static_cast<std::size_t>(n) * m);
    for (auto& v : data) v = get_le<double>(in, "rho file");
    return RhoMatrix(n, m, std::move(data));
}

}  // namespace sccoex
