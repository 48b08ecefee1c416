#include "sccoex/sqrt_poisson.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "sccoex/error.hpp"

namespace sccoex {

namespace {

void check_arg(double x, const char* fn) {
    if (!(x >= 0.0) || std::isinf(x)) {
        throw std::invalid_argument(std::string(fn) + ": argument must be finite and >= 0");
    }
}

// Visits (k, w_k) with w_k proportional to the Poisson(x) pmf, normalized to
// 1 at the mode, walking outward from the mode. Returns the sum of the visited
// weights, so that sum(f(k) w_k) / total is E[f(K)] without any exp/lgamma
// cancellation at large x.
template <class Visit>
double visit_poisson_weights(double x, double cutoff, Visit&& visit) {
    const double mode = std::floor(x);
    double total = 0.0;
    double w = 1.0;
    for (double k = mode;; k += 1.0) {
        visit(k, w);
        total += w;
        w *= x / (k + 1.0);
        if (k + 1.0 > x && w < cutoff) break;
    }
    w = 1.0;
    for (double k = mode; k > 0.0; k -= 1.0) {
        w *= k / x;
        if (w < cutoff) break;
        visit(k - 1.0, w);
        total += w;
    }
    return total;
}

// sqrt(k+1) - sqrt(k) and its forward difference, rationalized.
inline double diff1(double sk, double sk1) { return 1.0 / (sk1 + sk); }
inline double diff2(double sk, double sk1, double sk2) {
    return -2.0 / ((sk2 + sk) * (sk2 + sk1) * (sk1 + sk));
}

// Large-x expansions of E[sqrt K] and its derivatives.
double phi_asymptotic(double x) {
    const double s = std::sqrt(x);
    return s - 1.0 / (8.0 * s) - 7.0 / (128.0 * x * s);
}

PhiDerivatives phi_derivatives_asymptotic(double x) {
    const double s = std::sqrt(x);
    return {phi_asymptotic(x), 1.0 / (2.0 * s) + 1.0 / (16.0 * x * s) + 21.0 / (256.0 * x * x * s),
            -1.0 / (4.0 * x * s) - 3.0 / (32.0 * x * x * s)};
}

}  // namespace

void SqrtPoissonEval::validate() const {
    if (!(series_rel_tol > 0.0 && series_rel_tol <= 1e-10)) {
        throw std::invalid_argument("series_rel_tol must lie in (0, 1e-10]");
    }
    if (!(asymptotic_switch >= 10.0)) {
        throw std::invalid_argument("asymptotic_switch must be >= 10");
    }
    if (!(newton_tol > 0.0 && newton_tol <= 1e-10)) {
        throw std::invalid_argument("newton_tol must lie in (0, 1e-10]");
    }
}

double tau(double x, const SqrtPoissonEval& eval) {
    check_arg(x, "tau");
    eval.validate();
    if (x == 0.0) return 0.0;
    if (x >= eval.asymptotic_switch) return 0.25 + 3.0 / (32.0 * x);
    // Var(sqrt K) = E[(sqrt K - sqrt x)^2] - (E[sqrt K] - sqrt x)^2, both terms O(1).
    const double sx = std::sqrt(x);
    double sq = 0.0, lin = 0.0;
    const double total = visit_poisson_weights(x, eval.series_rel_tol, [&](double k, double w) {
        const double d = std::sqrt(k) - sx;
        sq += w * d * d;
        lin += w * d;
    });
    const double mean = lin / total;
    return sq / total - mean * mean;
}

double phi(double x, const SqrtPoissonEval& eval) {
    check_arg(x, "phi");
    eval.validate();
    if (x == 0.0) return 0.0;
    if (x >= eval.asymptotic_switch) return phi_asymptotic(x);
    double acc = 0.0;
    const double total = visit_poisson_weights(
        x, eval.series_rel_tol, [&](double k, double w) { acc += w * std::sqrt(k); });
    return acc / total;
}

PhiDerivatives phi_derivatives(double x, const SqrtPoissonEval& eval) {
    check_arg(x, "phi_derivatives");
    eval.validate();
    if (x >= eval.asymptotic_switch) return phi_derivatives_asymptotic(x);
    double v = 0.0, d1 = 0.0, d2 = 0.0;
    const double total = visit_poisson_weights(x, eval.series_rel_tol, [&](double k, double w) {
        const double sk = std::sqrt(k);
        const double sk1 = std::sqrt(k + 1.0);
        const double sk2 = std::sqrt(k + 2.0);
        v += w * sk;
        d1 += w * diff1(sk, sk1);
        d2 += w * diff2(sk, sk1, sk2);
    });
    return {v / total, d1 / total, d2 / total};
}

double psi(double y, const SqrtPoissonEval& eval) {
    check_arg(y, "psi");
    eval.validate();
    if (y == 0.0) return 0.0;
    const double y2 = y * y;

    if (y >= phi_asymptotic(eval.asymptotic_switch)) {
        double x = y2 + 0.25 + 3.0 / (32.0 * y2);
        for (int it = 0; it < 3; ++it) {
            const auto d = phi_derivatives_asymptotic(x);
            x -= (d.value - y) / d.first;
        }
        return x;
    }

    // psi(y) - y^2 = tau(psi(y)) in [0, kTauMax]: a guaranteed bracket.
    double lo = y2;
    double hi = y2 + kTauMax + 1e-3;
    double x = y2 + 0.25;
    for (int it = 0; it < 200; ++it) {
        const auto d = phi_derivatives(x, eval);
        const double f = d.value - y;
        if (f == 0.0) return x;
        (f > 0.0 ? hi : lo) = x;
        double next = x - f / d.first;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - x) <= eval.newton_tol * std::max(1.0, x)) return next;
        x = next;
    }
    throw NumericError("psi: Newton iteration did not converge for y = " + std::to_string(y));
}

double psi_prime(double y, const SqrtPoissonEval& eval) {
    return 1.0 / phi_derivatives(psi(y, eval), eval).first;
}

double psi_second(double y, const SqrtPoissonEval& eval) {
    const auto d = phi_derivatives(psi(y, eval), eval);
    return -d.second / (d.first * d.first * d.first);
}

}  // namespace sccoex
