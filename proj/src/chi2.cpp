#include "sccoex/chi2.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "sccoex/error.hpp"

namespace sccoex {

namespace {

constexpr double kEps = 1e-16;
constexpr int kMaxIter = 10000;

void check_dof(int dof) {
    if (dof < 1) throw std::invalid_argument("chi2: dof must be >= 1");
}

// log Gamma(dof / 2) by the half-integer recurrence, exact up to rounding.
double log_gamma_half(int dof) {
    double acc = 0.0;
    if (dof % 2 == 0) {
        for (int i = 2; i < dof / 2; ++i) acc += std::log(static_cast<double>(i));
    } else {
        acc = 0.5 * std::log(std::numbers::pi);
        for (int j = 0; 2 * j + 3 <= dof; ++j) acc += std::log(0.5 + j);
    }
    return acc;
}

// log(x^a e^-x / Gamma(a))
double log_prefactor(double a, double x, double lga) { return a * std::log(x) - x - lga; }

// P(a, x) by its power series; valid for x < a + 1.
double gamma_p_series(double a, double x, double lga) {
    double ap = a;
    double del = 1.0 / a;
    double sum = del;
    for (int n = 0; n < kMaxIter; ++n) {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if (std::abs(del) < std::abs(sum) * kEps) {
            return sum * std::exp(log_prefactor(a, x, lga));
        }
    }
    throw NumericError("incomplete gamma series did not converge");
}

// log Q(a, x) by the modified Lentz continued fraction; valid for x >= a + 1.
double log_gamma_q_cf(double a, double x, double lga) {
    constexpr double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < kMaxIter; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) return log_prefactor(a, x, lga) + std::log(h);
    }
    throw NumericError("incomplete gamma continued fraction did not converge");
}

}  // namespace

double chi2_cdf(double x, int dof) {
    check_dof(dof);
    if (!(x >= 0.0)) throw std::invalid_argument("chi2_cdf: x must be >= 0");
    if (x == 0.0) return 0.0;
    if (std::isinf(x)) return 1.0;
    const double a = 0.5 * dof;
    const double h = 0.5 * x;
    const double lga = log_gamma_half(dof);
    if (h < a + 1.0) return gamma_p_series(a, h, lga);
    return -std::expm1(log_gamma_q_cf(a, h, lga));
}

double chi2_survival(double x, int dof) {
    check_dof(dof);
    if (!(x >= 0.0)) throw std::invalid_argument("chi2_survival: x must be >= 0");
    if (x == 0.0) return 1.0;
    if (std::isinf(x)) return 0.0;
    const double a = 0.5 * dof;
    const double h = 0.5 * x;
    const double lga = log_gamma_half(dof);
    if (h < a + 1.0) return 1.0 - gamma_p_series(a, h, lga);
    return std::exp(log_gamma_q_cf(a, h, lga));
}

double chi2_log_survival(double x, int dof) {
    check_dof(dof);
    if (!(x >= 0.0)) throw std::invalid_argument("chi2_log_survival: x must be >= 0");
    if (x == 0.0) return 0.0;
    if (std::isinf(x)) return -std::numeric_limits<double>::infinity();
    const double a = 0.5 * dof;
    const double h = 0.5 * x;
    const double lga = log_gamma_half(dof);
    if (h < a + 1.0) return std::log1p(-gamma_p_series(a, h, lga));
    return log_gamma_q_cf(a, h, lga);
}

double chi2_upper_quantile(double upper_tail, int dof) {
    check_dof(dof);
    if (!(upper_tail > 0.0 && upper_tail < 1.0)) {
        throw std::invalid_argument("chi2_upper_quantile: tail must lie in (0, 1)");
    }
    const double target = std::log(upper_tail);
    double lo = 0.0;
    double hi = std::max(1.0, static_cast<double>(dof));
    while (chi2_log_survival(hi, dof) > target) {
        lo = hi;
        hi *= 2.0;
    }
    for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        (chi2_log_survival(mid, dof) > target ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace sccoex
