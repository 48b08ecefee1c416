#pragma once

namespace sccoex {

/// Evaluation settings for the square-root Poisson functions.
///
/// phi(x) = E[sqrt(K)] and tau(x) = Var(sqrt(K)) for K ~ Poisson(x) are
/// summed over the Poisson weights around the mode until a weight drops below
/// `series_rel_tol` of the modal weight. Above `asymptotic_switch` the
/// large-x expansions take over.
struct SqrtPoissonEval {
    double series_rel_tol = 1e-17;     ///< in (0, 1e-10]
    double asymptotic_switch = 1e6;    ///< >= 10
    double newton_tol = 1e-14;         ///< relative step tolerance, <= 1e-10

    /// Throws std::invalid_argument when a field is out of range.
    void validate() const;
};

/// Upper bound of tau over x >= 0 (attained near x = 1.319).
inline constexpr double kTauMax = 0.4125;

/// Var(sqrt(Poisson(x))). Zero at the origin, tends to 1/4.
double tau(double x, const SqrtPoissonEval& eval = {});

/// E[sqrt(Poisson(x))]; strictly increasing, phi(x) = sqrt(x - tau(x)).
double phi(double x, const SqrtPoissonEval& eval = {});

/// First and second derivatives of phi.
struct PhiDerivatives {
    double value;
    double first;
    double second;
};
PhiDerivatives phi_derivatives(double x, const SqrtPoissonEval& eval = {});

/// Inverse of phi. psi(y) - y^2 = tau(psi(y)) lies in [0, kTauMax].
double psi(double y, const SqrtPoissonEval& eval = {});

/// psi'(y) = 1 / phi'(psi(y)).
double psi_prime(double y, const SqrtPoissonEval& eval = {});

/// psi''(y) = -phi''(x) / phi'(x)^3 at x = psi(y); tends to 2 for large y.
double psi_second(double y, const SqrtPoissonEval& eval = {});

}  // namespace sccoex
