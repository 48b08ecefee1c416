#pragma once

namespace sccoex {

// Chi-square distribution functions, via the regularized incomplete gamma
// functions P(dof/2, x/2) and Q(dof/2, x/2). The survival side is computed
// directly (continued fraction in log space), never as 1 - cdf.

double chi2_cdf(double x, int dof);
double chi2_survival(double x, int dof);

/// log Q(dof/2, x/2); finite for any finite x, so usable far in the tail.
double chi2_log_survival(double x, int dof);

/// The x with chi2_survival(x, dof) == upper_tail, for upper_tail in (0, 1).
double chi2_upper_quantile(double upper_tail, int dof);

}  // namespace sccoex
