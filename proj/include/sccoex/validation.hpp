#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace sccoex {

struct CriterionResult {
    int id = 0;
    std::string name;
    bool pass = false;
    std::string detail;
    double seconds = 0.0;
    double time_limit = 0.0;  ///< seconds; part of `pass`
};

struct ValidationOptions {
    unsigned threads = 0;
    std::uint64_t seed = 20170601;
    std::vector<int> only;  ///< empty = all criteria
};

/// Acceptance criteria 1..9. Criteria 4, 5 and 6 share one null dataset,
/// which is generated once. `progress` is called after each criterion.
std::vector<CriterionResult> run_acceptance(
    const ValidationOptions& options,
    const std::function<void(const CriterionResult&)>& progress = {});

/// Sup over p in [lo, 1] of |ECDF(p) - p| for a sample of p-values.
double ecdf_uniform_deviation(std::vector<double> p_values, double lo);

}  // namespace sccoex
