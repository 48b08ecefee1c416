#pragma once

#include "sccoex/kernels.hpp"

namespace sccoex::kernels::detail {

const KernelTable& scalar_table();

// Defined only when the matching translation unit is compiled in.
const KernelTable* avx2_table();
const KernelTable* neon_table();

// Shared tail of the canonical reduction: fold eight lanes, then add the
// elements past the last full group of eight in index order.
inline double fold_lanes(const double l[8]) {
    return ((l[0] + l[4]) + (l[2] + l[6])) + ((l[1] + l[5]) + (l[3] + l[7]));
}

inline double add_tail(double acc, const double* a, const double* b, std::size_t from,
                       std::size_t len) {
    for (std::size_t i = from; i < len; ++i) {
        const double p = a[i] * b[i];
        acc += p;
    }
    return acc;
}

}  // namespace sccoex::kernels::detail
