#include <bit>

#include "kernel_tables.hpp"

namespace sccoex::kernels::detail {

namespace {

double dot(const double* a, const double* b, std::size_t len) {
    double lane[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    const std::size_t full = len - len % 8;
    for (std::size_t i = 0; i < full; i += 8) {
        for (std::size_t l = 0; l < 8; ++l) {
            const double p = a[i + l] * b[i + l];
            lane[l] += p;
        }
    }
    return add_tail(fold_lanes(lane), a, b, full, len);
}

void dot_block(RowBlock<double> a, RowBlock<double> b, std::size_t len, double* out) {
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t j = 0; j < b.rows; ++j) out[i * b.rows + j] = dot(a.row(i), b.row(j), len);
    }
}

std::uint64_t and_popcount(const std::uint64_t* a, const std::uint64_t* b, std::size_t words) {
    std::uint64_t n = 0;
    for (std::size_t w = 0; w < words; ++w) n += static_cast<unsigned>(std::popcount(a[w] & b[w]));
    return n;
}

void and_popcount_block(RowBlock<std::uint64_t> a, RowBlock<std::uint64_t> b, std::size_t words,
                        std::uint32_t* out) {
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t j = 0; j < b.rows; ++j) {
            out[i * b.rows + j] = static_cast<std::uint32_t>(and_popcount(a.row(i), b.row(j), words));
        }
    }
}

}  // namespace

const KernelTable& scalar_table() {
    static const KernelTable table{Isa::Scalar, &dot, &dot_block, &and_popcount,
                                   &and_popcount_block};
    return table;
}

}  // namespace sccoex::kernels::detail
