// NEON variants for AArch64, where Advanced SIMD is part of the baseline.
#include <arm_neon.h>

#include "kernel_tables.hpp"

namespace sccoex::kernels::detail {

namespace {

// q01, q23, q45, q67 hold lanes (0,1) .. (6,7) of the canonical reduction.
inline double fold(float64x2_t q01, float64x2_t q23, float64x2_t q45, float64x2_t q67) {
    const float64x2_t p = vaddq_f64(q01, q45);  // l0+l4, l1+l5
    const float64x2_t q = vaddq_f64(q23, q67);  // l2+l6, l3+l7
    const float64x2_t s = vaddq_f64(p, q);
    return vgetq_lane_f64(s, 0) + vgetq_lane_f64(s, 1);
}

double dot(const double* a, const double* b, std::size_t len) {
    float64x2_t q01 = vdupq_n_f64(0.0), q23 = vdupq_n_f64(0.0);
    float64x2_t q45 = vdupq_n_f64(0.0), q67 = vdupq_n_f64(0.0);
    const std::size_t full = len - len % 8;
    for (std::size_t i = 0; i < full; i += 8) {
        q01 = vaddq_f64(q01, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
        q23 = vaddq_f64(q23, vmulq_f64(vld1q_f64(a + i + 2), vld1q_f64(b + i + 2)));
        q45 = vaddq_f64(q45, vmulq_f64(vld1q_f64(a + i + 4), vld1q_f64(b + i + 4)));
        q67 = vaddq_f64(q67, vmulq_f64(vld1q_f64(a + i + 6), vld1q_f64(b + i + 6)));
    }
    return add_tail(fold(q01, q23, q45, q67), a, b, full, len);
}

void dot_block(RowBlock<double> a, RowBlock<double> b, std::size_t len, double* out) {
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t j = 0; j < b.rows; ++j) out[i * b.rows + j] = dot(a.row(i), b.row(j), len);
    }
}

std::uint64_t and_popcount(const std::uint64_t* a, const std::uint64_t* b, std::size_t words) {
    uint64x2_t acc = vdupq_n_u64(0);
    const std::size_t full = words - words % 2;
    for (std::size_t w = 0; w < full; w += 2) {
        const uint8x16_t bits = vcntq_u8(vreinterpretq_u8_u64(vandq_u64(vld1q_u64(a + w), vld1q_u64(b + w))));
        acc = vpadalq_u32(acc, vpaddlq_u16(vpaddlq_u8(bits)));
    }
    std::uint64_t n = vgetq_lane_u64(acc, 0) + vgetq_lane_u64(acc, 1);
    if (full != words) n += static_cast<std::uint64_t>(__builtin_popcountll(a[full] & b[full]));
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

const KernelTable* neon_table() {
    static const KernelTable table{Isa::Neon, &dot, &dot_block, &and_popcount,
                                   &and_popcount_block};
    return &table;
}

}  // namespace sccoex::kernels::detail
