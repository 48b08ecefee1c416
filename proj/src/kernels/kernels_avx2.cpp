// AVX2 variants. This file is compiled with -mavx2 -mpopcnt and only entered
// after a runtime CPU check.
#include <immintrin.h>

#include "kernel_tables.hpp"

namespace sccoex::kernels::detail {

namespace {

// acc_lo holds lanes 0..3, acc_hi lanes 4..7 of the canonical reduction.
inline double fold(__m256d acc_lo, __m256d acc_hi) {
    const __m256d v = _mm256_add_pd(acc_lo, acc_hi);  // l0+l4, l1+l5, l2+l6, l3+l7
    const __m128d s = _mm_add_pd(_mm256_castpd256_pd128(v), _mm256_extractf128_pd(v, 1));
    return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot(const double* a, const double* b, std::size_t len) {
    __m256d lo = _mm256_setzero_pd();
    __m256d hi = _mm256_setzero_pd();
    const std::size_t full = len - len % 8;
    for (std::size_t i = 0; i < full; i += 8) {
        lo = _mm256_add_pd(lo, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
        hi = _mm256_add_pd(hi, _mm256_mul_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4)));
    }
    return add_tail(fold(lo, hi), a, b, full, len);
}

// 2x2 register block: four dot products share each pair of row loads.
void dot_2x2(const double* a0, const double* a1, const double* b0, const double* b1,
             std::size_t len, double out[4]) {
    __m256d l00 = _mm256_setzero_pd(), h00 = _mm256_setzero_pd();
    __m256d l01 = _mm256_setzero_pd(), h01 = _mm256_setzero_pd();
    __m256d l10 = _mm256_setzero_pd(), h10 = _mm256_setzero_pd();
    __m256d l11 = _mm256_setzero_pd(), h11 = _mm256_setzero_pd();
    const std::size_t full = len - len % 8;
    for (std::size_t i = 0; i < full; i += 8) {
        const __m256d x0l = _mm256_loadu_pd(a0 + i), x0h = _mm256_loadu_pd(a0 + i + 4);
        const __m256d x1l = _mm256_loadu_pd(a1 + i), x1h = _mm256_loadu_pd(a1 + i + 4);
        const __m256d y0l = _mm256_loadu_pd(b0 + i), y0h = _mm256_loadu_pd(b0 + i + 4);
        const __m256d y1l = _mm256_loadu_pd(b1 + i), y1h = _mm256_loadu_pd(b1 + i + 4);
        l00 = _mm256_add_pd(l00, _mm256_mul_pd(x0l, y0l));
        h00 = _mm256_add_pd(h00, _mm256_mul_pd(x0h, y0h));
        l01 = _mm256_add_pd(l01, _mm256_mul_pd(x0l, y1l));
        h01 = _mm256_add_pd(h01, _mm256_mul_pd(x0h, y1h));
        l10 = _mm256_add_pd(l10, _mm256_mul_pd(x1l, y0l));
        h10 = _mm256_add_pd(h10, _mm256_mul_pd(x1h, y0h));
        l11 = _mm256_add_pd(l11, _mm256_mul_pd(x1l, y1l));
        h11 = _mm256_add_pd(h11, _mm256_mul_pd(x1h, y1h));
    }
    out[0] = add_tail(fold(l00, h00), a0, b0, full, len);
    out[1] = add_tail(fold(l01, h01), a0, b1, full, len);
    out[2] = add_tail(fold(l10, h10), a1, b0, full, len);
    out[3] = add_tail(fold(l11, h11), a1, b1, full, len);
}

void dot_block(RowBlock<double> a, RowBlock<double> b, std::size_t len, double* out) {
    const std::size_t ar = a.rows - a.rows % 2;
    const std::size_t br = b.rows - b.rows % 2;
    double q[4];
    for (std::size_t i = 0; i < ar; i += 2) {
        for (std::size_t j = 0; j < br; j += 2) {
            dot_2x2(a.row(i), a.row(i + 1), b.row(j), b.row(j + 1), len, q);
            out[i * b.rows + j] = q[0];
            out[i * b.rows + j + 1] = q[1];
            out[(i + 1) * b.rows + j] = q[2];
            out[(i + 1) * b.rows + j + 1] = q[3];
        }
        if (br != b.rows) {
            out[i * b.rows + br] = dot(a.row(i), b.row(br), len);
            out[(i + 1) * b.rows + br] = dot(a.row(i + 1), b.row(br), len);
        }
    }
    if (ar != a.rows) {
        for (std::size_t j = 0; j < b.rows; ++j) out[ar * b.rows + j] = dot(a.row(ar), b.row(j), len);
    }
}

// Nibble-table popcount per byte, summed into four 64-bit lanes.
inline __m256i popcount_bytes(__m256i v) {
    const __m256i table = _mm256_setr_epi8(0, 1, 1, 2, 1, 2, 2, 3, 1, 2, 2, 3, 2, 3, 3, 4,  //
                                           0, 1, 1, 2, 1, 2, 2, 3, 1, 2, 2, 3, 2, 3, 3, 4);
    const __m256i low = _mm256_set1_epi8(0x0f);
    const __m256i lo = _mm256_shuffle_epi8(table, _mm256_and_si256(v, low));
    const __m256i hi = _mm256_shuffle_epi8(table, _mm256_and_si256(_mm256_srli_epi16(v, 4), low));
    return _mm256_sad_epu8(_mm256_add_epi8(lo, hi), _mm256_setzero_si256());
}

std::uint64_t and_popcount(const std::uint64_t* a, const std::uint64_t* b, std::size_t words) {
    __m256i acc = _mm256_setzero_si256();
    const std::size_t full = words - words % 4;
    for (std::size_t w = 0; w < full; w += 4) {
        const __m256i x = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(a + w));
        const __m256i y = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(b + w));
        acc = _mm256_add_epi64(acc, popcount_bytes(_mm256_and_si256(x, y)));
    }
    alignas(32) std::uint64_t lanes[4];
    _mm256_store_si256(reinterpret_cast<__m256i*>(lanes), acc);
    std::uint64_t n = lanes[0] + lanes[1] + lanes[2] + lanes[3];
    for (std::size_t w = full; w < words; ++w) {
        n += static_cast<std::uint64_t>(_mm_popcnt_u64(a[w] & b[w]));
    }
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

const KernelTable* avx2_table() {
    static const KernelTable table{Isa::Avx2, &dot, &dot_block, &and_popcount,
                                   &and_popcount_block};
    return &table;
}

}  // namespace sccoex::kernels::detail
