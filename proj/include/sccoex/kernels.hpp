#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>

namespace sccoex::kernels {

// Inner loops of the all-pairs co-expression engine.
//
// Every implementation of `dot` reduces in the same order: eight running
// partial sums (element i goes to lane i % 8) over the largest multiple of 8,
// lanes folded as ((l0+l4)+(l2+l6)) + ((l1+l5)+(l3+l7)), then the remaining
// tail added in index order. Products and sums are separate roundings (no
// FMA). With that contract the scalar, AVX2 and NEON variants agree bit for
// bit, which the engine-versus-naive equivalence relies on.

enum class Isa { Scalar, Avx2, Neon };

std::string_view to_string(Isa isa);
std::optional<Isa> parse_isa(std::string_view name);

/// A block of equally long rows, `stride` elements apart.
template <class T>
struct RowBlock {
    const T* data;
    std::size_t rows;
    std::size_t stride;

    const T* row(std::size_t i) const { return data + i * stride; }
};

struct KernelTable {
    Isa isa;

    /// Canonical-order dot product of two length-`len` rows.
    double (*dot)(const double* a, const double* b, std::size_t len);

    /// out[i * b.rows + j] = dot(a.row(i), b.row(j)).
    void (*dot_block)(RowBlock<double> a, RowBlock<double> b, std::size_t len, double* out);

    /// Number of set bits in (a & b) over `words` 64-bit words.
    std::uint64_t (*and_popcount)(const std::uint64_t* a, const std::uint64_t* b,
                                  std::size_t words);

    /// out[i * b.rows + j] = and_popcount(a.row(i), b.row(j)).
    void (*and_popcount_block)(RowBlock<std::uint64_t> a, RowBlock<std::uint64_t> b,
                               std::size_t words, std::uint32_t* out);
};

/// The reference implementation; always available.
const KernelTable& scalar();

/// Compiled and supported by the running CPU.
bool supported(Isa isa);

/// Table for `isa`; throws std::invalid_argument when unsupported.
const KernelTable& table(Isa isa);

/// The widest supported variant, unless the SCCOEX_ISA environment variable
/// ("scalar", "avx2", "neon") asks for a specific supported one.
const KernelTable& best();

}  // namespace sccoex::kernels
