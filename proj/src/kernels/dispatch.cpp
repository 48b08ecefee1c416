#include <cstdlib>
#include <stdexcept>
#include <string>

#include "kernel_tables.hpp"

namespace sccoex::kernels {

namespace detail {
#if !SCCOEX_HAVE_AVX2
const KernelTable* avx2_table() { return nullptr; }
#endif
#if !SCCOEX_HAVE_NEON
const KernelTable* neon_table() { return nullptr; }
#endif
}  // namespace detail

std::string_view to_string(Isa isa) {
    switch (isa) {
        case Isa::Scalar: return "scalar";
        case Isa::Avx2: return "avx2";
        case Isa::Neon: return "neon";
    }
    return "unknown";
}

std::optional<Isa> parse_isa(std::string_view name) {
    if (name == "scalar") return Isa::Scalar;
    if (name == "avx2") return Isa::Avx2;
    if (name == "neon") return Isa::Neon;
    return std::nullopt;
}

const KernelTable& scalar() { return detail::scalar_table(); }

bool supported(Isa isa) {
    switch (isa) {
        case Isa::Scalar: return true;
        case Isa::Avx2:
#if SCCOEX_HAVE_AVX2 && (defined(__x86_64__) || defined(__i386__))
            return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("popcnt");
#else
            return false;
#endif
        case Isa::Neon: return detail::neon_table() != nullptr;
    }
    return false;
}

const KernelTable& table(Isa isa) {
    if (!supported(isa)) {
        throw std::invalid_argument("kernel variant '" + std::string(to_string(isa)) +
                                    "' is not available on this machine");
    }
    switch (isa) {
        case Isa::Avx2: return *detail::avx2_table();
        case Isa::Neon: return *detail::neon_table();
        case Isa::Scalar: break;
    }
    return scalar();
}

const KernelTable& best() {
    static const KernelTable* chosen = [] {
        if (const char* env = std::getenv("SCCOEX_ISA")) {
            if (const auto isa = parse_isa(env); isa && supported(*isa)) return &table(*isa);
        }
        for (Isa isa : {Isa::Avx2, Isa::Neon}) {
            if (supported(isa)) return &table(isa);
        }
        return &scalar();
    }();
    return *chosen;
}

}  // namespace sccoex::kernels
