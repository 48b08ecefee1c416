// Little-endian scalar I/O shared by the binary file formats.
#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <type_traits>

#include "sccoex/error.hpp"

namespace sccoex::detail {

template <class T>
void put_le(std::ostream& out, T v) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    auto u = std::bit_cast<U>(v);
    char buf[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<char>((u >> (8 * i)) & 0xff);
    out.write(buf, sizeof(U));
}

template <class T>
T get_le(std::istream& in, const char* what) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    unsigned char buf[sizeof(U)];
    if (!in.read(reinterpret_cast<char*>(buf), sizeof(U))) throw InputError(std::string("truncated ") + what);
    U u = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) u |= static_cast<U>(buf[i]) << (8 * i);
    return std::bit_cast<T>(u);
}

}  // namespace sccoex::detail
