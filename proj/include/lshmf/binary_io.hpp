#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>

namespace lshmf::binary {

// Little-endian fixed-width encoding used by all checkpoint files.

template <typename T>
void write_le(std::ostream& out, T value) {
    static_assert(sizeof(T) == 4 || sizeof(T) == 8);
    using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    const auto bits = std::bit_cast<Bits>(value);
    std::array<char, sizeof(T)> bytes{};
    for (std::size_t k = 0; k < sizeof(T); ++k) {
        bytes[k] = static_cast<char>((bits >> (8 * k)) & 0xFFu);
    }
    out.write(bytes.data(), bytes.size());
}

template <typename T>
T read_le(std::istream& in) {
    static_assert(sizeof(T) == 4 || sizeof(T) == 8);
    using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    std::array<char, sizeof(T)> bytes{};
    if (!in.read(bytes.data(), bytes.size())) {
        throw std::runtime_error("truncated binary payload");
    }
    Bits bits = 0;
    for (std::size_t k = 0; k < sizeof(T); ++k) {
        bits |= static_cast<Bits>(static_cast<unsigned char>(bytes[k])) << (8 * k);
    }
    return std::bit_cast<T>(bits);
}

template <typename T>
void write_all(std::ostream& out, std::span<const T> values) {
    for (const T& v : values) {
        write_le(out, v);
    }
}

template <typename T>
void read_into(std::istream& in, std::span<T> values) {
    for (T& v : values) {
        v = read_le<T>(in);
    }
}

}  // namespace lshmf::binary
