#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "condiff/tensor/tensor.hpp"

namespace condiff {

namespace detail {

inline void write_u32_le(std::ostream& os, std::uint32_t v) {
    const std::array<char, 4> b{static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                                static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
    os.write(b.data(), 4);
}

inline std::uint32_t read_u32_le(std::istream& is) {
    std::array<unsigned char, 4> b{};
    is.read(reinterpret_cast<char*>(b.data()), 4);
    if (!is) throw FormatError("unexpected end of stream reading u32");
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
}

inline void write_f32_le(std::ostream& os, float f) { write_u32_le(os, std::bit_cast<std::uint32_t>(f)); }

inline float read_f32_le(std::istream& is) { return std::bit_cast<float>(read_u32_le(is)); }

} // namespace detail

/// Raw tensor dump: "TNSR", u32 rank, rank x u32 dims, float32 payload, all little-endian.
template <class T>
void write_tensor(std::ostream& os, const Tensor<T>& t) {
    os.write("TNSR", 4);
    detail::write_u32_le(os, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) detail::write_u32_le(os, static_cast<std::uint32_t>(d));
    for (T v : t.data()) detail::write_f32_le(os, static_cast<float>(v));
}

template <class T = float>
Tensor<T> read_tensor(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "TNSR", 4) != 0) throw FormatError("tensor dump: bad magic");
    const std::uint32_t rank = detail::read_u32_le(is);
    if (rank > 16) throw FormatError("tensor dump: implausible rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& d : shape) d = detail::read_u32_le(is);
    std::vector<T> data(numel(shape));
    for (auto& v : data) v = static_cast<T>(detail::read_f32_le(is));
    return Tensor<T>(std::move(shape), std::move(data));
}

template <class T>
void save_tensor(const std::string& path, const Tensor<T>& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open " + path + " for writing");
    write_tensor(os, t);
}

template <class T = float>
Tensor<T> load_tensor(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open " + path);
    return read_tensor<T>(is);
}

} // namespace condiff
