#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "sigdoc/error.hpp"

namespace sigdoc {

inline std::ifstream open_input(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open: " + path);
    return in;
}

inline std::ofstream open_output(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IoError("cannot open for writing: " + path);
    return out;
}

// Binary scalars are little-endian on disk regardless of host order.
inline void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (in.gcount() != 4)
        throw IoError("truncated stream while reading u32");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void write_u64(std::ostream& out, std::uint64_t v) {
    write_u32(out, static_cast<std::uint32_t>(v & 0xffffffffu));
    write_u32(out, static_cast<std::uint32_t>(v >> 32));
}

inline std::uint64_t read_u64(std::istream& in) {
    std::uint64_t lo = read_u32(in);
    std::uint64_t hi = read_u32(in);
    return lo | (hi << 32);
}

inline void write_f32(std::ostream& out, float v) {
    write_u32(out, std::bit_cast<std::uint32_t>(v));
}

inline float read_f32(std::istream& in) {
    return std::bit_cast<float>(read_u32(in));
}

inline void write_f64(std::ostream& out, double v) {
    write_u64(out, std::bit_cast<std::uint64_t>(v));
}

inline double read_f64(std::istream& in) {
    return std::bit_cast<double>(read_u64(in));
}

inline void write_f32_array(std::ostream& out, const float* v, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        write_f32(out, v[i]);
}

inline void read_f32_array(std::istream& in, float* v, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        v[i] = read_f32(in);
}

inline void expect_magic(std::istream& in, const char (&magic)[5], const std::string& what) {
    char got[4];
    in.read(got, 4);
    if (in.gcount() != 4)
        throw IoError("truncated stream while reading " + what + " magic");
    for (int i = 0; i < 4; ++i)
        if (got[i] != magic[i])
            throw FormatError("bad magic for " + what + " file");
}

} // namespace sigdoc
