#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "sigdoc/error.hpp"
#include "sigdoc/io.hpp"

namespace sigdoc {

// Inclusive pixel bounds.
struct BBox {
    int row0 = 0;
    int col0 = 0;
    int row1 = -1;
    int col1 = -1;

    int width() const { return col1 - col0 + 1; }
    int height() const { return row1 - row0 + 1; }
    bool empty() const { return row1 < row0 || col1 < col0; }

    BBox padded(int pad, int img_height, int img_width) const {
        return {std::max(0, row0 - pad), std::max(0, col0 - pad),
                std::min(img_height - 1, row1 + pad), std::min(img_width - 1, col1 + pad)};
    }

    bool operator==(const BBox&) const = default;
};

struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<float> data; // row-major intensities in [0,1]

    GrayImage() = default;
    GrayImage(int w, int h, float fill = 0.0f)
        : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

    float& at(int r, int c) { return data[static_cast<std::size_t>(r) * width + c]; }
    float at(int r, int c) const { return data[static_cast<std::size_t>(r) * width + c]; }
};

struct BinaryImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data; // 1 = foreground (ink), 0 = background

    BinaryImage() = default;
    BinaryImage(int w, int h, std::uint8_t fill = 0)
        : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

    std::uint8_t& at(int r, int c) { return data[static_cast<std::size_t>(r) * width + c]; }
    std::uint8_t at(int r, int c) const { return data[static_cast<std::size_t>(r) * width + c]; }
};

inline bool any_ink(const BinaryImage& img) {
    for (std::uint8_t v : img.data)
        if (v)
            return true;
    return false;
}

namespace detail {

inline int pgm_header_int(std::istream& in) {
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n')
                c = in.get();
        } else if (std::isspace(static_cast<unsigned char>(c))) {
            c = in.get();
        } else {
            break;
        }
    }
    if (c == EOF)
        throw FormatError("pgm: unexpected end of header");
    if (!std::isdigit(static_cast<unsigned char>(c)))
        throw FormatError("pgm: malformed header");
    long value = 0;
    while (c != EOF && std::isdigit(static_cast<unsigned char>(c))) {
        value = value * 10 + (c - '0');
        if (value > 1000000000L)
            throw FormatError("pgm: header value out of range");
        c = in.get();
    }
    if (c != EOF)
        in.unget();
    return static_cast<int>(value);
}

} // namespace detail

inline GrayImage load_pgm(std::istream& in) {
    char magic[2];
    in.read(magic, 2);
    if (in.gcount() != 2 || magic[0] != 'P')
        throw FormatError("pgm: not a PGM file");
    if (magic[1] == '2')
        throw FormatError("pgm: ASCII (P2) variant not supported, use binary P5");
    if (magic[1] != '5')
        throw FormatError("pgm: not a PGM file");
    int w = detail::pgm_header_int(in);
    int h = detail::pgm_header_int(in);
    int maxval = detail::pgm_header_int(in);
    if (w <= 0 || h <= 0)
        throw FormatError("pgm: bad dimensions");
    if (maxval != 255)
        throw FormatError("pgm: only maxval 255 supported");
    int sep = in.get();
    if (sep == EOF || !std::isspace(static_cast<unsigned char>(sep)))
        throw FormatError("pgm: missing separator after maxval");

    std::vector<unsigned char> bytes(static_cast<std::size_t>(w) * h);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (static_cast<std::size_t>(in.gcount()) != bytes.size())
        throw IoError("pgm: truncated pixel data");

    GrayImage img(w, h);
    for (std::size_t i = 0; i < bytes.size(); ++i)
        img.data[i] = static_cast<float>(bytes[i]) / 255.0f;
    return img;
}

inline GrayImage load_pgm(const std::string& path) {
    auto in = open_input(path);
    return load_pgm(in);
}

inline void save_pgm(std::ostream& out, const GrayImage& img) {
    out << "P5\n" << img.width << " " << img.height << "\n255\n";
    std::vector<unsigned char> bytes(img.data.size());
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        double v = std::clamp(static_cast<double>(img.data[i]), 0.0, 1.0);
        bytes[i] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline void save_pgm(const std::string& path, const GrayImage& img) {
    auto out = open_output(path);
    save_pgm(out, img);
    out.flush();
    if (!out)
        throw IoError("write failed: " + path);
}

inline GrayImage to_gray(const BinaryImage& bin) {
    GrayImage img(bin.width, bin.height);
    for (std::size_t i = 0; i < bin.data.size(); ++i)
        img.data[i] = bin.data[i] ? 0.0f : 1.0f;
    return img;
}

inline GrayImage crop(const GrayImage& img, const BBox& box) {
    GrayImage out(box.width(), box.height());
    for (int r = 0; r < out.height; ++r)
        for (int c = 0; c < out.width; ++c)
            out.at(r, c) = img.at(box.row0 + r, box.col0 + c);
    return out;
}

inline BinaryImage crop(const BinaryImage& img, const BBox& box) {
    BinaryImage out(box.width(), box.height());
    for (int r = 0; r < out.height; ++r)
        for (int c = 0; c < out.width; ++c)
            out.at(r, c) = img.at(box.row0 + r, box.col0 + c);
    return out;
}

} // namespace sigdoc
