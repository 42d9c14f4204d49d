#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "sigdoc/image.hpp"
#include "sigdoc/io.hpp"

namespace sigdoc {

struct GradField {
    int width = 0;
    int height = 0;
    std::vector<double> magnitude;   // row-major, >= 0
    std::vector<double> orientation; // radians in [0, 2pi)

    double mag(int r, int c) const { return magnitude[static_cast<std::size_t>(r) * width + c]; }
    double ori(int r, int c) const { return orientation[static_cast<std::size_t>(r) * width + c]; }
};

struct Descriptor128 {
    std::array<double, 128> v{}; // 4x4 spatial cells x 8 orientation bins
    double row = 0.0;            // patch center on the source image
    double col = 0.0;
};

struct DenseGrid {
    int n = 0;
    int patch = 16;
    std::vector<std::pair<double, double>> centers; // (row, col), row-major
};

// Central differences inside, one-sided at the borders.
inline GradField gradient_field(const GrayImage& img) {
    if (img.width < 3 || img.height < 3)
        throw ArgumentError("gradient_field: image must be at least 3x3");
    GradField f;
    f.width = img.width;
    f.height = img.height;
    f.magnitude.resize(img.data.size());
    f.orientation.resize(img.data.size());
    for (int r = 0; r < img.height; ++r) {
        for (int c = 0; c < img.width; ++c) {
            double gx, gy;
            if (c == 0)
                gx = static_cast<double>(img.at(r, 1)) - img.at(r, 0);
            else if (c == img.width - 1)
                gx = static_cast<double>(img.at(r, c)) - img.at(r, c - 1);
            else
                gx = (static_cast<double>(img.at(r, c + 1)) - img.at(r, c - 1)) / 2.0;
            if (r == 0)
                gy = static_cast<double>(img.at(1, c)) - img.at(0, c);
            else if (r == img.height - 1)
                gy = static_cast<double>(img.at(r, c)) - img.at(r - 1, c);
            else
                gy = (static_cast<double>(img.at(r + 1, c)) - img.at(r - 1, c)) / 2.0;
            std::size_t i = static_cast<std::size_t>(r) * img.width + c;
            f.magnitude[i] = std::sqrt(gx * gx + gy * gy);
            double theta = std::atan2(gy, gx);
            if (theta < 0.0)
                theta += 2.0 * std::numbers::pi;
            if (theta >= 2.0 * std::numbers::pi)
                theta = 0.0;
            f.orientation[i] = theta;
        }
    }
    return f;
}

inline DenseGrid make_grid(int side, int n) {
    if (n < 1)
        throw ArgumentError("make_grid: n must be >= 1");
    if (side < 16)
        throw ArgumentError("make_grid: side must be >= 16");
    DenseGrid grid;
    grid.n = n;
    grid.centers.reserve(static_cast<std::size_t>(n) * n);
    if (n == 1) {
        double mid = side / 2.0;
        grid.centers.emplace_back(mid, mid);
        return grid;
    }
    if (side - 16 < n - 1)
        throw ArgumentError("make_grid: grid too dense for image side");
    const double margin = 8.0;
    const double stride = static_cast<double>(side - 16) / (n - 1);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            grid.centers.emplace_back(margin + i * stride, margin + j * stride);
    return grid;
}

// Standard SIFT pooling over a fixed 16x16 patch: Gaussian-weighted (sigma 8)
// magnitudes voted into 4x4 spatial cells x 8 orientation bins with trilinear
// interpolation, then normalize / clamp 0.2 / renormalize.
inline Descriptor128 sift_descriptor(const GradField& field, double center_row, double center_col) {
    const int tr = static_cast<int>(std::lround(center_row - 8.0));
    const int tc = static_cast<int>(std::lround(center_col - 8.0));
    if (tr < 0 || tc < 0 || tr + 16 > field.height || tc + 16 > field.width)
        throw ArgumentError("sift_descriptor: patch out of bounds");

    Descriptor128 d;
    d.row = center_row;
    d.col = center_col;

    constexpr double two_pi = 2.0 * std::numbers::pi;
    constexpr double sigma = 8.0;
    for (int i = 0; i < 16; ++i) {
        for (int j = 0; j < 16; ++j) {
            double m = field.mag(tr + i, tc + j);
            if (m == 0.0)
                continue;
            double dr = i - 7.5, dc = j - 7.5;
            double w = std::exp(-(dr * dr + dc * dc) / (2.0 * sigma * sigma));
            double contrib = m * w;

            double ob = field.ori(tr + i, tc + j) / two_pi * 8.0;
            int o0 = static_cast<int>(std::floor(ob));
            double fo = ob - o0;
            o0 &= 7;
            int o1 = (o0 + 1) & 7;

            // cell centers sit at pixel offsets 1.5, 5.5, 9.5, 13.5
            double cr = (i - 1.5) / 4.0;
            double cc = (j - 1.5) / 4.0;
            int r0 = static_cast<int>(std::floor(cr));
            int c0 = static_cast<int>(std::floor(cc));
            double fr = cr - r0, fc = cc - c0;
            for (int rr = 0; rr < 2; ++rr) {
                int cell_r = r0 + rr;
                if (cell_r < 0 || cell_r > 3)
                    continue;
                double wr = rr ? fr : 1.0 - fr;
                for (int jj = 0; jj < 2; ++jj) {
                    int cell_c = c0 + jj;
                    if (cell_c < 0 || cell_c > 3)
                        continue;
                    double wc = jj ? fc : 1.0 - fc;
                    double base = contrib * wr * wc;
                    d.v[(cell_r * 4 + cell_c) * 8 + o0] += base * (1.0 - fo);
                    d.v[(cell_r * 4 + cell_c) * 8 + o1] += base * fo;
                }
            }
        }
    }

    double norm = 0.0;
    for (double x : d.v)
        norm += x * x;
    if (norm == 0.0)
        return d; // flat patch stays the zero vector
    norm = std::sqrt(norm);
    for (double& x : d.v)
        x = std::min(x / norm, 0.2);
    norm = 0.0;
    for (double x : d.v)
        norm += x * x;
    norm = std::sqrt(norm);
    for (double& x : d.v)
        x /= norm;
    return d;
}

inline std::vector<Descriptor128> describe_image(const GrayImage& img, int n) {
    if (img.width != img.height)
        throw ArgumentError("describe_image: expected a square normalized crop");
    GradField field = gradient_field(img);
    DenseGrid grid = make_grid(img.width, n);
    std::vector<Descriptor128> out;
    out.reserve(grid.centers.size());
    for (const auto& [r, c] : grid.centers)
        out.push_back(sift_descriptor(field, r, c));
    return out;
}

inline void save_descriptors(std::ostream& out, const std::vector<Descriptor128>& descs) {
    out.write("DSFT", 4);
    write_u32(out, static_cast<std::uint32_t>(descs.size()));
    for (const auto& d : descs)
        for (double x : d.v)
            write_f32(out, static_cast<float>(x));
}

inline std::vector<Descriptor128> load_descriptors(std::istream& in) {
    expect_magic(in, "DSFT", "descriptor");
    std::uint32_t count = read_u32(in);
    std::vector<Descriptor128> descs(count);
    for (auto& d : descs)
        for (double& x : d.v)
            x = read_f32(in);
    return descs;
}

} // namespace sigdoc
