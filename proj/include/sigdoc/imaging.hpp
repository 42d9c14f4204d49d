#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <utility>
#include <vector>

#include "sigdoc/csv.hpp"
#include "sigdoc/image.hpp"
#include "sigdoc/rng.hpp"

namespace sigdoc {

struct Component {
    int id = 0;
    BBox bbox;
    std::vector<std::pair<int, int>> pixels; // (row, col)
    double stroke_width = 0.0;               // mean horizontal run length
    int run_count = 0;
};

inline BinaryImage binarize_otsu(const GrayImage& img) {
    if (img.width <= 0 || img.height <= 0)
        throw ArgumentError("binarize_otsu: empty image");

    std::array<std::int64_t, 256> hist{};
    for (float v : img.data) {
        int bin = static_cast<int>(std::lround(std::clamp(static_cast<double>(v), 0.0, 1.0) * 255.0));
        ++hist[bin];
    }

    // Threshold t splits bins into [0..t] and [t+1..255]; pick the t
    // maximizing between-class variance, lowest t on ties. A flat histogram
    // side leaves the variance at zero everywhere -> no foreground at all.
    const double total = static_cast<double>(img.data.size());
    double sum_all = 0.0;
    for (int i = 0; i < 256; ++i)
        sum_all += static_cast<double>(i) * static_cast<double>(hist[i]);

    double w0 = 0.0, sum0 = 0.0, best = 0.0;
    int best_t = -1;
    for (int t = 0; t < 255; ++t) {
        w0 += static_cast<double>(hist[t]);
        sum0 += static_cast<double>(t) * static_cast<double>(hist[t]);
        double w1 = total - w0;
        if (w0 == 0.0 || w1 == 0.0)
            continue;
        double mu0 = sum0 / w0;
        double mu1 = (sum_all - sum0) / w1;
        double var = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if (var > best) {
            best = var;
            best_t = t;
        }
    }

    BinaryImage out(img.width, img.height);
    if (best_t < 0)
        return out;
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        int bin = static_cast<int>(std::lround(std::clamp(static_cast<double>(img.data[i]), 0.0, 1.0) * 255.0));
        out.data[i] = bin <= best_t ? 1 : 0;
    }
    return out;
}

inline GrayImage add_gaussian_noise(const GrayImage& img, double variance, std::uint64_t seed) {
    if (variance < 0.0)
        throw ArgumentError("add_gaussian_noise: negative variance");
    GrayImage out(img.width, img.height);
    Rng rng = Rng(seed).substream("noise");
    const double sigma = std::sqrt(variance);
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        double v = static_cast<double>(img.data[i]) + sigma * rng.normal();
        out.data[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
    return out;
}

inline std::vector<Component> connected_components(const BinaryImage& img) {
    std::vector<int> label(img.data.size(), -1);
    std::vector<Component> comps;
    std::vector<std::pair<int, int>> stack;

    for (int r = 0; r < img.height; ++r) {
        for (int c = 0; c < img.width; ++c) {
            std::size_t idx = static_cast<std::size_t>(r) * img.width + c;
            if (!img.data[idx] || label[idx] != -1)
                continue;
            int id = static_cast<int>(comps.size());
            Component comp;
            comp.id = id;
            comp.bbox = {r, c, r, c};
            label[idx] = id;
            stack.emplace_back(r, c);
            while (!stack.empty()) {
                auto [pr, pc] = stack.back();
                stack.pop_back();
                comp.pixels.emplace_back(pr, pc);
                comp.bbox.row0 = std::min(comp.bbox.row0, pr);
                comp.bbox.row1 = std::max(comp.bbox.row1, pr);
                comp.bbox.col0 = std::min(comp.bbox.col0, pc);
                comp.bbox.col1 = std::max(comp.bbox.col1, pc);
                for (int dr = -1; dr <= 1; ++dr) {
                    for (int dc = -1; dc <= 1; ++dc) {
                        if (dr == 0 && dc == 0)
                            continue;
                        int nr = pr + dr, nc = pc + dc;
                        if (nr < 0 || nr >= img.height || nc < 0 || nc >= img.width)
                            continue;
                        std::size_t nidx = static_cast<std::size_t>(nr) * img.width + nc;
                        if (img.data[nidx] && label[nidx] == -1) {
                            label[nidx] = id;
                            stack.emplace_back(nr, nc);
                        }
                    }
                }
            }
            comps.push_back(std::move(comp));
        }
    }

    // Horizontally adjacent foreground pixels always share a label, so each
    // maximal run belongs to exactly one component.
    for (int r = 0; r < img.height; ++r) {
        int c = 0;
        while (c < img.width) {
            if (!img.at(r, c)) {
                ++c;
                continue;
            }
            int run_id = label[static_cast<std::size_t>(r) * img.width + c];
            while (c < img.width && img.at(r, c))
                ++c;
            ++comps[run_id].run_count;
        }
    }
    for (auto& comp : comps)
        comp.stroke_width = static_cast<double>(comp.pixels.size()) / comp.run_count;

    return comps;
}

// Page-level average stroke width: total ink over total horizontal runs.
inline double page_stroke_width(const std::vector<Component>& comps) {
    std::int64_t pixels = 0, runs = 0;
    for (const auto& c : comps) {
        pixels += static_cast<std::int64_t>(c.pixels.size());
        runs += c.run_count;
    }
    return runs > 0 ? static_cast<double>(pixels) / static_cast<double>(runs) : 0.0;
}

inline std::vector<Component> filter_small_components(const std::vector<Component>& comps,
                                                      double page_stroke_width, double k_min = 4.0) {
    if (!(page_stroke_width > 0.0))
        throw ArgumentError("filter_small_components: page stroke width must be positive");
    const double min_pixels = k_min * page_stroke_width * page_stroke_width;
    std::vector<Component> kept;
    for (const auto& c : comps)
        if (static_cast<double>(c.pixels.size()) >= min_pixels)
            kept.push_back(c);
    return kept;
}

inline double bilinear_sample(const GrayImage& img, double r, double c) {
    r = std::clamp(r, 0.0, static_cast<double>(img.height - 1));
    c = std::clamp(c, 0.0, static_cast<double>(img.width - 1));
    int r0 = static_cast<int>(std::floor(r));
    int c0 = static_cast<int>(std::floor(c));
    int r1 = std::min(r0 + 1, img.height - 1);
    int c1 = std::min(c0 + 1, img.width - 1);
    double fr = r - r0, fc = c - c0;
    double top = (1.0 - fc) * img.at(r0, c0) + fc * img.at(r0, c1);
    double bot = (1.0 - fc) * img.at(r1, c0) + fc * img.at(r1, c1);
    return (1.0 - fr) * top + fr * bot;
}

// Crop to bbox, scale so the longer side hits `target` (bilinear, aspect
// preserved), center with white (1.0) letterbox padding.
inline GrayImage crop_normalize(const GrayImage& img, const BBox& box, int target) {
    if (box.empty())
        throw ArgumentError("crop_normalize: empty bbox");
    if (box.row0 < 0 || box.col0 < 0 || box.row1 >= img.height || box.col1 >= img.width)
        throw ArgumentError("crop_normalize: bbox outside image");
    if (target < 32)
        throw ArgumentError("crop_normalize: target must be >= 32");

    const int cw = box.width(), ch = box.height();
    int sw, sh;
    if (cw >= ch) {
        sw = target;
        sh = std::max(1, static_cast<int>(std::lround(static_cast<double>(ch) * target / cw)));
    } else {
        sh = target;
        sw = std::max(1, static_cast<int>(std::lround(static_cast<double>(cw) * target / ch)));
    }

    GrayImage out(target, target, 1.0f);
    const int off_r = (target - sh) / 2;
    const int off_c = (target - sw) / 2;
    const double scale_r = static_cast<double>(ch) / sh;
    const double scale_c = static_cast<double>(cw) / sw;
    for (int r = 0; r < sh; ++r) {
        double src_r = box.row0 + (r + 0.5) * scale_r - 0.5;
        for (int c = 0; c < sw; ++c) {
            double src_c = box.col0 + (c + 0.5) * scale_c - 0.5;
            double clamped_r = std::clamp(src_r, static_cast<double>(box.row0), static_cast<double>(box.row1));
            double clamped_c = std::clamp(src_c, static_cast<double>(box.col0), static_cast<double>(box.col1));
            out.at(off_r + r, off_c + c) = static_cast<float>(bilinear_sample(img, clamped_r, clamped_c));
        }
    }
    return out;
}

inline GrayImage crop_normalize(const BinaryImage& img, const BBox& box, int target) {
    if (box.empty())
        throw ArgumentError("crop_normalize: empty bbox");
    if (box.row0 < 0 || box.col0 < 0 || box.row1 >= img.height || box.col1 >= img.width)
        throw ArgumentError("crop_normalize: bbox outside image");
    GrayImage gray = to_gray(crop(img, box));
    return crop_normalize(gray, BBox{0, 0, gray.height - 1, gray.width - 1}, target);
}

inline void save_components_csv(std::ostream& out, const std::vector<Component>& comps) {
    out << "id,row0,col0,row1,col1,pixel_count,stroke_width\n";
    for (const auto& c : comps)
        out << c.id << ',' << c.bbox.row0 << ',' << c.bbox.col0 << ',' << c.bbox.row1 << ','
            << c.bbox.col1 << ',' << c.pixels.size() << ',' << fmt_double(c.stroke_width) << '\n';
}

} // namespace sigdoc
