#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "sigdoc/codebook.hpp"
#include "sigdoc/dense_sift.hpp"
#include "sigdoc/imaging.hpp"

namespace sigdoc {

enum class Direction { top, bottom, left, right };
enum class FeatureMode : std::uint8_t { foreground = 0, background = 1, combined = 2 };

inline std::string feature_mode_name(FeatureMode m) {
    switch (m) {
    case FeatureMode::foreground: return "foreground";
    case FeatureMode::background: return "background";
    case FeatureMode::combined: return "combined";
    }
    return "?";
}

inline FeatureMode parse_feature_mode(const std::string& s) {
    if (s == "foreground")
        return FeatureMode::foreground;
    if (s == "background")
        return FeatureMode::background;
    if (s == "combined")
        return FeatureMode::combined;
    throw ArgumentError("unknown feature mode: " + s);
}

namespace detail {

// 4-connected flood over background pixels, seeded from `seeds`, restricted
// to the given move set (dr, dc pairs).
inline std::vector<std::uint8_t> flood_background(const BinaryImage& img,
                                                  const std::vector<std::pair<int, int>>& seeds,
                                                  const std::vector<std::pair<int, int>>& moves) {
    std::vector<std::uint8_t> reached(img.data.size(), 0);
    std::vector<std::pair<int, int>> stack;
    for (auto [r, c] : seeds) {
        std::size_t i = static_cast<std::size_t>(r) * img.width + c;
        if (!img.data[i] && !reached[i]) {
            reached[i] = 1;
            stack.emplace_back(r, c);
        }
    }
    while (!stack.empty()) {
        auto [r, c] = stack.back();
        stack.pop_back();
        for (auto [dr, dc] : moves) {
            int nr = r + dr, nc = c + dc;
            if (nr < 0 || nr >= img.height || nc < 0 || nc >= img.width)
                continue;
            std::size_t i = static_cast<std::size_t>(nr) * img.width + nc;
            if (!img.data[i] && !reached[i]) {
                reached[i] = 1;
                stack.emplace_back(nr, nc);
            }
        }
    }
    return reached;
}

inline std::vector<std::pair<int, int>> border_pixels(const BinaryImage& img) {
    std::vector<std::pair<int, int>> out;
    for (int c = 0; c < img.width; ++c) {
        out.emplace_back(0, c);
        out.emplace_back(img.height - 1, c);
    }
    for (int r = 1; r < img.height - 1; ++r) {
        out.emplace_back(r, 0);
        out.emplace_back(r, img.width - 1);
    }
    return out;
}

} // namespace detail

// Loops: background regions sealed off from the frame border (4-connectivity).
inline BinaryImage find_loops(const BinaryImage& img) {
    BinaryImage loops(img.width, img.height);
    if (img.width == 0 || img.height == 0)
        return loops;
    static const std::vector<std::pair<int, int>> all4 = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};
    auto reached = detail::flood_background(img, detail::border_pixels(img), all4);
    for (std::size_t i = 0; i < img.data.size(); ++i)
        loops.data[i] = (!img.data[i] && !reached[i]) ? 1 : 0;
    return loops;
}

inline BinaryImage rotate_cw(const BinaryImage& img) {
    BinaryImage out(img.height, img.width); // width' = height, height' = width
    for (int r = 0; r < img.height; ++r)
        for (int c = 0; c < img.width; ++c)
            out.at(c, img.height - 1 - r) = img.at(r, c);
    return out;
}

// Water poured from `direction` collects where no non-ascending 4-connected
// background path drains to the three other borders. For top that means: a
// pixel holds water iff moves {down,left,right} never reach the bottom, left
// or right border; found by reverse BFS from those borders with moves
// {up,left,right}. Enclosed loops never hold poured water and are excluded.
// Other directions reuse the top rule on a rotated frame.
inline BinaryImage water_reservoir(const BinaryImage& img, Direction direction) {
    if (img.width == 0 || img.height == 0)
        return BinaryImage(img.width, img.height);

    int cw_turns = 0; // rotations that bring `direction` to the top
    switch (direction) {
    case Direction::top: cw_turns = 0; break;
    case Direction::left: cw_turns = 1; break;
    case Direction::bottom: cw_turns = 2; break;
    case Direction::right: cw_turns = 3; break;
    }
    BinaryImage work = img;
    for (int t = 0; t < cw_turns; ++t)
        work = rotate_cw(work);

    std::vector<std::pair<int, int>> drains;
    for (int c = 0; c < work.width; ++c)
        drains.emplace_back(work.height - 1, c);
    for (int r = 0; r < work.height - 1; ++r) {
        drains.emplace_back(r, 0);
        drains.emplace_back(r, work.width - 1);
    }
    static const std::vector<std::pair<int, int>> up_left_right = {{-1, 0}, {0, -1}, {0, 1}};
    auto drained = detail::flood_background(work, drains, up_left_right);
    BinaryImage loops = find_loops(work);

    BinaryImage res(work.width, work.height);
    for (std::size_t i = 0; i < work.data.size(); ++i)
        res.data[i] = (!work.data[i] && !drained[i] && !loops.data[i]) ? 1 : 0;

    for (int t = 0; t < (4 - cw_turns) % 4; ++t)
        res = rotate_cw(res);
    return res;
}

struct BackgroundMask {
    BinaryImage loops;
    BinaryImage top, bottom, left, right;
};

inline BackgroundMask background_mask(const BinaryImage& img) {
    BackgroundMask m;
    m.loops = find_loops(img);
    m.top = water_reservoir(img, Direction::top);
    m.bottom = water_reservoir(img, Direction::bottom);
    m.left = water_reservoir(img, Direction::left);
    m.right = water_reservoir(img, Direction::right);
    return m;
}

// Union of loops and the four reservoirs, as a shape image of its own.
inline BinaryImage background_image(const BinaryImage& img) {
    BackgroundMask m = background_mask(img);
    BinaryImage out(img.width, img.height);
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = (m.loops.data[i] || m.top.data[i] || m.bottom.data[i] || m.left.data[i] ||
                       m.right.data[i])
                          ? 1
                          : 0;
    return out;
}

struct SignatureFeature {
    FeatureMode mode = FeatureMode::combined;
    std::vector<double> values; // 21*k (fg or bg) or 42*k (combined = fg then bg)
};

namespace detail {

inline std::vector<double> spm_from_binary(const BinaryImage& img, const Codebook& cb, int grid_n,
                                           int crop_target, bool normalized) {
    GrayImage crop = crop_normalize(img, BBox{0, 0, img.height - 1, img.width - 1}, crop_target);
    std::vector<Descriptor128> descs = describe_image(crop, grid_n);
    WordMap wm = assign_grid(cb, descs, grid_n);
    return spm_pool(wm, cb.k, normalized).values;
}

} // namespace detail

inline SignatureFeature signature_feature(const BinaryImage& img, const Codebook& cb, FeatureMode mode,
                                          int grid_n = 30, int crop_target = 256, bool normalized = true) {
    bool any_fg = false;
    for (std::uint8_t v : img.data)
        if (v) {
            any_fg = true;
            break;
        }

    SignatureFeature f;
    f.mode = mode;
    if (mode == FeatureMode::foreground || mode == FeatureMode::combined) {
        if (!any_fg)
            throw ArgumentError("signature_feature: empty image in foreground mode");
        f.values = detail::spm_from_binary(img, cb, grid_n, crop_target, normalized);
    }
    if (mode == FeatureMode::background || mode == FeatureMode::combined) {
        BinaryImage bg = background_image(img);
        bool any_bg = false;
        for (std::uint8_t v : bg.data)
            if (v) {
                any_bg = true;
                break;
            }
        std::vector<double> bg_values;
        if (any_bg)
            bg_values = detail::spm_from_binary(bg, cb, grid_n, crop_target, normalized);
        else
            bg_values.assign(21 * static_cast<std::size_t>(cb.k), 0.0); // no cavities: zero block
        f.values.insert(f.values.end(), bg_values.begin(), bg_values.end());
    }
    return f;
}

inline void save_signature_feature(std::ostream& out, const SignatureFeature& f) {
    out.write("SPMF", 4);
    write_u32(out, static_cast<std::uint32_t>(f.values.size()));
    char mode = static_cast<char>(f.mode);
    out.write(&mode, 1);
    for (double v : f.values)
        write_f32(out, static_cast<float>(v));
}

inline SignatureFeature load_signature_feature(std::istream& in) {
    expect_magic(in, "SPMF", "signature feature");
    std::uint32_t len = read_u32(in);
    char mode;
    in.read(&mode, 1);
    if (in.gcount() != 1)
        throw IoError("signature feature: truncated header");
    if (mode < 0 || mode > 2)
        throw FormatError("signature feature: bad mode byte");
    SignatureFeature f;
    f.mode = static_cast<FeatureMode>(mode);
    f.values.resize(len);
    for (double& v : f.values)
        v = read_f32(in);
    return f;
}

} // namespace sigdoc
