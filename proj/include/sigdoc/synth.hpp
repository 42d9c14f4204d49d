#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "sigdoc/config.hpp"
#include "sigdoc/grouping.hpp"
#include "sigdoc/retrieval.hpp"
#include "sigdoc/rng.hpp"
#include "sigdoc/sig_features.hpp"

namespace sigdoc {

// 5x7 uppercase bitmap font, bit 4 = leftmost column.
inline const std::array<std::array<std::uint8_t, 7>, 26>& glyph_font() {
    static const std::array<std::array<std::uint8_t, 7>, 26> font = {{
        {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}, // A
        {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E}, // B
        {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}, // C
        {0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C}, // D
        {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}, // E
        {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}, // F
        {0x0E, 0x11, 0x10, 0x10, 0x13, 0x11, 0x0F}, // G
        {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}, // H
        {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}, // I
        {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C}, // J
        {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}, // K
        {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}, // L
        {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}, // M
        {0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11}, // N
        {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}, // O
        {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}, // P
        {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}, // Q
        {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}, // R
        {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}, // S
        {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}, // T
        {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}, // U
        {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04}, // V
        {0x11, 0x11, 0x11, 0x15, 0x15, 0x1B, 0x11}, // W
        {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11}, // X
        {0x11, 0x11, 0x0A, 0x04, 0x04, 0x04, 0x04}, // Y
        {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F}, // Z
    }};
    return font;
}

inline constexpr int kGlyphScale = 4; // 20x28 px glyphs

inline void draw_glyph(GrayImage& page, int top, int left, int letter) {
    const auto& rows = glyph_font()[static_cast<std::size_t>(letter)];
    for (int gr = 0; gr < 7; ++gr)
        for (int gc = 0; gc < 5; ++gc) {
            if (!((rows[static_cast<std::size_t>(gr)] >> (4 - gc)) & 1))
                continue;
            for (int dr = 0; dr < kGlyphScale; ++dr)
                for (int dc = 0; dc < kGlyphScale; ++dc) {
                    int r = top + gr * kGlyphScale + dr;
                    int c = left + gc * kGlyphScale + dc;
                    if (r >= 0 && r < page.height && c >= 0 && c < page.width)
                        page.at(r, c) = 0.0f;
                }
        }
}

// One cubic Bezier stroke; closed strokes return to their start point and
// are the loop-bearing parts of a signature.
struct Stroke {
    std::array<double, 8> pts; // x0,y0 .. x3,y3
};

struct SignatureShape {
    std::vector<Stroke> strokes;
    double box_w = 0.0, box_h = 0.0;
};

namespace detail {

inline void stamp_disk(BinaryImage& img, double x, double y) {
    int ci = static_cast<int>(std::lround(x));
    int ri = static_cast<int>(std::lround(y));
    for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
            int r = ri + dr, c = ci + dc;
            if (r >= 0 && r < img.height && c >= 0 && c < img.width)
                img.at(r, c) = 1;
        }
}

inline void render_stroke(BinaryImage& img, const Stroke& s, double off_x, double off_y) {
    const int steps = 300;
    for (int i = 0; i <= steps; ++i) {
        double t = static_cast<double>(i) / steps;
        double u = 1.0 - t;
        double bx = u * u * u * s.pts[0] + 3 * u * u * t * s.pts[2] + 3 * u * t * t * s.pts[4] +
                    t * t * t * s.pts[6];
        double by = u * u * u * s.pts[1] + 3 * u * u * t * s.pts[3] + 3 * u * t * t * s.pts[5] +
                    t * t * t * s.pts[7];
        stamp_disk(img, bx + off_x, by + off_y);
    }
}

} // namespace detail

// Renders the shape alone on a page-sized canvas; used both for compositing
// and for the corner/loop geometry the query crops are derived from.
inline BinaryImage render_signature(const SignatureShape& shape, double off_x, double off_y, int page_w,
                                    int page_h) {
    BinaryImage img(page_w, page_h);
    for (const auto& s : shape.strokes)
        detail::render_stroke(img, s, off_x, off_y);
    return img;
}

inline SignatureShape jitter_shape(const SignatureShape& base, Rng& rng, double amount = 2.5) {
    SignatureShape out = base;
    for (auto& s : out.strokes)
        for (std::size_t i = 0; i < 8; i += 2) {
            s.pts[i] += rng.uniform() * 2.0 * amount - amount;
            s.pts[i + 1] += rng.uniform() * 2.0 * amount - amount;
        }
    // closed strokes stay closed under jitter
    for (std::size_t si = 0; si < out.strokes.size(); ++si)
        if (base.strokes[si].pts[0] == base.strokes[si].pts[6] &&
            base.strokes[si].pts[1] == base.strokes[si].pts[7]) {
            out.strokes[si].pts[6] = out.strokes[si].pts[0];
            out.strokes[si].pts[7] = out.strokes[si].pts[1];
        }
    return out;
}

inline bool shape_has_loop(const SignatureShape& shape, int page_w, int page_h) {
    BinaryImage img = render_signature(shape, 40.0, 40.0, page_w, page_h);
    return any_ink(find_loops(img));
}

// Base shape for one identity: a couple of closed loop strokes plus open
// sweeps, all crossing a shared central band so the rendered ink stays one
// tight blob.
inline SignatureShape make_identity_shape(Rng& rng, int page_w, int page_h) {
    for (int attempt = 0; attempt < 64; ++attempt) {
        SignatureShape shape;
        shape.box_w = 170.0 + rng.uniform() * 40.0;
        shape.box_h = 90.0 + rng.uniform() * 25.0;
        double cx = shape.box_w / 2.0, cy = shape.box_h / 2.0;

        int n_loops = 2;
        int n_open = 1 + static_cast<int>(rng.index(3)); // 1..3
        for (int i = 0; i < n_loops; ++i) {
            double bx = cx + (rng.uniform() - 0.5) * shape.box_w * 0.5;
            double by = cy + (rng.uniform() - 0.5) * shape.box_h * 0.4;
            double reach = 55.0 + rng.uniform() * 30.0;
            double ang = rng.uniform() * 2.0 * std::numbers::pi;
            double px = std::cos(ang), py = std::sin(ang);
            double nx = -py, ny = px; // normal
            double spread = 30.0 + rng.uniform() * 18.0;
            Stroke s;
            s.pts = {bx, by, bx + px * reach + nx * spread, by + py * reach + ny * spread,
                     bx + px * reach - nx * spread, by + py * reach - ny * spread, bx, by};
            shape.strokes.push_back(s);
        }
        for (int i = 0; i < n_open; ++i) {
            double y0 = cy + (rng.uniform() - 0.5) * shape.box_h * 0.8;
            double y3 = cy + (rng.uniform() - 0.5) * shape.box_h * 0.8;
            Stroke s;
            s.pts = {rng.uniform() * 20.0,
                     y0,
                     shape.box_w * 0.35 + (rng.uniform() - 0.5) * 30.0,
                     cy + (rng.uniform() - 0.5) * shape.box_h,
                     shape.box_w * 0.65 + (rng.uniform() - 0.5) * 30.0,
                     cy + (rng.uniform() - 0.5) * shape.box_h,
                     shape.box_w - rng.uniform() * 20.0,
                     y3};
            shape.strokes.push_back(s);
        }
        if (shape_has_loop(shape, page_w, page_h))
            return shape;
    }
    throw std::runtime_error("make_identity_shape: failed to produce a loop");
}

struct SynthParams {
    int identities = 20;
    int docs_per_identity = 10;
    int page_w = 640;
    int page_h = 480;
    std::vector<double> noise_variances;
    std::uint64_t seed = 0;
};

struct QueryEntry {
    std::string query_id;
    std::string path; // relative to the queries CSV's directory
    std::string identity;
};

inline void save_queries_csv(std::ostream& out, const std::vector<QueryEntry>& queries) {
    out << "query_id,path,identity\n";
    for (const auto& q : queries)
        out << q.query_id << ',' << q.path << ',' << q.identity << '\n';
}

inline std::vector<QueryEntry> load_queries_csv(std::istream& in) {
    std::vector<QueryEntry> out;
    for (const auto& row : read_csv(in, "query_id,path,identity")) {
        if (row.size() != 3)
            throw FormatError("queries: expected 3 fields per row");
        out.push_back({row[0], row[1], row[2]});
    }
    return out;
}

struct SynthResult {
    CorpusManifest manifest;
    std::vector<QueryEntry> queries;
    std::map<std::string, CorpusManifest> noise_manifests; // keyed by variance label
};

namespace detail {

inline std::string variance_label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

inline void draw_text_lines(GrayImage& page, Rng& rng) {
    int n_lines = 4 + static_cast<int>(rng.index(2)); // 4..5
    for (int line = 0; line < n_lines; ++line) {
        int top = 28 + line * 44;
        int x = 40 + static_cast<int>(rng.index(30));
        int n_words = 1 + static_cast<int>(rng.index(2));
        for (int w = 0; w < n_words; ++w) {
            int n_glyphs = 2 + static_cast<int>(rng.index(3)); // 2..4
            for (int g = 0; g < n_glyphs; ++g) {
                draw_glyph(page, top, x, static_cast<int>(rng.index(26)));
                x += 5 * kGlyphScale + 6;
            }
            x += 24;
        }
    }
}

inline BBox ink_bbox(const BinaryImage& img) {
    BBox b{img.height, img.width, -1, -1};
    for (int r = 0; r < img.height; ++r)
        for (int c = 0; c < img.width; ++c)
            if (img.at(r, c)) {
                b.row0 = std::min(b.row0, r);
                b.col0 = std::min(b.col0, c);
                b.row1 = std::max(b.row1, r);
                b.col1 = std::max(b.col1, c);
            }
    return b;
}

inline BBox corner_bbox(const std::vector<CornerPoint>& corners) {
    BBox b{1 << 30, 1 << 30, -1, -1};
    for (const auto& p : corners) {
        b.row0 = std::min(b.row0, p.row);
        b.col0 = std::min(b.col0, p.col);
        b.row1 = std::max(b.row1, p.row);
        b.col1 = std::max(b.col1, p.col);
    }
    return b;
}

} // namespace detail

// Builds the whole corpus under out_dir: pages/, queries/, manifest.csv,
// queries.csv, plus one noisy twin corpus per requested variance. Every
// byte is a pure function of params and cfg.
inline SynthResult generate_corpus(const std::string& out_dir, const SynthParams& params,
                                   const Config& cfg) {
    namespace fs = std::filesystem;
    if (params.identities < 1 || params.docs_per_identity < 1)
        throw ArgumentError("generate_corpus: identities and docs must be positive");
    if (params.page_w < 400 || params.page_h < 400)
        throw ArgumentError("generate_corpus: page too small");

    fs::create_directories(out_dir + "/pages");
    fs::create_directories(out_dir + "/queries");
    Rng root(params.seed);

    SynthResult result;
    for (int ident = 0; ident < params.identities; ++ident) {
        char ident_name[16];
        std::snprintf(ident_name, sizeof ident_name, "id%02d", ident);
        Rng ident_rng = root.substream(std::string("identity-") + ident_name);
        SignatureShape base = make_identity_shape(ident_rng, params.page_w, params.page_h);

        for (int d = 0; d < params.docs_per_identity; ++d) {
            std::string doc_id = std::string(ident_name) + "_d" + std::to_string(d);
            Rng doc_rng = root.substream("doc-" + doc_id);

            GrayImage page(params.page_w, params.page_h, 1.0f);
            detail::draw_text_lines(page, doc_rng);

            // jittered signature instance; regenerate until a loop survives
            SignatureShape inst;
            BinaryImage sig_only;
            for (int attempt = 0;; ++attempt) {
                if (attempt >= 64)
                    throw std::runtime_error("generate_corpus: jitter destroyed all loops");
                inst = jitter_shape(base, doc_rng);
                double max_x = params.page_w - 60.0 - inst.box_w;
                double off_x = 60.0 + doc_rng.uniform() * std::max(1.0, max_x - 60.0);
                double off_y = 300.0 + doc_rng.uniform() * std::max(1.0, params.page_h - 55.0 -
                                                                             inst.box_h - 300.0);
                sig_only = render_signature(inst, off_x, off_y, params.page_w, params.page_h);
                if (any_ink(find_loops(sig_only)))
                    break;
            }
            for (int r = 0; r < params.page_h; ++r)
                for (int c = 0; c < params.page_w; ++c)
                    if (sig_only.at(r, c))
                        page.at(r, c) = 0.0f;

            std::string rel = "pages/" + doc_id + ".pgm";
            save_pgm(out_dir + "/" + rel, page);
            CorpusEntry entry;
            entry.doc_id = doc_id;
            entry.path = rel;
            entry.identity = ident_name;
            entry.has_bbox = true;
            entry.bbox = detail::ink_bbox(sig_only);
            result.manifest.entries.push_back(entry);

            // the first document of each identity donates the query crop,
            // framed exactly the way retrieval frames a matched cluster:
            // corner bbox over signature-only pixels, padded by 2
            if (d == 0) {
                auto corners = harris_corners(to_gray(sig_only), cfg.harris_sigma, cfg.harris_k,
                                              cfg.harris_rel_threshold);
                if (corners.empty())
                    throw std::runtime_error("generate_corpus: signature produced no corners");
                BBox qb = detail::corner_bbox(corners).padded(2, params.page_h, params.page_w);
                std::string qrel = "queries/" + std::string(ident_name) + ".pgm";
                save_pgm(out_dir + "/" + qrel, crop(page, qb));
                result.queries.push_back({std::string("q_") + ident_name, qrel, ident_name});
            }
        }
    }

    {
        std::ofstream mo = open_output(out_dir + "/manifest.csv");
        save_manifest(mo, result.manifest);
        std::ofstream qo = open_output(out_dir + "/queries.csv");
        save_queries_csv(qo, result.queries);
    }

    for (double var : params.noise_variances) {
        std::string label = detail::variance_label(var);
        std::string ndir = out_dir + "/noise_" + label;
        fs::create_directories(ndir + "/pages");
        CorpusManifest nm;
        for (const auto& entry : result.manifest.entries) {
            GrayImage page = load_pgm(out_dir + "/" + entry.path);
            std::uint64_t nseed = root.derive_seed("noise-" + label + "-" + entry.doc_id);
            GrayImage noisy = add_gaussian_noise(page, var, nseed);
            save_pgm(ndir + "/" + entry.path, noisy);
            nm.entries.push_back(entry); // same relative path under ndir
        }
        std::ofstream mo = open_output(ndir + "/manifest.csv");
        save_manifest(mo, nm);
        result.noise_manifests.emplace(label, std::move(nm));
    }
    return result;
}

} // namespace sigdoc
