#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "sigdoc/dense_sift.hpp"
#include "sigdoc/io.hpp"
#include "sigdoc/rng.hpp"

namespace sigdoc {

struct Codebook {
    int k = 0;
    int dim = 128;
    std::vector<float> centroids; // k x dim, row-major

    const float* centroid(int i) const { return centroids.data() + static_cast<std::size_t>(i) * dim; }
};

// Word per grid patch; entry i sits at grid position (i / n, i % n).
struct WordMap {
    int n = 0;
    std::vector<int> words;

    int word(int r, int c) const { return words[static_cast<std::size_t>(r) * n + c]; }
};

// 21 cell histograms (levels 0,1,2 -> 1+4+16 cells), level-major, row-major
// within a level, each scaled by its level weight. Length 21*k.
struct SpmFeature {
    std::vector<double> values;
};

struct KmeansTrace {
    std::vector<double> objective; // one entry per Lloyd iteration, at iteration start
    int iterations = 0;
};

inline Codebook kmeans_fit(const std::vector<Descriptor128>& descs, int k, std::uint64_t seed,
                           int max_iters = 100, double tol = 1e-4, KmeansTrace* trace = nullptr) {
    constexpr int dim = 128;
    const std::size_t n = descs.size();
    if (k < 1)
        throw ArgumentError("kmeans_fit: k must be >= 1");
    if (n < static_cast<std::size_t>(k))
        throw ArgumentError("kmeans_fit: fewer points than clusters");

    Rng rng = Rng(seed).substream("kmeans");
    std::vector<double> pts(n * dim);
    for (std::size_t i = 0; i < n; ++i)
        for (int j = 0; j < dim; ++j)
            pts[i * dim + j] = descs[i].v[j];

    auto sqdist = [&](const double* a, const double* b) {
        double s = 0.0;
        for (int j = 0; j < dim; ++j) {
            double d = a[j] - b[j];
            s += d * d;
        }
        return s;
    };

    // k-means++ seeding
    std::vector<double> cent(static_cast<std::size_t>(k) * dim);
    std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
    {
        std::size_t first = rng.index(n);
        for (int j = 0; j < dim; ++j)
            cent[j] = pts[first * dim + j];
        for (int c = 1; c < k; ++c) {
            const double* prev = cent.data() + static_cast<std::size_t>(c - 1) * dim;
            double total = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                min_d2[i] = std::min(min_d2[i], sqdist(pts.data() + i * dim, prev));
                total += min_d2[i];
            }
            std::size_t pick;
            if (total > 0.0) {
                double r = rng.uniform() * total, cum = 0.0;
                pick = n - 1;
                for (std::size_t i = 0; i < n; ++i) {
                    cum += min_d2[i];
                    if (r < cum) {
                        pick = i;
                        break;
                    }
                }
            } else {
                pick = rng.index(n); // all residual mass zero: duplicates everywhere
            }
            for (int j = 0; j < dim; ++j)
                cent[static_cast<std::size_t>(c) * dim + j] = pts[pick * dim + j];
        }
    }

    std::vector<int> owner(n, 0);
    std::vector<double> next(static_cast<std::size_t>(k) * dim);
    std::vector<std::int64_t> count(k);
    for (int iter = 0; iter < max_iters; ++iter) {
        double obj = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double* p = pts.data() + i * dim;
            double best = std::numeric_limits<double>::infinity();
            int best_c = 0;
            for (int c = 0; c < k; ++c) {
                double d = sqdist(p, cent.data() + static_cast<std::size_t>(c) * dim);
                if (d < best) {
                    best = d;
                    best_c = c;
                }
            }
            owner[i] = best_c;
            min_d2[i] = best;
            obj += best;
        }
        if (trace) {
            trace->objective.push_back(obj);
            trace->iterations = iter + 1;
        }

        std::fill(next.begin(), next.end(), 0.0);
        std::fill(count.begin(), count.end(), 0);
        for (std::size_t i = 0; i < n; ++i) {
            double* dst = next.data() + static_cast<std::size_t>(owner[i]) * dim;
            const double* p = pts.data() + i * dim;
            for (int j = 0; j < dim; ++j)
                dst[j] += p[j];
            ++count[owner[i]];
        }
        for (int c = 0; c < k; ++c) {
            if (count[c] > 0) {
                double* dst = next.data() + static_cast<std::size_t>(c) * dim;
                for (int j = 0; j < dim; ++j)
                    dst[j] /= static_cast<double>(count[c]);
            } else {
                // empty cluster: reseed to the point worst represented by its
                // own centroid; zeroing its residual keeps later empties apart
                std::size_t far = 0;
                double far_d = -1.0;
                for (std::size_t i = 0; i < n; ++i)
                    if (min_d2[i] > far_d) {
                        far_d = min_d2[i];
                        far = i;
                    }
                min_d2[far] = 0.0;
                for (int j = 0; j < dim; ++j)
                    next[static_cast<std::size_t>(c) * dim + j] = pts[far * dim + j];
            }
        }

        double shift = 0.0;
        for (int c = 0; c < k; ++c) {
            double s = sqdist(cent.data() + static_cast<std::size_t>(c) * dim,
                              next.data() + static_cast<std::size_t>(c) * dim);
            shift = std::max(shift, s);
        }
        cent.swap(next);
        if (std::sqrt(shift) < tol)
            break;
    }

    Codebook cb;
    cb.k = k;
    cb.dim = dim;
    cb.centroids.resize(cent.size());
    for (std::size_t i = 0; i < cent.size(); ++i)
        cb.centroids[i] = static_cast<float>(cent[i]);
    return cb;
}

inline int assign(const Codebook& cb, const Descriptor128& d) {
    if (cb.dim != 128)
        throw ArgumentError("assign: descriptor dimension mismatch");
    double best = std::numeric_limits<double>::infinity();
    int best_c = 0;
    for (int c = 0; c < cb.k; ++c) {
        const float* ctr = cb.centroid(c);
        double s = 0.0;
        for (int j = 0; j < 128; ++j) {
            double diff = d.v[j] - static_cast<double>(ctr[j]);
            s += diff * diff;
        }
        if (s < best) { // strict: ties keep the lowest index
            best = s;
            best_c = c;
        }
    }
    return best_c;
}

inline WordMap assign_grid(const Codebook& cb, const std::vector<Descriptor128>& descs, int n) {
    if (descs.size() != static_cast<std::size_t>(n) * n)
        throw ArgumentError("assign_grid: descriptor count does not match grid");
    WordMap wm;
    wm.n = n;
    wm.words.resize(descs.size());
    for (std::size_t i = 0; i < descs.size(); ++i)
        wm.words[i] = assign(cb, descs[i]);
    return wm;
}

// Inclusive grid-patch bounds of one pyramid cell.
struct GridCell {
    int r0 = 0, c0 = 0, r1 = -1, c1 = -1;
};

// Cell c at level l covers grid rows floor(c*n/2^l) .. floor((c+1)*n/2^l)-1;
// proportional bounds keep the 14-wide grid partitionable at every level.
inline GridCell spm_cell(int n, int level, int cell_r, int cell_c) {
    int cells = 1 << level;
    GridCell g;
    g.r0 = cell_r * n / cells;
    g.r1 = (cell_r + 1) * n / cells - 1;
    g.c0 = cell_c * n / cells;
    g.c1 = (cell_c + 1) * n / cells - 1;
    return g;
}

inline std::vector<double> bof_histogram(const WordMap& wm, const GridCell& cell, int k,
                                         bool normalized = true) {
    if (cell.r0 < 0 || cell.c0 < 0 || cell.r1 >= wm.n || cell.c1 >= wm.n)
        throw ArgumentError("bof_histogram: cell outside grid");
    std::vector<double> h(k, 0.0);
    for (int r = cell.r0; r <= cell.r1; ++r)
        for (int c = cell.c0; c <= cell.c1; ++c)
            h[wm.word(r, c)] += 1.0;
    if (normalized) {
        double total = static_cast<double>(wm.n) * wm.n;
        for (double& v : h)
            v /= total;
    }
    return h;
}

// Level weights 1/4, 1/4, 1/2: an intersection (or dot) of two pooled
// features then reproduces the three-scale pyramid match kernel weighting.
inline constexpr double spm_level_weight(int level) {
    constexpr double w[3] = {0.25, 0.25, 0.5};
    return w[level];
}

inline SpmFeature spm_pool(const WordMap& wm, int k, bool normalized = true) {
    SpmFeature f;
    f.values.reserve(21 * static_cast<std::size_t>(k));
    for (int level = 0; level < 3; ++level) {
        int cells = 1 << level;
        double w = spm_level_weight(level);
        for (int cr = 0; cr < cells; ++cr) {
            for (int cc = 0; cc < cells; ++cc) {
                std::vector<double> h = bof_histogram(wm, spm_cell(wm.n, level, cr, cc), k, normalized);
                for (double v : h)
                    f.values.push_back(v * w);
            }
        }
    }
    return f;
}

inline double histogram_intersection(const std::vector<double>& hx, const std::vector<double>& hy) {
    if (hx.size() != hy.size())
        throw ArgumentError("histogram_intersection: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < hx.size(); ++i)
        s += std::min(hx[i], hy[i]);
    return s;
}

inline double histogram_intersection(const SpmFeature& x, const SpmFeature& y) {
    return histogram_intersection(x.values, y.values);
}

// K = I2 + (I1 - I2)/2 + (I0 - I1)/4
inline double pyramid_match_kernel(double i0, double i1, double i2) {
    return i2 + 0.5 * (i1 - i2) + 0.25 * (i0 - i1);
}

inline double pyramid_match_kernel(const WordMap& x, const WordMap& y, int k, bool normalized = true) {
    double levels[3];
    for (int level = 0; level < 3; ++level) {
        int cells = 1 << level;
        double total = 0.0;
        for (int cr = 0; cr < cells; ++cr)
            for (int cc = 0; cc < cells; ++cc)
                total += histogram_intersection(bof_histogram(x, spm_cell(x.n, level, cr, cc), k, normalized),
                                                bof_histogram(y, spm_cell(y.n, level, cr, cc), k, normalized));
        levels[level] = total;
    }
    return pyramid_match_kernel(levels[0], levels[1], levels[2]);
}

inline void save_codebook(std::ostream& out, const Codebook& cb) {
    out.write("SBVW", 4);
    write_u32(out, 1);
    write_u32(out, static_cast<std::uint32_t>(cb.k));
    write_u32(out, static_cast<std::uint32_t>(cb.dim));
    write_f32_array(out, cb.centroids.data(), cb.centroids.size());
}

inline Codebook load_codebook(std::istream& in) {
    expect_magic(in, "SBVW", "codebook");
    std::uint32_t version = read_u32(in);
    if (version != 1)
        throw FormatError("codebook: unsupported version");
    Codebook cb;
    cb.k = static_cast<int>(read_u32(in));
    cb.dim = static_cast<int>(read_u32(in));
    if (cb.k < 1 || cb.dim < 1 || cb.k > 1000000 || cb.dim > 1000000)
        throw FormatError("codebook: implausible header");
    cb.centroids.resize(static_cast<std::size_t>(cb.k) * cb.dim);
    read_f32_array(in, cb.centroids.data(), cb.centroids.size());
    return cb;
}

inline void save_feature(std::ostream& out, const SpmFeature& f) {
    out.write("SPMF", 4);
    write_u32(out, static_cast<std::uint32_t>(f.values.size()));
    for (double v : f.values)
        write_f32(out, static_cast<float>(v));
}

inline SpmFeature load_feature(std::istream& in) {
    expect_magic(in, "SPMF", "feature");
    std::uint32_t len = read_u32(in);
    SpmFeature f;
    f.values.resize(len);
    for (double& v : f.values)
        v = read_f32(in);
    return f;
}

} // namespace sigdoc
