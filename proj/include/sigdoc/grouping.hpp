#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "sigdoc/image.hpp"

namespace sigdoc {

struct CornerPoint {
    int row = 0;
    int col = 0;
    double response = 0.0;
};

namespace detail {

inline std::vector<double> gaussian_kernel_1d(double sigma) {
    int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-(static_cast<double>(i) * i) / (2.0 * sigma * sigma));
        sum += k[i + radius];
    }
    for (double& v : k)
        v /= sum;
    return k;
}

// Separable convolution with replicated (clamped) borders.
inline std::vector<double> gaussian_smooth(const std::vector<double>& src, int width, int height,
                                           const std::vector<double>& kernel) {
    const int radius = static_cast<int>(kernel.size() / 2);
    std::vector<double> tmp(src.size()), out(src.size());
    for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) {
            double s = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                int cc = std::clamp(c + i, 0, width - 1);
                s += kernel[i + radius] * src[static_cast<std::size_t>(r) * width + cc];
            }
            tmp[static_cast<std::size_t>(r) * width + c] = s;
        }
    }
    for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) {
            double s = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                int rr = std::clamp(r + i, 0, height - 1);
                s += kernel[i + radius] * tmp[static_cast<std::size_t>(rr) * width + c];
            }
            out[static_cast<std::size_t>(r) * width + c] = s;
        }
    }
    return out;
}

} // namespace detail

// Harris-Stephens response from the Gaussian-windowed structure tensor of
// central-difference gradients; R = det - k*trace^2, 3x3 non-max suppression
// (row-major first pixel wins a tied plateau), keep R > rel_threshold * max R.
inline std::vector<CornerPoint> harris_corners(const GrayImage& img, double sigma = 1.5,
                                               double k = 0.04, double rel_threshold = 0.01) {
    if (!(sigma > 0.0))
        throw ArgumentError("harris_corners: sigma must be positive");
    if (!(rel_threshold > 0.0 && rel_threshold < 1.0))
        throw ArgumentError("harris_corners: rel_threshold must be in (0,1)");
    if (img.width < 3 || img.height < 3)
        return {};

    const int w = img.width, h = img.height;
    std::vector<double> ixx(static_cast<std::size_t>(w) * h), iyy(ixx.size()), ixy(ixx.size());
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            double gx, gy;
            if (c == 0)
                gx = static_cast<double>(img.at(r, 1)) - img.at(r, 0);
            else if (c == w - 1)
                gx = static_cast<double>(img.at(r, c)) - img.at(r, c - 1);
            else
                gx = (static_cast<double>(img.at(r, c + 1)) - img.at(r, c - 1)) / 2.0;
            if (r == 0)
                gy = static_cast<double>(img.at(1, c)) - img.at(0, c);
            else if (r == h - 1)
                gy = static_cast<double>(img.at(r, c)) - img.at(r - 1, c);
            else
                gy = (static_cast<double>(img.at(r + 1, c)) - img.at(r - 1, c)) / 2.0;
            std::size_t i = static_cast<std::size_t>(r) * w + c;
            ixx[i] = gx * gx;
            iyy[i] = gy * gy;
            ixy[i] = gx * gy;
        }
    }

    auto kernel = detail::gaussian_kernel_1d(sigma);
    ixx = detail::gaussian_smooth(ixx, w, h, kernel);
    iyy = detail::gaussian_smooth(iyy, w, h, kernel);
    ixy = detail::gaussian_smooth(ixy, w, h, kernel);

    std::vector<double> resp(ixx.size());
    double max_r = 0.0;
    for (std::size_t i = 0; i < resp.size(); ++i) {
        double det = ixx[i] * iyy[i] - ixy[i] * ixy[i];
        double tr = ixx[i] + iyy[i];
        resp[i] = det - k * tr * tr;
        max_r = std::max(max_r, resp[i]);
    }
    if (max_r <= 0.0)
        return {};

    const double cut = rel_threshold * max_r;
    std::vector<CornerPoint> out;
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            double v = resp[static_cast<std::size_t>(r) * w + c];
            if (!(v > cut))
                continue;
            bool is_max = true;
            for (int dr = -1; dr <= 1 && is_max; ++dr) {
                for (int dc = -1; dc <= 1; ++dc) {
                    if (dr == 0 && dc == 0)
                        continue;
                    int nr = r + dr, nc = c + dc;
                    if (nr < 0 || nr >= h || nc < 0 || nc >= w)
                        continue;
                    double nv = resp[static_cast<std::size_t>(nr) * w + nc];
                    if (nv > v || (nv == v && (dr < 0 || (dr == 0 && dc < 0)))) {
                        is_max = false;
                        break;
                    }
                }
            }
            if (is_max)
                out.push_back({r, c, v});
        }
    }
    return out;
}

struct Cluster {
    std::vector<int> point_ids;
    BBox bbox; // tight bounds over member corner points
};

struct DbscanResult {
    std::vector<Cluster> clusters;
    std::vector<int> noise; // point ids
};

// Classic core/border/noise DBSCAN, closed eps-ball, Euclidean distance.
// Cluster ids follow discovery order; border points join the first cluster
// that claims them, so output is deterministic in the input order.
inline DbscanResult dbscan(const std::vector<CornerPoint>& points, double eps, int min_points) {
    if (!(eps > 0.0))
        throw ArgumentError("dbscan: eps must be positive");
    if (min_points < 1)
        throw ArgumentError("dbscan: min_points must be >= 1");

    const std::size_t n = points.size();
    const double eps2 = eps * eps;
    auto neighbors = [&](std::size_t p) {
        std::vector<std::size_t> out;
        for (std::size_t q = 0; q < n; ++q) {
            double dr = points[p].row - points[q].row;
            double dc = points[p].col - points[q].col;
            if (dr * dr + dc * dc <= eps2)
                out.push_back(q);
        }
        return out;
    };

    constexpr int kUnvisited = -2, kNoise = -1;
    std::vector<int> label(n, kUnvisited);
    DbscanResult res;
    for (std::size_t p = 0; p < n; ++p) {
        if (label[p] != kUnvisited)
            continue;
        std::vector<std::size_t> nb = neighbors(p);
        if (nb.size() < static_cast<std::size_t>(min_points)) {
            label[p] = kNoise;
            continue;
        }
        int cid = static_cast<int>(res.clusters.size());
        res.clusters.emplace_back();
        label[p] = cid;
        std::vector<std::size_t> seeds = std::move(nb);
        for (std::size_t si = 0; si < seeds.size(); ++si) {
            std::size_t q = seeds[si];
            if (label[q] == kNoise)
                label[q] = cid; // border point, claimed by this cluster
            if (label[q] != kUnvisited)
                continue;
            label[q] = cid;
            std::vector<std::size_t> qn = neighbors(q);
            if (qn.size() >= static_cast<std::size_t>(min_points))
                seeds.insert(seeds.end(), qn.begin(), qn.end());
        }
    }

    for (std::size_t p = 0; p < n; ++p) {
        if (label[p] < 0) {
            res.noise.push_back(static_cast<int>(p));
            continue;
        }
        Cluster& cl = res.clusters[label[p]];
        if (cl.point_ids.empty()) {
            cl.bbox = {points[p].row, points[p].col, points[p].row, points[p].col};
        } else {
            cl.bbox.row0 = std::min(cl.bbox.row0, points[p].row);
            cl.bbox.row1 = std::max(cl.bbox.row1, points[p].row);
            cl.bbox.col0 = std::min(cl.bbox.col0, points[p].col);
            cl.bbox.col1 = std::max(cl.bbox.col1, points[p].col);
        }
        cl.point_ids.push_back(static_cast<int>(p));
    }
    return res;
}

struct GroupMatchResult {
    bool matched = false;
    double best_distance = std::numeric_limits<double>::infinity();
    BBox best_cluster_bbox;
    int iterations_used = 0;
};

struct GroupEvalRow {
    double eps = 0.0;
    int iteration = 0; // 1-based
    int cluster_id = 0;
    BBox bbox;
    double distance = 0.0;
};

// Iterative grouping: eps sweeps InitTh, 2*InitTh, ..., MaxTh where
// MaxTh = max(query h, w) and InitTh is a tenth of it. Each iteration
// clusters the corners and scores every cluster (distance, lower better,
// against the query); the running minimum carries across iterations and the
// sweep stops after the first iteration that fails to improve it strictly.
// Iterations with no clusters are skipped without touching the minimum.
inline GroupMatchResult group_and_match(const std::vector<CornerPoint>& corners, int query_h,
                                        int query_w, const BinaryImage& doc,
                                        const std::function<double(const BBox&)>& cluster_distance,
                                        int min_points = 3, int bbox_pad = 2,
                                        std::vector<GroupEvalRow>* eval_log = nullptr) {
    GroupMatchResult res;
    if (corners.empty())
        return res;
    if (query_h < 1 || query_w < 1)
        throw ArgumentError("group_and_match: bad query size");

    const double max_th = static_cast<double>(std::max(query_h, query_w));
    const double init_th = 0.1 * max_th;
    // Distances can be negative (negated correlation), so "unset" is tracked
    // with flags rather than the -1 sentinel the distance scale would allow.
    bool has_running = false, has_prev = false;
    double running_min = 0.0, prev_min = 0.0;
    BBox best_bbox;

    for (int iter = 1; iter <= 10; ++iter) {
        double eps = init_th * iter;
        res.iterations_used = iter;
        DbscanResult dbr = dbscan(corners, eps, min_points);
        if (dbr.clusters.empty())
            continue;

        for (std::size_t ci = 0; ci < dbr.clusters.size(); ++ci) {
            BBox padded = dbr.clusters[ci].bbox.padded(bbox_pad, doc.height, doc.width);
            double dist = cluster_distance(padded);
            if (eval_log)
                eval_log->push_back({eps, iter, static_cast<int>(ci), padded, dist});
            if (!has_running || dist < running_min) {
                running_min = dist;
                best_bbox = padded;
                has_running = true;
            }
        }

        if (!has_prev) {
            prev_min = running_min;
            has_prev = true;
        } else if (running_min < prev_min) {
            prev_min = running_min;
        } else {
            break; // no strict improvement this iteration
        }
    }

    if (!has_running)
        return res; // every iteration came up empty
    res.matched = true;
    res.best_distance = running_min;
    res.best_cluster_bbox = best_bbox;
    return res;
}

} // namespace sigdoc
