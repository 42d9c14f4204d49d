#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "sigdoc/sig_features.hpp"

namespace sigdoc {

enum class Measure { euclidean, correlation, dtw };

inline std::string measure_name(Measure m) {
    switch (m) {
    case Measure::euclidean: return "euclidean";
    case Measure::correlation: return "correlation";
    case Measure::dtw: return "dtw";
    }
    return "?";
}

inline Measure parse_measure(const std::string& s) {
    if (s == "euclidean")
        return Measure::euclidean;
    if (s == "correlation")
        return Measure::correlation;
    if (s == "dtw")
        return Measure::dtw;
    throw ArgumentError("unknown measure: " + s);
}

// Correlation scores rank high-to-low; the other two are distances.
inline bool higher_is_better(Measure m) { return m == Measure::correlation; }

inline double euclidean(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size())
        throw ArgumentError("euclidean: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double d = x[i] - y[i];
        s += d * d;
    }
    return std::sqrt(s);
}

namespace detail {

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0)
        return -1.0; // constant vector: undefined correlation, treat as non-match
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

// Average ranks, ties share the mean of their positions.
inline std::vector<double> ranks_of(const std::vector<double>& x) {
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> rank(x.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]])
            ++j;
        double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
        for (std::size_t t = i; t <= j; ++t)
            rank[order[t]] = avg;
        i = j + 1;
    }
    return rank;
}

} // namespace detail

inline double correlation(const std::vector<double>& x, const std::vector<double>& y,
                          bool spearman = false) {
    if (x.size() != y.size())
        throw ArgumentError("correlation: length mismatch");
    if (x.size() < 2)
        throw ArgumentError("correlation: need at least 2 elements");
    if (!spearman)
        return detail::pearson(x, y);
    return detail::pearson(detail::ranks_of(x), detail::ranks_of(y));
}

// DTW with squared-difference local cost, normalized by the length of the
// backtracked optimal path (ties prefer the diagonal move).
inline double dtw(const std::vector<std::vector<double>>& xs, const std::vector<std::vector<double>>& ys) {
    if (xs.empty() || ys.empty())
        throw ArgumentError("dtw: empty sequence");
    const std::size_t dim = xs[0].size();
    for (const auto& v : xs)
        if (v.size() != dim)
            throw ArgumentError("dtw: inconsistent sub-vector dims");
    for (const auto& v : ys)
        if (v.size() != dim)
            throw ArgumentError("dtw: inconsistent sub-vector dims");

    const std::size_t m = xs.size(), n = ys.size();
    auto cost = [&](std::size_t i, std::size_t j) {
        double s = 0.0;
        const double* a = xs[i].data();
        const double* b = ys[j].data();
        for (std::size_t t = 0; t < dim; ++t) {
            double d = a[t] - b[t];
            s += d * d;
        }
        return s;
    };

    std::vector<double> D(m * n);
    D[0] = cost(0, 0);
    for (std::size_t j = 1; j < n; ++j)
        D[j] = D[j - 1] + cost(0, j);
    for (std::size_t i = 1; i < m; ++i) {
        D[i * n] = D[(i - 1) * n] + cost(i, 0);
        for (std::size_t j = 1; j < n; ++j) {
            double best = std::min({D[(i - 1) * n + j - 1], D[(i - 1) * n + j], D[i * n + j - 1]});
            D[i * n + j] = best + cost(i, j);
        }
    }

    std::size_t i = m - 1, j = n - 1;
    std::size_t len = 1;
    while (i > 0 || j > 0) {
        if (i == 0) {
            --j;
        } else if (j == 0) {
            --i;
        } else {
            double diag = D[(i - 1) * n + j - 1];
            double up = D[(i - 1) * n + j];
            double left = D[i * n + j - 1];
            if (diag <= up && diag <= left) {
                --i;
                --j;
            } else if (up <= left) {
                --i;
            } else {
                --j;
            }
        }
        ++len;
    }
    return D[m * n - 1] / static_cast<double>(len);
}

// Split a pooled feature back into its per-cell histograms, in cell order:
// 21 sub-vectors for fg/bg, 42 for combined.
inline std::vector<std::vector<double>> feature_sequence(const SignatureFeature& f, int k = 256) {
    if (k < 1 || f.values.size() % static_cast<std::size_t>(k) != 0)
        throw ArgumentError("feature_sequence: length not divisible by k");
    std::size_t count = f.values.size() / k;
    std::vector<std::vector<double>> seq(count);
    for (std::size_t i = 0; i < count; ++i)
        seq[i].assign(f.values.begin() + i * k, f.values.begin() + (i + 1) * k);
    return seq;
}

// Raw score between two features under a measure (correlation keeps its
// high-is-good polarity; use as_distance for minimization contexts).
inline double match_score(const SignatureFeature& query, const SignatureFeature& cand, Measure measure,
                          bool spearman = false, int k = 256) {
    if (query.mode != cand.mode)
        throw ArgumentError("match_score: feature mode mismatch");
    switch (measure) {
    case Measure::euclidean: return euclidean(query.values, cand.values);
    case Measure::correlation: return correlation(query.values, cand.values, spearman);
    case Measure::dtw: return dtw(feature_sequence(query, k), feature_sequence(cand, k));
    }
    return 0.0;
}

inline double as_distance(Measure measure, double score) {
    return higher_is_better(measure) ? -score : score;
}

inline double score_from_distance(Measure measure, double distance) {
    return higher_is_better(measure) ? -distance : distance;
}

struct RankedDoc {
    std::string doc_id;
    bool matched = true;
    double score = 0.0; // raw score in the measure's own polarity
    BBox bbox;
};

// Best-first by measure polarity, unmatched docs last, ties by doc_id.
inline void rank(std::vector<RankedDoc>& docs, Measure measure,
                 std::optional<double> threshold = std::nullopt) {
    bool hib = higher_is_better(measure);
    std::sort(docs.begin(), docs.end(), [&](const RankedDoc& a, const RankedDoc& b) {
        if (a.matched != b.matched)
            return a.matched;
        if (a.matched && a.score != b.score)
            return hib ? a.score > b.score : a.score < b.score;
        return a.doc_id < b.doc_id;
    });
    if (threshold) {
        auto fails = [&](const RankedDoc& d) {
            return !d.matched || (hib ? d.score < *threshold : d.score > *threshold);
        };
        docs.erase(std::remove_if(docs.begin(), docs.end(), fails), docs.end());
    }
}

} // namespace sigdoc
