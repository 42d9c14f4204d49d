#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "sigdoc/config.hpp"
#include "sigdoc/csv.hpp"
#include "sigdoc/grouping.hpp"
#include "sigdoc/imaging.hpp"
#include "sigdoc/matching.hpp"
#include "sigdoc/svm.hpp"

namespace sigdoc {

// Fixed class ids used across training, detection, and the CLI.
inline constexpr int kClassPrinted = 0;
inline constexpr int kClassHandwritten = 1;
inline constexpr int kClassSignature = 2;
inline constexpr int kClassLogo = 3;

inline std::string class_name(int c) {
    switch (c) {
    case kClassPrinted: return "printed";
    case kClassHandwritten: return "handwritten";
    case kClassSignature: return "signature";
    case kClassLogo: return "logo";
    }
    return "class" + std::to_string(c);
}

inline int parse_class(const std::string& s) {
    if (s == "printed")
        return kClassPrinted;
    if (s == "handwritten")
        return kClassHandwritten;
    if (s == "signature")
        return kClassSignature;
    if (s == "logo")
        return kClassLogo;
    throw ArgumentError("unknown class: " + s);
}

struct CorpusEntry {
    std::string doc_id;
    std::string path;     // relative to the manifest file's directory
    std::string identity; // empty = no signature ground truth
    bool has_bbox = false;
    BBox bbox;
};

struct CorpusManifest {
    std::vector<CorpusEntry> entries;
};

inline std::string format_bbox(const BBox& b) {
    return std::to_string(b.row0) + ":" + std::to_string(b.col0) + ":" + std::to_string(b.row1) +
           ":" + std::to_string(b.col1);
}

inline BBox parse_bbox(const std::string& s) {
    BBox b;
    int parts[4];
    std::size_t pos = 0;
    for (int i = 0; i < 4; ++i) {
        std::size_t next = i < 3 ? s.find(':', pos) : s.size();
        if (next == std::string::npos)
            throw FormatError("bad bbox field: " + s);
        parts[i] = std::stoi(s.substr(pos, next - pos));
        pos = next + 1;
    }
    b.row0 = parts[0];
    b.col0 = parts[1];
    b.row1 = parts[2];
    b.col1 = parts[3];
    return b;
}

inline void save_manifest(std::ostream& out, const CorpusManifest& m) {
    out << "doc_id,path,identity,bbox\n";
    for (const auto& e : m.entries)
        out << e.doc_id << ',' << e.path << ',' << e.identity << ','
            << (e.has_bbox ? format_bbox(e.bbox) : "") << '\n';
}

inline CorpusManifest load_manifest(std::istream& in) {
    CorpusManifest m;
    std::set<std::string> seen;
    for (const auto& row : read_csv(in, "doc_id,path,identity,bbox")) {
        if (row.size() != 4)
            throw FormatError("manifest: expected 4 fields per row");
        CorpusEntry e;
        e.doc_id = row[0];
        e.path = row[1];
        e.identity = row[2];
        if (!row[3].empty()) {
            e.has_bbox = true;
            e.bbox = parse_bbox(row[3]);
        }
        if (!seen.insert(e.doc_id).second)
            throw FormatError("manifest: duplicate doc_id " + e.doc_id);
        m.entries.push_back(std::move(e));
    }
    return m;
}

inline std::string dir_of(const std::string& path) {
    auto pos = path.find_last_of('/');
    return pos == std::string::npos ? std::string(".") : path.substr(0, pos);
}

inline std::string join_path(const std::string& dir, const std::string& rel) {
    if (!rel.empty() && rel.front() == '/')
        return rel;
    return dir + "/" + rel;
}

// ---------------------------------------------------------------------------
// Detection

struct LabeledComponent {
    Component component;
    int predicted_class = kClassPrinted;
    double signature_score = 0.0; // decision value of the signature-side class
};

struct DetectionResult {
    BinaryImage binary;
    double page_sw = 0.0;
    std::vector<LabeledComponent> comps;
};

inline std::vector<float> to_float(const std::vector<double>& v) {
    std::vector<float> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        out[i] = static_cast<float>(v[i]);
    return out;
}

// SPM feature of one component crop on the detection grid.
inline std::vector<double> detection_feature(const BinaryImage& binary, const BBox& bbox,
                                             const Codebook& cb, const Config& cfg) {
    GrayImage crop = crop_normalize(binary, bbox, cfg.crop_detect);
    std::vector<Descriptor128> descs = describe_image(crop, cfg.grid_detect);
    WordMap wm = assign_grid(cb, descs, cfg.grid_detect);
    return spm_pool(wm, cb.k, cfg.normalized_histograms).values;
}

inline DetectionResult detect_signatures(const GrayImage& page, const Codebook& cb, const OvrModel& detector,
                                         const Config& cfg) {
    DetectionResult res;
    res.binary = binarize_otsu(page);
    std::vector<Component> comps = connected_components(res.binary);
    res.page_sw = page_stroke_width(comps);
    if (comps.empty())
        return res;
    comps = filter_small_components(comps, res.page_sw, cfg.filter_k_min);

    // index of the signature-like class among the detector's classes: the
    // signature class when present, otherwise the highest class (logo mode)
    std::size_t sig_idx = detector.classes.size() - 1;
    for (std::size_t i = 0; i < detector.classes.size(); ++i)
        if (detector.classes[i] == kClassSignature)
            sig_idx = i;

    for (auto& comp : comps) {
        std::vector<float> feat = to_float(detection_feature(res.binary, comp.bbox, cb, cfg));
        std::vector<double> scores = decision_values(detector, feat);
        std::size_t best = 0;
        for (std::size_t i = 1; i < scores.size(); ++i)
            if (scores[i] > scores[best])
                best = i;
        LabeledComponent lc;
        lc.component = std::move(comp);
        lc.predicted_class = detector.classes[best];
        lc.signature_score = scores[sig_idx];
        res.comps.push_back(std::move(lc));
    }
    return res;
}

// ---------------------------------------------------------------------------
// Retrieval

struct QuerySpec {
    std::string query_id;
    std::string identity;
    BinaryImage binary;
    int height = 0, width = 0;
    SignatureFeature combined; // fg+bg feature, slices give fg / bg
};

inline SignatureFeature slice_mode(const SignatureFeature& combined, FeatureMode mode, int k) {
    if (combined.mode != FeatureMode::combined)
        throw ArgumentError("slice_mode: expected a combined feature");
    SignatureFeature out;
    out.mode = mode;
    const std::size_t half = 21 * static_cast<std::size_t>(k);
    switch (mode) {
    case FeatureMode::combined:
        out.values = combined.values;
        break;
    case FeatureMode::foreground:
        out.values.assign(combined.values.begin(), combined.values.begin() + half);
        break;
    case FeatureMode::background:
        out.values.assign(combined.values.begin() + half, combined.values.end());
        break;
    }
    return out;
}

inline QuerySpec make_query(const std::string& query_id, const std::string& identity,
                            const GrayImage& img, const Codebook& cb, const Config& cfg) {
    QuerySpec q;
    q.query_id = query_id;
    q.identity = identity;
    q.binary = binarize_otsu(img);
    q.height = img.height;
    q.width = img.width;
    q.combined = signature_feature(q.binary, cb, FeatureMode::combined, cfg.grid_match, cfg.crop_match,
                                   cfg.normalized_histograms);
    return q;
}

struct RetrieveRun {
    Measure measure = Measure::euclidean;
    FeatureMode mode = FeatureMode::combined;
};

struct DocMatch {
    std::string doc_id;
    GroupMatchResult gm;
    double logged_min = 0.0; // min over this doc's eval-log distances (audit)
    bool has_logged = false;
    double score = 0.0; // gm.best_distance in the measure's own polarity
};

struct RetrieveOutput {
    RetrieveRun run;
    std::string query_id;
    std::vector<DocMatch> docs;   // one per corpus entry, manifest order
    std::vector<RankedDoc> ranking;
};

// Per-document working state, reusable across queries/measures/modes: the
// page is read and classified once, corners come from signature-classified
// pixels only, and cluster features are cached by their padded bbox.
struct DocContext {
    std::string doc_id;
    BinaryImage binary;
    std::vector<CornerPoint> corners;
    std::map<std::array<int, 4>, SignatureFeature> feature_cache; // combined features

    const SignatureFeature& cluster_feature(const BBox& bbox, const Codebook& cb, const Config& cfg) {
        std::array<int, 4> key = {bbox.row0, bbox.col0, bbox.row1, bbox.col1};
        auto it = feature_cache.find(key);
        if (it != feature_cache.end())
            return it->second;
        BinaryImage crop_img = crop(binary, bbox);
        SignatureFeature f = signature_feature(crop_img, cb, FeatureMode::combined, cfg.grid_match,
                                               cfg.crop_match, cfg.normalized_histograms);
        return feature_cache.emplace(key, std::move(f)).first->second;
    }
};

inline DocContext build_doc_context(const std::string& doc_id, const GrayImage& page, const Codebook& cb,
                                    const OvrModel& detector, const Config& cfg) {
    DocContext ctx;
    ctx.doc_id = doc_id;
    DetectionResult det = detect_signatures(page, cb, detector, cfg);
    ctx.binary = std::move(det.binary);

    BinaryImage sig_only(ctx.binary.width, ctx.binary.height);
    for (const auto& lc : det.comps) {
        if (lc.predicted_class == kClassPrinted || lc.predicted_class == kClassHandwritten)
            continue;
        for (auto [r, c] : lc.component.pixels)
            sig_only.at(r, c) = 1;
    }
    ctx.corners = harris_corners(to_gray(sig_only), cfg.harris_sigma, cfg.harris_k, cfg.harris_rel_threshold);
    return ctx;
}

// Score one document context against one query under one run configuration.
inline DocMatch match_document(DocContext& ctx, const QuerySpec& query, const RetrieveRun& run,
                               const Codebook& cb, const Config& cfg,
                               std::vector<GroupEvalRow>* eval_log = nullptr) {
    SignatureFeature qf = slice_mode(query.combined, run.mode, cb.k);
    std::vector<GroupEvalRow> local_log;
    std::vector<GroupEvalRow>* log = eval_log ? eval_log : &local_log;

    auto cluster_distance = [&](const BBox& bbox) {
        const SignatureFeature& cf = ctx.cluster_feature(bbox, cb, cfg);
        SignatureFeature cand = slice_mode(cf, run.mode, cb.k);
        double score = match_score(qf, cand, run.measure, cfg.spearman_correlation, cb.k);
        return as_distance(run.measure, score);
    };

    DocMatch dm;
    dm.doc_id = ctx.doc_id;
    std::size_t log_start = log->size();
    dm.gm = group_and_match(ctx.corners, query.height, query.width, ctx.binary, cluster_distance,
                            cfg.dbscan_min_points, 2, log);
    for (std::size_t i = log_start; i < log->size(); ++i) {
        double d = (*log)[i].distance;
        if (!dm.has_logged || d < dm.logged_min) {
            dm.logged_min = d;
            dm.has_logged = true;
        }
    }
    if (dm.gm.matched)
        dm.score = score_from_distance(run.measure, dm.gm.best_distance);
    return dm;
}

inline std::vector<RankedDoc> rank_matches(const std::vector<DocMatch>& docs, Measure measure,
                                           std::optional<double> threshold = std::nullopt) {
    std::vector<RankedDoc> rd;
    rd.reserve(docs.size());
    for (const auto& d : docs)
        rd.push_back({d.doc_id, d.gm.matched, d.score, d.gm.best_cluster_bbox});
    rank(rd, measure, threshold);
    return rd;
}

// Bulk driver: documents on the outer loop so each page is loaded, detected
// and corner-extracted exactly once for all queries and run configurations.
inline std::vector<RetrieveOutput> retrieve_all(const CorpusManifest& manifest,
                                                const std::string& manifest_dir,
                                                const std::vector<QuerySpec>& queries,
                                                const std::vector<RetrieveRun>& runs, const Codebook& cb,
                                                const OvrModel& detector, const Config& cfg) {
    std::vector<RetrieveOutput> outputs(queries.size() * runs.size());
    for (std::size_t qi = 0; qi < queries.size(); ++qi) {
        for (std::size_t ri = 0; ri < runs.size(); ++ri) {
            auto& out = outputs[qi * runs.size() + ri];
            out.run = runs[ri];
            out.query_id = queries[qi].query_id;
        }
    }
    for (const auto& entry : manifest.entries) {
        GrayImage page = load_pgm(join_path(manifest_dir, entry.path));
        DocContext ctx = build_doc_context(entry.doc_id, page, cb, detector, cfg);
        for (std::size_t qi = 0; qi < queries.size(); ++qi)
            for (std::size_t ri = 0; ri < runs.size(); ++ri)
                outputs[qi * runs.size() + ri].docs.push_back(
                    match_document(ctx, queries[qi], runs[ri], cb, cfg));
    }
    for (auto& out : outputs)
        out.ranking = rank_matches(out.docs, out.run.measure);
    return outputs;
}

// Single-query convenience wrapper (the CLI entry point).
inline RetrieveOutput retrieve(const CorpusManifest& manifest, const std::string& manifest_dir,
                               const QuerySpec& query, const RetrieveRun& run, const Codebook& cb,
                               const OvrModel& detector, const Config& cfg) {
    return retrieve_all(manifest, manifest_dir, {query}, {run}, cb, detector, cfg)[0];
}

// Logo mode: same machinery, mode pinned to foreground; the detector passed
// in is expected to be a logo-vs-rest model.
inline RetrieveOutput logo_mode_retrieve(const CorpusManifest& manifest, const std::string& manifest_dir,
                                         const QuerySpec& query, Measure measure, const Codebook& cb,
                                         const OvrModel& detector, const Config& cfg) {
    return retrieve(manifest, manifest_dir, query, RetrieveRun{measure, FeatureMode::foreground}, cb,
                    detector, cfg);
}

// ---------------------------------------------------------------------------
// Evaluation

struct CurvePoint {
    double x = 0.0; // threshold (PR) or fpr (ROC)
    double y = 0.0; // precision  or tpr
    double z = 0.0; // recall (PR only)
};

struct EvalCurve {
    std::vector<CurvePoint> points;
    double auc = 0.0;
};

// Precision/recall over a sweep of score thresholds, loosest first; the
// threshold keeps documents on the "better" side per the measure polarity.
inline EvalCurve pr_curve(const std::vector<double>& scores, const std::vector<int>& relevant,
                          Measure measure) {
    if (scores.size() != relevant.size())
        throw ArgumentError("pr_curve: size mismatch");
    int total_rel = 0;
    for (int r : relevant)
        total_rel += r ? 1 : 0;
    if (total_rel == 0)
        throw ArgumentError("pr_curve: no relevant documents");

    std::vector<double> thresholds = scores;
    std::sort(thresholds.begin(), thresholds.end());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
    if (!higher_is_better(measure))
        std::reverse(thresholds.begin(), thresholds.end()); // loosest (largest distance) first

    EvalCurve curve;
    for (double t : thresholds) {
        int tp = 0, pp = 0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            bool pass = higher_is_better(measure) ? scores[i] >= t : scores[i] <= t;
            if (pass) {
                ++pp;
                if (relevant[i])
                    ++tp;
            }
        }
        if (pp == 0)
            continue;
        curve.points.push_back({t, static_cast<double>(tp) / pp, static_cast<double>(tp) / total_rel});
    }
    return curve;
}

// ROC by threshold sweep; AUC by trapezoid rule. Scores oriented so that
// larger means more positive.
inline EvalCurve roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size())
        throw ArgumentError("roc_auc: size mismatch");
    std::int64_t pos = 0, neg = 0;
    for (int l : labels)
        (l ? pos : neg) += 1;
    if (pos == 0 || neg == 0)
        throw ArgumentError("roc_auc: both labels must be present");

    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i)
        order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b])
            return scores[a] > scores[b];
        return a < b;
    });

    EvalCurve curve;
    curve.points.push_back({0.0, 0.0, 0.0});
    double auc = 0.0;
    std::int64_t tp = 0, fp = 0;
    double prev_fpr = 0.0, prev_tpr = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        // consume a whole tied-score group before emitting a point
        double s = scores[order[i]];
        while (i < order.size() && scores[order[i]] == s) {
            if (labels[order[i]])
                ++tp;
            else
                ++fp;
            ++i;
        }
        double tpr = static_cast<double>(tp) / pos;
        double fpr = static_cast<double>(fp) / neg;
        auc += 0.5 * (fpr - prev_fpr) * (tpr + prev_tpr);
        curve.points.push_back({fpr, tpr, 0.0});
        prev_fpr = fpr;
        prev_tpr = tpr;
    }
    curve.auc = auc;
    return curve;
}

// Column-normalized confusion: entry [pred][true] is the fraction of the
// true class predicted as pred, so each column sums to 1.
inline std::vector<std::vector<double>> confusion_matrix(const std::vector<int>& predictions,
                                                         const std::vector<int>& truth,
                                                         const std::vector<int>& classes) {
    if (predictions.size() != truth.size())
        throw ArgumentError("confusion_matrix: size mismatch");
    std::map<int, std::size_t> idx;
    for (std::size_t i = 0; i < classes.size(); ++i)
        idx[classes[i]] = i;
    std::vector<std::vector<double>> m(classes.size(), std::vector<double>(classes.size(), 0.0));
    std::vector<std::int64_t> col_count(classes.size(), 0);
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        auto p = idx.find(predictions[i]);
        auto t = idx.find(truth[i]);
        if (p == idx.end() || t == idx.end())
            throw ArgumentError("confusion_matrix: unknown class label");
        m[p->second][t->second] += 1.0;
        ++col_count[t->second];
    }
    for (std::size_t t = 0; t < classes.size(); ++t)
        if (col_count[t] > 0)
            for (std::size_t p = 0; p < classes.size(); ++p)
                m[p][t] /= static_cast<double>(col_count[t]);
    return m;
}

// AP over a best-first ranking; MAP callers average over queries.
inline double average_precision(const std::vector<RankedDoc>& ranking,
                                const std::set<std::string>& relevant) {
    if (relevant.empty())
        throw ArgumentError("average_precision: no relevant documents");
    double ap = 0.0;
    int hits = 0;
    for (std::size_t i = 0; i < ranking.size(); ++i) {
        if (relevant.count(ranking[i].doc_id)) {
            ++hits;
            ap += static_cast<double>(hits) / static_cast<double>(i + 1);
        }
    }
    return ap / static_cast<double>(relevant.size());
}

// ---------------------------------------------------------------------------
// CSV emitters

inline void save_ranked_csv(std::ostream& out, const std::vector<RankedDoc>& ranking, Measure measure) {
    out << "rank,doc_id,measure,score,matched_bbox\n";
    for (std::size_t i = 0; i < ranking.size(); ++i) {
        const auto& r = ranking[i];
        out << (i + 1) << ',' << r.doc_id << ',' << measure_name(measure) << ',';
        if (r.matched)
            out << fmt_double(r.score) << ',' << format_bbox(r.bbox);
        else
            out << ',';
        out << '\n';
    }
}

inline void save_eval_log_csv(std::ostream& out, const std::vector<GroupEvalRow>& rows) {
    out << "eps,cluster_id,bbox,distance\n";
    for (const auto& r : rows)
        out << fmt_double(r.eps) << ',' << r.cluster_id << ',' << format_bbox(r.bbox) << ','
            << fmt_double(r.distance) << '\n';
}

inline void save_pr_csv(std::ostream& out, const EvalCurve& curve) {
    out << "threshold,precision,recall\n";
    for (const auto& p : curve.points)
        out << fmt_double(p.x) << ',' << fmt_double(p.y) << ',' << fmt_double(p.z) << '\n';
}

inline void save_roc_csv(std::ostream& out, const EvalCurve& curve) {
    out << "fpr,tpr\n";
    for (const auto& p : curve.points)
        out << fmt_double(p.x) << ',' << fmt_double(p.y) << '\n';
}

inline void save_metrics_csv(std::ostream& out, std::optional<double> map, std::optional<double> auc,
                             std::optional<double> accuracy) {
    out << "map,auc,accuracy\n";
    if (map)
        out << fmt_double(*map);
    out << ',';
    if (auc)
        out << fmt_double(*auc);
    out << ',';
    if (accuracy)
        out << fmt_double(*accuracy);
    out << '\n';
}

} // namespace sigdoc
