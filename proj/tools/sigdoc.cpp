#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "sigdoc/config.hpp"
#include "sigdoc/retrieval.hpp"
#include "sigdoc/svm.hpp"
#include "sigdoc/synth.hpp"

namespace fs = std::filesystem;
using namespace sigdoc;

namespace {

struct GlobalOpts {
    std::string config_path;
    std::vector<std::string> sets; // key=value overrides
    std::optional<std::uint64_t> seed;
};

Config resolve_config(const GlobalOpts& g) {
    Config cfg;
    std::string path = g.config_path;
    if (path.empty())
        if (const char* env = std::getenv("SIGR_CONFIG"))
            path = env;
    if (!path.empty())
        cfg = load_config_file(path);
    for (const auto& kv : g.sets) {
        auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw ArgumentError("--set expects key=value, got: " + kv);
        apply_config_entry(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (g.seed)
        cfg.seed = *g.seed;
    cfg.validate();
    return cfg;
}

struct Artifacts {
    Codebook codebook;
    OvrModel detector;
};

Artifacts load_artifacts(const std::string& dir) {
    Artifacts a;
    {
        std::ifstream in = open_input(dir + "/codebook.sbvw");
        a.codebook = load_codebook(in);
    }
    std::vector<SvmModel> records;
    {
        std::ifstream in = open_input(dir + "/model.ssvm");
        records = load_model_records(in);
    }
    std::vector<int> classes;
    {
        std::ifstream in = open_input(dir + "/classes.csv");
        classes = load_classes_csv(in);
    }
    a.detector = assemble_ovr(records, classes);
    return a;
}

// ground-truth component label: signature when the component's bbox center
// falls inside the document's signature bbox
int truth_label(const BBox& comp, const CorpusEntry& entry) {
    if (!entry.has_bbox)
        return kClassPrinted;
    int cr = (comp.row0 + comp.row1) / 2;
    int cc = (comp.col0 + comp.col1) / 2;
    if (cr >= entry.bbox.row0 && cr <= entry.bbox.row1 && cc >= entry.bbox.col0 && cc <= entry.bbox.col1)
        return kClassSignature;
    return kClassPrinted;
}

// ---------------------------------------------------------------------------

int cmd_train(const std::string& manifest_path, const std::string& out_dir,
              const std::string& classes_arg, const Config& cfg) {
    std::ifstream min = open_input(manifest_path);
    std::string header;
    {
        // peek the header to pick manifest flavor
        std::getline(min, header);
        if (!header.empty() && header.back() == '\r')
            header.pop_back();
        min.seekg(0);
    }

    struct Sample {
        std::string image_path; // doc page or crop
        bool is_doc = false;
        CorpusEntry entry; // docs mode only
        int label = kClassPrinted;
    };
    std::vector<Sample> inputs;
    std::string mdir = dir_of(manifest_path);
    if (header == "doc_id,path,identity,bbox") {
        CorpusManifest manifest = load_manifest(min);
        for (const auto& e : manifest.entries)
            inputs.push_back({join_path(mdir, e.path), true, e, 0});
    } else if (header == "path,label") {
        for (const auto& row : read_csv(min, "path,label")) {
            if (row.size() != 2)
                throw FormatError("crops manifest: expected 2 fields per row");
            inputs.push_back({join_path(mdir, row[0]), false, {}, parse_class(row[1])});
        }
    } else {
        throw FormatError("unrecognized manifest header: " + header);
    }
    if (inputs.empty())
        throw ArgumentError("train: empty manifest");

    // pass 1: stream descriptors, reservoir-sample the codebook training pool
    Rng root(cfg.seed);
    Rng sampler = root.substream("kmeans-sample");
    std::vector<Descriptor128> pool;
    pool.reserve(static_cast<std::size_t>(cfg.kmeans_sample));
    std::uint64_t seen = 0;
    auto offer = [&](Descriptor128&& d) {
        bool zero = true;
        for (double v : d.v)
            if (v != 0.0) {
                zero = false;
                break;
            }
        if (zero)
            return;
        if (pool.size() < static_cast<std::size_t>(cfg.kmeans_sample)) {
            pool.push_back(std::move(d));
        } else {
            std::uint64_t j = sampler.index(seen + 1);
            if (j < pool.size())
                pool[static_cast<std::size_t>(j)] = std::move(d);
        }
        ++seen;
    };

    struct CompRef {
        std::size_t input;
        BBox bbox;
        int label;
    };
    std::vector<CompRef> comp_refs;
    std::vector<BinaryImage> binaries(inputs.size());
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        GrayImage img = load_pgm(inputs[i].image_path);
        binaries[i] = binarize_otsu(img);
        if (inputs[i].is_doc) {
            auto comps = connected_components(binaries[i]);
            double psw = page_stroke_width(comps);
            comps = filter_small_components(comps, psw, cfg.filter_k_min);
            for (const auto& comp : comps)
                comp_refs.push_back({i, comp.bbox, truth_label(comp.bbox, inputs[i].entry)});
        } else {
            auto comps = connected_components(binaries[i]);
            BBox bb{binaries[i].height, binaries[i].width, -1, -1};
            for (const auto& comp : comps) {
                bb.row0 = std::min(bb.row0, comp.bbox.row0);
                bb.col0 = std::min(bb.col0, comp.bbox.col0);
                bb.row1 = std::max(bb.row1, comp.bbox.row1);
                bb.col1 = std::max(bb.col1, comp.bbox.col1);
            }
            if (bb.row1 < 0)
                throw ArgumentError("train: blank crop " + inputs[i].image_path);
            comp_refs.push_back({i, bb, inputs[i].label});
        }
    }
    for (const auto& ref : comp_refs) {
        GrayImage crop_img = crop_normalize(binaries[ref.input], ref.bbox, cfg.crop_detect);
        for (auto& d : describe_image(crop_img, cfg.grid_detect))
            offer(std::move(d));
    }
    if (pool.empty())
        throw ArgumentError("train: no nonzero descriptors in training set");

    KmeansTrace trace;
    Codebook cb = kmeans_fit(pool, cfg.codebook_k, root.derive_seed("kmeans"), cfg.kmeans_max_iters,
                             cfg.kmeans_tol, &trace);

    // pass 2: SPM features per component, then the detector
    std::vector<std::vector<float>> feats;
    std::vector<int> labels;
    feats.reserve(comp_refs.size());
    for (const auto& ref : comp_refs) {
        feats.push_back(to_float(detection_feature(binaries[ref.input], ref.bbox, cb, cfg)));
        labels.push_back(ref.label);
    }

    std::vector<int> classes;
    if (!classes_arg.empty()) {
        std::size_t pos = 0;
        while (pos <= classes_arg.size()) {
            std::size_t next = classes_arg.find(',', pos);
            if (next == std::string::npos)
                next = classes_arg.size();
            classes.push_back(parse_class(classes_arg.substr(pos, next - pos)));
            pos = next + 1;
        }
        std::sort(classes.begin(), classes.end());
        std::set<int> declared(classes.begin(), classes.end());
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (!declared.count(labels[i]))
                throw ArgumentError("train: sample labeled " + class_name(labels[i]) +
                                    " not in --classes");
        for (int c : classes)
            if (std::find(labels.begin(), labels.end(), c) == labels.end())
                throw ArgumentError("train: class " + class_name(c) + " has no samples");
    }

    SmoParams sp;
    sp.tol = cfg.smo_tol;
    sp.max_epochs = cfg.smo_max_epochs;
    sp.cache_mb = cfg.svm_cache_mb;
    OvrModel model = classes.empty()
                         ? train_ovr(feats, labels, cfg.svm_c, cfg.svm_gamma, root.derive_seed("smo"), sp)
                         : train_ovr(feats, labels, classes, cfg.svm_c, cfg.svm_gamma,
                                     root.derive_seed("smo"), sp);

    fs::create_directories(out_dir);
    {
        std::ofstream out = open_output(out_dir + "/codebook.sbvw");
        save_codebook(out, cb);
    }
    {
        std::ofstream out = open_output(out_dir + "/model.ssvm");
        save_ovr(out, model);
    }
    {
        std::ofstream out = open_output(out_dir + "/classes.csv");
        save_classes_csv(out, model.classes);
    }
    {
        std::ofstream out = open_output(out_dir + "/run_meta.cfg");
        save_config(out, cfg);
    }
    std::cout << "trained " << model.models.size() << " machine(s) on " << feats.size()
              << " components; kmeans iterations=" << trace.iterations << "\n";
    return 0;
}

int cmd_detect(const std::string& doc_path, const std::string& artifacts_dir, const std::string& out_csv,
               const std::string& overlay_path, const Config& cfg) {
    Artifacts art = load_artifacts(artifacts_dir);
    GrayImage page = load_pgm(doc_path);
    DetectionResult det = detect_signatures(page, art.codebook, art.detector, cfg);

    std::ofstream out = open_output(out_csv);
    out << "id,row0,col0,row1,col1,pixel_count,stroke_width,label,decision\n";
    for (const auto& lc : det.comps) {
        const auto& c = lc.component;
        out << c.id << ',' << c.bbox.row0 << ',' << c.bbox.col0 << ',' << c.bbox.row1 << ','
            << c.bbox.col1 << ',' << c.pixels.size() << ',' << fmt_double(c.stroke_width) << ','
            << class_name(lc.predicted_class) << ',' << fmt_double(lc.signature_score) << '\n';
    }

    if (!overlay_path.empty()) {
        GrayImage overlay = page;
        for (const auto& lc : det.comps) {
            if (lc.predicted_class == kClassPrinted || lc.predicted_class == kClassHandwritten)
                continue;
            const BBox& b = lc.component.bbox;
            for (int c = b.col0; c <= b.col1; ++c) {
                overlay.at(b.row0, c) = 0.0f;
                overlay.at(b.row1, c) = 0.0f;
            }
            for (int r = b.row0; r <= b.row1; ++r) {
                overlay.at(r, b.col0) = 0.0f;
                overlay.at(r, b.col1) = 0.0f;
            }
        }
        save_pgm(overlay_path, overlay);
    }
    return 0;
}

int cmd_retrieve(const std::string& query_path, const std::string& manifest_path,
                 const std::string& artifacts_dir, const std::string& measure_arg,
                 const std::string& mode_arg, const std::string& out_csv,
                 const std::string& eval_log_dir, std::optional<double> threshold, const Config& cfg) {
    Artifacts art = load_artifacts(artifacts_dir);
    CorpusManifest manifest;
    {
        std::ifstream in = open_input(manifest_path);
        manifest = load_manifest(in);
    }
    RetrieveRun run;
    run.measure = parse_measure(measure_arg);
    run.mode = parse_feature_mode(mode_arg);

    GrayImage qimg = load_pgm(query_path);
    QuerySpec query = make_query("query", "", qimg, art.codebook, cfg);

    std::string mdir = dir_of(manifest_path);
    RetrieveOutput out;
    out.run = run;
    out.query_id = query.query_id;
    if (!eval_log_dir.empty())
        fs::create_directories(eval_log_dir);
    for (const auto& entry : manifest.entries) {
        GrayImage page = load_pgm(join_path(mdir, entry.path));
        DocContext ctx = build_doc_context(entry.doc_id, page, art.codebook, art.detector, cfg);
        std::vector<GroupEvalRow> log;
        out.docs.push_back(match_document(ctx, query, run, art.codebook, cfg, &log));
        if (!eval_log_dir.empty()) {
            std::ofstream lo = open_output(eval_log_dir + "/" + entry.doc_id + ".csv");
            save_eval_log_csv(lo, log);
        }
    }
    out.ranking = rank_matches(out.docs, run.measure, threshold);

    std::ofstream ro = open_output(out_csv);
    save_ranked_csv(ro, out.ranking, run.measure);
    return 0;
}

int cmd_evaluate_retrieval(const std::string& ranked_dir, const std::string& queries_path,
                           const std::string& manifest_path, const std::string& metrics_out,
                           const std::string& pr_out) {
    std::vector<QueryEntry> queries;
    {
        std::ifstream in = open_input(queries_path);
        queries = load_queries_csv(in);
    }
    if (queries.empty())
        throw ArgumentError("evaluate: no queries in truth");
    CorpusManifest manifest;
    {
        std::ifstream in = open_input(manifest_path);
        manifest = load_manifest(in);
    }
    std::map<std::string, std::string> doc_identity;
    for (const auto& e : manifest.entries)
        doc_identity[e.doc_id] = e.identity;

    double map_sum = 0.0;
    std::vector<double> pooled_scores;
    std::vector<int> pooled_rel;
    Measure measure = Measure::euclidean;
    for (const auto& q : queries) {
        std::ifstream in = open_input(ranked_dir + "/" + q.query_id + ".csv");
        auto rows = read_csv(in, "rank,doc_id,measure,score,matched_bbox");
        std::vector<RankedDoc> ranking;
        std::set<std::string> relevant;
        for (const auto& e : manifest.entries)
            if (!e.identity.empty() && e.identity == q.identity)
                relevant.insert(e.doc_id);
        for (const auto& row : rows) {
            if (row.size() != 5)
                throw FormatError("ranked CSV: expected 5 fields per row");
            RankedDoc rd;
            rd.doc_id = row[1];
            measure = parse_measure(row[2]);
            rd.matched = !row[3].empty();
            rd.score = rd.matched ? std::stod(row[3]) : 0.0;
            ranking.push_back(rd);
            if (rd.matched) {
                pooled_scores.push_back(rd.score);
                pooled_rel.push_back(relevant.count(rd.doc_id) ? 1 : 0);
            }
        }
        map_sum += average_precision(ranking, relevant);
    }
    double map = map_sum / static_cast<double>(queries.size());

    if (!pr_out.empty()) {
        EvalCurve pr = pr_curve(pooled_scores, pooled_rel, measure);
        std::ofstream out = open_output(pr_out);
        save_pr_csv(out, pr);
    }
    std::ofstream out = open_output(metrics_out);
    save_metrics_csv(out, map, std::nullopt, std::nullopt);
    std::cout << "map=" << fmt_double(map) << "\n";
    return 0;
}

int cmd_evaluate_detection(const std::string& detections_dir, const std::string& manifest_path,
                           const std::string& metrics_out, const std::string& roc_out,
                           const std::string& confusion_out) {
    CorpusManifest manifest;
    {
        std::ifstream in = open_input(manifest_path);
        manifest = load_manifest(in);
    }
    if (manifest.entries.empty())
        throw ArgumentError("evaluate: empty manifest");

    std::vector<int> preds, truths;
    std::vector<double> scores;
    std::vector<int> pos_labels;
    for (const auto& entry : manifest.entries) {
        std::string path = detections_dir + "/" + entry.doc_id + ".csv";
        if (!fs::exists(path))
            continue; // documents without a detection dump are skipped
        std::ifstream in = open_input(path);
        for (const auto& row :
             read_csv(in, "id,row0,col0,row1,col1,pixel_count,stroke_width,label,decision")) {
            if (row.size() != 9)
                throw FormatError("detections CSV: expected 9 fields per row");
            BBox bb;
            bb.row0 = std::stoi(row[1]);
            bb.col0 = std::stoi(row[2]);
            bb.row1 = std::stoi(row[3]);
            bb.col1 = std::stoi(row[4]);
            int truth = truth_label(bb, entry);
            int pred = parse_class(row[7]);
            preds.push_back(pred);
            truths.push_back(truth);
            scores.push_back(std::stod(row[8]));
            pos_labels.push_back(truth == kClassSignature ? 1 : 0);
        }
    }
    if (preds.empty())
        throw ArgumentError("evaluate: no detection rows found");

    std::int64_t correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i)
        if (preds[i] == truths[i])
            ++correct;
    double accuracy = static_cast<double>(correct) / static_cast<double>(preds.size());

    EvalCurve roc = roc_auc(scores, pos_labels);
    if (!roc_out.empty()) {
        std::ofstream out = open_output(roc_out);
        save_roc_csv(out, roc);
    }
    if (!confusion_out.empty()) {
        std::set<int> class_set(truths.begin(), truths.end());
        class_set.insert(preds.begin(), preds.end());
        std::vector<int> classes(class_set.begin(), class_set.end());
        auto cm = confusion_matrix(preds, truths, classes);
        std::ofstream out = open_output(confusion_out);
        out << "predicted";
        for (int c : classes)
            out << ',' << class_name(c);
        out << '\n';
        for (std::size_t p = 0; p < classes.size(); ++p) {
            out << class_name(classes[p]);
            for (std::size_t t = 0; t < classes.size(); ++t)
                out << ',' << fmt_double(cm[p][t]);
            out << '\n';
        }
    }
    std::ofstream out = open_output(metrics_out);
    save_metrics_csv(out, std::nullopt, roc.auc, accuracy);
    std::cout << "accuracy=" << fmt_double(accuracy) << " auc=" << fmt_double(roc.auc) << "\n";
    return 0;
}

int cmd_noise(const std::string& manifest_path, const std::string& out_dir, double variance,
              const Config& cfg) {
    CorpusManifest manifest;
    {
        std::ifstream in = open_input(manifest_path);
        manifest = load_manifest(in);
    }
    std::string mdir = dir_of(manifest_path);
    fs::create_directories(out_dir + "/pages");
    Rng root(cfg.seed);
    CorpusManifest nm;
    for (const auto& entry : manifest.entries) {
        GrayImage page = load_pgm(join_path(mdir, entry.path));
        GrayImage noisy = add_gaussian_noise(page, variance,
                                             root.derive_seed("noise-" + entry.doc_id));
        CorpusEntry ne = entry;
        ne.path = "pages/" + entry.doc_id + ".pgm";
        save_pgm(out_dir + "/" + ne.path, noisy);
        nm.entries.push_back(ne);
    }
    std::ofstream out = open_output(out_dir + "/manifest.csv");
    save_manifest(out, nm);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"signature detection, grouping, and retrieval for scanned documents"};
    app.require_subcommand(1);
    app.fallthrough(); // global flags may follow the subcommand

    GlobalOpts g;
    app.add_option("--config", g.config_path, "key=value config file (falls back to $SIGR_CONFIG)");
    app.add_option("--set", g.sets, "override one config key, e.g. --set codebook_k=128");
    std::uint64_t seed_val = 0;
    auto* seed_opt = app.add_option("--seed", seed_val, "root RNG seed");

    auto* train = app.add_subcommand("train", "fit codebook and detector from a manifest");
    std::string t_manifest, t_out, t_classes;
    train->add_option("--manifest", t_manifest)->required();
    train->add_option("--out", t_out)->required();
    train->add_option("--classes", t_classes, "comma-separated class names for one-vs-rest");

    auto* detect = app.add_subcommand("detect", "label the components of one document");
    std::string d_doc, d_art, d_out, d_overlay;
    detect->add_option("--doc", d_doc)->required();
    detect->add_option("--artifacts", d_art)->required();
    detect->add_option("--out", d_out)->required();
    detect->add_option("--overlay", d_overlay, "write a PGM with signature bboxes outlined");

    auto* retrieve = app.add_subcommand("retrieve", "rank corpus documents against a query signature");
    std::string r_query, r_manifest, r_art, r_measure = "euclidean", r_mode = "combined", r_out;
    std::string r_log_dir;
    double r_threshold = 0.0;
    retrieve->add_option("--query", r_query)->required();
    retrieve->add_option("--manifest", r_manifest)->required();
    retrieve->add_option("--artifacts", r_art)->required();
    retrieve->add_option("--measure", r_measure, "euclidean|correlation|dtw");
    retrieve->add_option("--mode", r_mode, "foreground|background|combined");
    retrieve->add_option("--out", r_out)->required();
    retrieve->add_option("--eval-log-dir", r_log_dir, "per-document cluster evaluation logs");
    auto* thr_opt = retrieve->add_option("--threshold", r_threshold, "score cut for matched docs");

    auto* evaluate = app.add_subcommand("evaluate", "score a finished run against ground truth");
    std::string e_kind, e_ranked_dir, e_queries, e_manifest, e_detections_dir;
    std::string e_metrics, e_pr, e_roc, e_confusion;
    evaluate->add_option("--kind", e_kind, "retrieval|detection")->required();
    evaluate->add_option("--ranked-dir", e_ranked_dir, "directory of <query_id>.csv rankings");
    evaluate->add_option("--queries", e_queries, "queries.csv ground truth");
    evaluate->add_option("--manifest", e_manifest)->required();
    evaluate->add_option("--detections-dir", e_detections_dir, "directory of <doc_id>.csv detections");
    evaluate->add_option("--metrics-out", e_metrics)->required();
    evaluate->add_option("--pr-out", e_pr);
    evaluate->add_option("--roc-out", e_roc);
    evaluate->add_option("--confusion-out", e_confusion);

    auto* synth = app.add_subcommand("synth", "generate a synthetic signed-document corpus");
    std::string s_out;
    SynthParams sp;
    synth->add_option("--out", s_out)->required();
    synth->add_option("--identities", sp.identities);
    synth->add_option("--docs", sp.docs_per_identity);
    synth->add_option("--width", sp.page_w);
    synth->add_option("--height", sp.page_h);
    synth->add_option("--noise", sp.noise_variances, "emit a noisy twin corpus per variance");

    auto* noise = app.add_subcommand("noise", "re-emit a corpus with additive gaussian noise");
    std::string n_manifest, n_out;
    double n_variance = 0.0;
    noise->add_option("--manifest", n_manifest)->required();
    noise->add_option("--out", n_out)->required();
    noise->add_option("--variance", n_variance)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (seed_opt->count())
            g.seed = seed_val;
        Config cfg = resolve_config(g);

        if (train->parsed())
            return cmd_train(t_manifest, t_out, t_classes, cfg);
        if (detect->parsed())
            return cmd_detect(d_doc, d_art, d_out, d_overlay, cfg);
        if (retrieve->parsed())
            return cmd_retrieve(r_query, r_manifest, r_art, r_measure, r_mode, r_out, r_log_dir,
                                thr_opt->count() ? std::optional<double>(r_threshold) : std::nullopt,
                                cfg);
        if (evaluate->parsed()) {
            if (e_kind == "retrieval") {
                if (e_ranked_dir.empty() || e_queries.empty())
                    throw ArgumentError("evaluate --kind retrieval needs --ranked-dir and --queries");
                return cmd_evaluate_retrieval(e_ranked_dir, e_queries, e_manifest, e_metrics, e_pr);
            }
            if (e_kind == "detection") {
                if (e_detections_dir.empty())
                    throw ArgumentError("evaluate --kind detection needs --detections-dir");
                return cmd_evaluate_detection(e_detections_dir, e_manifest, e_metrics, e_roc,
                                              e_confusion);
            }
            throw ArgumentError("evaluate: unknown --kind " + e_kind);
        }
        if (synth->parsed()) {
            sp.seed = cfg.seed;
            generate_corpus(s_out, sp, cfg);
            return 0;
        }
        if (noise->parsed())
            return cmd_noise(n_manifest, n_out, n_variance, cfg);
        throw ArgumentError("no subcommand");
    } catch (const ArgumentError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
