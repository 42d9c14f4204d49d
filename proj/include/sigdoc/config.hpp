#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "sigdoc/error.hpp"

namespace sigdoc {

// Pipeline configuration. Defaults: vocabulary 256, detection grid 14x14,
// matching grid 30x30, 16px patches, 3 pyramid levels, RBF SVM with
// gamma = 1 and C = 1. Precedence is flags > config file > defaults.
struct Config {
    int codebook_k = 256;
    int grid_detect = 14;
    int grid_match = 30;
    int patch = 16;
    int spm_levels = 3;
    double svm_gamma = 1.0;
    double svm_c = 1.0;
    double harris_k = 0.04;
    double harris_sigma = 1.5;
    double harris_rel_threshold = 0.01;
    int dbscan_min_points = 3;
    double filter_k_min = 4.0;
    int crop_detect = 128;
    int crop_match = 256;
    std::uint64_t seed = 0;

    // implementation knobs, documented defaults
    int kmeans_max_iters = 100;
    double kmeans_tol = 1e-4;
    int kmeans_sample = 30000;
    double smo_tol = 1e-3;
    int smo_max_epochs = 200;
    double svm_cache_mb = 256.0;
    bool normalized_histograms = true;
    bool spearman_correlation = false;

    void validate() const {
        auto positive = [](double v, const char* name) {
            if (!(v > 0))
                throw ArgumentError(std::string("config: ") + name + " must be positive");
        };
        positive(codebook_k, "codebook_k");
        positive(grid_detect, "grid_detect");
        positive(grid_match, "grid_match");
        positive(patch, "patch");
        positive(spm_levels, "spm_levels");
        positive(svm_gamma, "svm_gamma");
        positive(svm_c, "svm_c");
        positive(harris_k, "harris_k");
        positive(harris_sigma, "harris_sigma");
        positive(harris_rel_threshold, "harris_rel_threshold");
        positive(dbscan_min_points, "dbscan_min_points");
        positive(filter_k_min, "filter_k_min");
        positive(crop_detect, "crop_detect");
        positive(crop_match, "crop_match");
        if (spm_levels != 3)
            throw ArgumentError("config: spm_levels other than 3 is not supported");
    }
};

namespace detail {

inline bool parse_bool(const std::string& v) {
    if (v == "1" || v == "true" || v == "yes")
        return true;
    if (v == "0" || v == "false" || v == "no")
        return false;
    throw ArgumentError("config: bad boolean value '" + v + "'");
}

} // namespace detail

// key=value lines; '#' starts a comment; blank lines ignored.
inline void apply_config_entry(Config& cfg, const std::string& key, const std::string& value) {
    try {
        if (key == "codebook_k") cfg.codebook_k = std::stoi(value);
        else if (key == "grid_detect") cfg.grid_detect = std::stoi(value);
        else if (key == "grid_match") cfg.grid_match = std::stoi(value);
        else if (key == "patch") cfg.patch = std::stoi(value);
        else if (key == "spm_levels") cfg.spm_levels = std::stoi(value);
        else if (key == "svm_gamma") cfg.svm_gamma = std::stod(value);
        else if (key == "svm_c") cfg.svm_c = std::stod(value);
        else if (key == "harris_k") cfg.harris_k = std::stod(value);
        else if (key == "harris_sigma") cfg.harris_sigma = std::stod(value);
        else if (key == "harris_rel_threshold") cfg.harris_rel_threshold = std::stod(value);
        else if (key == "dbscan_min_points") cfg.dbscan_min_points = std::stoi(value);
        else if (key == "filter_k_min") cfg.filter_k_min = std::stod(value);
        else if (key == "crop_detect") cfg.crop_detect = std::stoi(value);
        else if (key == "crop_match") cfg.crop_match = std::stoi(value);
        else if (key == "seed") cfg.seed = std::stoull(value);
        else if (key == "kmeans_max_iters") cfg.kmeans_max_iters = std::stoi(value);
        else if (key == "kmeans_tol") cfg.kmeans_tol = std::stod(value);
        else if (key == "kmeans_sample") cfg.kmeans_sample = std::stoi(value);
        else if (key == "smo_tol") cfg.smo_tol = std::stod(value);
        else if (key == "smo_max_epochs") cfg.smo_max_epochs = std::stoi(value);
        else if (key == "svm_cache_mb") cfg.svm_cache_mb = std::stod(value);
        else if (key == "normalized_histograms") cfg.normalized_histograms = detail::parse_bool(value);
        else if (key == "spearman_correlation") cfg.spearman_correlation = detail::parse_bool(value);
        else throw ArgumentError("config: unknown key '" + key + "'");
    } catch (const std::invalid_argument&) {
        throw ArgumentError("config: bad value for " + key + ": '" + value + "'");
    } catch (const std::out_of_range&) {
        throw ArgumentError("config: value out of range for " + key + ": '" + value + "'");
    }
}

inline Config load_config(std::istream& in, Config base = Config{}) {
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos)
            line.erase(hash);
        auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos)
            continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ArgumentError("config line " + std::to_string(lineno) + ": expected key=value");
        auto trim = [](std::string s) {
            auto b = s.find_first_not_of(" \t\r");
            auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        apply_config_entry(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return base;
}

inline Config load_config_file(const std::string& path, Config base = Config{}) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open config file: " + path);
    return load_config(in, base);
}

inline void save_config(std::ostream& out, const Config& c) {
    out << "codebook_k=" << c.codebook_k << "\n"
        << "grid_detect=" << c.grid_detect << "\n"
        << "grid_match=" << c.grid_match << "\n"
        << "patch=" << c.patch << "\n"
        << "spm_levels=" << c.spm_levels << "\n"
        << "svm_gamma=" << c.svm_gamma << "\n"
        << "svm_c=" << c.svm_c << "\n"
        << "harris_k=" << c.harris_k << "\n"
        << "harris_sigma=" << c.harris_sigma << "\n"
        << "harris_rel_threshold=" << c.harris_rel_threshold << "\n"
        << "dbscan_min_points=" << c.dbscan_min_points << "\n"
        << "filter_k_min=" << c.filter_k_min << "\n"
        << "crop_detect=" << c.crop_detect << "\n"
        << "crop_match=" << c.crop_match << "\n"
        << "seed=" << c.seed << "\n"
        << "kmeans_max_iters=" << c.kmeans_max_iters << "\n"
        << "kmeans_tol=" << c.kmeans_tol << "\n"
        << "kmeans_sample=" << c.kmeans_sample << "\n"
        << "smo_tol=" << c.smo_tol << "\n"
        << "smo_max_epochs=" << c.smo_max_epochs << "\n"
        << "svm_cache_mb=" << c.svm_cache_mb << "\n"
        << "normalized_histograms=" << (c.normalized_histograms ? 1 : 0) << "\n"
        << "spearman_correlation=" << (c.spearman_correlation ? 1 : 0) << "\n";
}

} // namespace sigdoc
