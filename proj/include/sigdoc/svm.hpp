#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <list>
#include <unordered_map>
#include <vector>

#include "sigdoc/csv.hpp"
#include "sigdoc/io.hpp"
#include "sigdoc/rng.hpp"

namespace sigdoc {

inline double rbf_kernel(const float* x, const float* y, std::size_t dim, double gamma) {
    double s = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
        double d = static_cast<double>(x[i]) - static_cast<double>(y[i]);
        s += d * d;
    }
    return std::exp(-gamma * s);
}

inline double rbf_kernel(const std::vector<float>& x, const std::vector<float>& y, double gamma) {
    if (x.size() != y.size())
        throw ArgumentError("rbf_kernel: length mismatch");
    if (!(gamma > 0.0))
        throw ArgumentError("rbf_kernel: gamma must be positive");
    return rbf_kernel(x.data(), y.data(), x.size(), gamma);
}

inline double rbf_kernel(const std::vector<double>& x, const std::vector<double>& y, double gamma) {
    if (x.size() != y.size())
        throw ArgumentError("rbf_kernel: length mismatch");
    if (!(gamma > 0.0))
        throw ArgumentError("rbf_kernel: gamma must be positive");
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double d = x[i] - y[i];
        s += d * d;
    }
    return std::exp(-gamma * s);
}

struct SvmModel {
    double gamma = 1.0;
    double c = 1.0;
    double bias = 0.0;
    std::vector<double> coeffs;          // alpha_i * y_i, one per support vector
    std::vector<std::vector<float>> svs; // support vectors
};

inline double decision(const SvmModel& model, const std::vector<float>& x) {
    double f = model.bias;
    for (std::size_t i = 0; i < model.svs.size(); ++i) {
        if (model.svs[i].size() != x.size())
            throw ArgumentError("decision: dimension mismatch");
        f += model.coeffs[i] * rbf_kernel(model.svs[i].data(), x.data(), x.size(), model.gamma);
    }
    return f;
}

struct SmoParams {
    double tol = 1e-3;    // KKT tolerance
    int max_epochs = 200; // hard cut-off on full passes; guarantees termination
    double cache_mb = 256.0;
};

struct SmoTrace {
    std::vector<double> dual; // dual objective after each accepted pair update
    int epochs = 0;
};

namespace detail {

// LRU cache of kernel matrix rows; a row holds k(x_i, x_j) for all j.
class KernelCache {
public:
    KernelCache(const std::vector<std::vector<float>>& x, double gamma, double cache_mb)
        : x_(x), gamma_(gamma) {
        std::size_t row_bytes = x.size() * sizeof(double);
        max_rows_ = std::max<std::size_t>(2, static_cast<std::size_t>(cache_mb * 1024.0 * 1024.0 / row_bytes));
    }

    const std::vector<double>& row(int i) {
        auto it = index_.find(i);
        if (it != index_.end()) {
            lru_.splice(lru_.begin(), lru_, it->second.second);
            return it->second.first;
        }
        if (index_.size() >= max_rows_) {
            int victim = lru_.back();
            lru_.pop_back();
            index_.erase(victim);
        }
        std::vector<double> r(x_.size());
        const auto& xi = x_[i];
        for (std::size_t j = 0; j < x_.size(); ++j)
            r[j] = rbf_kernel(xi.data(), x_[j].data(), xi.size(), gamma_);
        lru_.push_front(i);
        auto [pos, inserted] = index_.emplace(i, std::make_pair(std::move(r), lru_.begin()));
        return pos->second.first;
    }

private:
    const std::vector<std::vector<float>>& x_;
    double gamma_;
    std::size_t max_rows_;
    std::list<int> lru_;
    std::unordered_map<int, std::pair<std::vector<double>, std::list<int>::iterator>> index_;
};

} // namespace detail

// Sequential minimal optimization over the dual, pairs chosen by Platt's
// heuristics. f(x) = sum_i alpha_i y_i k(x_i, x) + b throughout.
inline SvmModel train_smo(const std::vector<std::vector<float>>& samples, const std::vector<int>& labels,
                          double c, double gamma, std::uint64_t seed, const SmoParams& params = {},
                          SmoTrace* trace = nullptr) {
    const std::size_t n = samples.size();
    if (n < 2)
        throw ArgumentError("train_smo: need at least 2 samples");
    if (labels.size() != n)
        throw ArgumentError("train_smo: label count mismatch");
    if (!(c > 0.0) || !(gamma > 0.0))
        throw ArgumentError("train_smo: c and gamma must be positive");
    bool has_pos = false, has_neg = false;
    for (int y : labels) {
        if (y == 1)
            has_pos = true;
        else if (y == -1)
            has_neg = true;
        else
            throw ArgumentError("train_smo: labels must be -1 or +1");
    }
    if (!has_pos || !has_neg)
        throw ArgumentError("train_smo: both classes must be present");
    for (const auto& s : samples)
        if (s.size() != samples[0].size())
            throw ArgumentError("train_smo: inconsistent sample dimensions");

    detail::KernelCache cache(samples, gamma, params.cache_mb);
    Rng rng = Rng(seed).substream("smo-shuffle");

    std::vector<double> alpha(n, 0.0);
    std::vector<double> err(n); // E_i = f(x_i) - y_i; exact while alpha = 0, b = 0
    for (std::size_t i = 0; i < n; ++i)
        err[i] = -static_cast<double>(labels[i]);
    double b = 0.0;
    const double tol = params.tol;
    const double step_eps = 1e-5;

    auto dual_objective = [&]() {
        double lin = 0.0, quad = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (alpha[i] == 0.0)
                continue;
            lin += alpha[i];
            const auto& ki = cache.row(static_cast<int>(i));
            for (std::size_t j = 0; j < n; ++j)
                if (alpha[j] != 0.0)
                    quad += alpha[i] * alpha[j] * labels[i] * labels[j] * ki[j];
        }
        return lin - 0.5 * quad;
    };

    auto take_step = [&](int i1, int i2) -> bool {
        if (i1 == i2)
            return false;
        double a1 = alpha[i1], a2 = alpha[i2];
        int y1 = labels[i1], y2 = labels[i2];
        double e1 = err[i1], e2 = err[i2];
        double s = y1 * y2;
        double lo, hi;
        if (y1 != y2) {
            lo = std::max(0.0, a2 - a1);
            hi = std::min(c, c + a2 - a1);
        } else {
            lo = std::max(0.0, a1 + a2 - c);
            hi = std::min(c, a1 + a2);
        }
        if (lo == hi)
            return false;
        const auto& k1 = cache.row(i1);
        double k11 = k1[i1], k12 = k1[i2];
        const auto& k2 = cache.row(i2);
        double k22 = k2[i2];
        double eta = k11 + k22 - 2.0 * k12;
        double a2_new;
        if (eta > 0.0) {
            a2_new = std::clamp(a2 + y2 * (e1 - e2) / eta, lo, hi);
        } else {
            // objective is linear (RBF: only exact duplicates); evaluate endpoints
            double f1 = e1 + y1 - b; // sum_j alpha_j y_j k(x_j, x1)
            double f2 = e2 + y2 - b;
            double v1 = f1 - a1 * y1 * k11 - a2 * y2 * k12;
            double v2 = f2 - a1 * y1 * k12 - a2 * y2 * k22;
            auto objective_at = [&](double t) {
                double t1 = a1 + s * (a2 - t);
                return t1 + t - 0.5 * k11 * t1 * t1 - 0.5 * k22 * t * t - s * k12 * t1 * t -
                       y1 * t1 * v1 - y2 * t * v2;
            };
            double lo_obj = objective_at(lo), hi_obj = objective_at(hi);
            if (lo_obj > hi_obj + 1e-12)
                a2_new = lo;
            else if (lo_obj < hi_obj - 1e-12)
                a2_new = hi;
            else
                return false;
        }
        if (std::fabs(a2_new - a2) < step_eps * (a2_new + a2 + step_eps))
            return false;
        double a1_new = a1 + s * (a2 - a2_new);

        double d1 = y1 * (a1_new - a1), d2 = y2 * (a2_new - a2);
        double b1 = b - e1 - d1 * k11 - d2 * k12;
        double b2 = b - e2 - d1 * k12 - d2 * k22;
        double b_new;
        if (a1_new > 0.0 && a1_new < c)
            b_new = b1;
        else if (a2_new > 0.0 && a2_new < c)
            b_new = b2;
        else
            b_new = 0.5 * (b1 + b2);

        double db = b_new - b;
        for (std::size_t j = 0; j < n; ++j)
            err[j] += d1 * k1[j] + d2 * k2[j] + db;
        alpha[i1] = a1_new;
        alpha[i2] = a2_new;
        b = b_new;
        if (trace)
            trace->dual.push_back(dual_objective());
        return true;
    };

    auto examine = [&](int i2) -> bool {
        int y2 = labels[i2];
        double a2 = alpha[i2];
        double r2 = err[i2] * y2;
        if (!((r2 < -tol && a2 < c) || (r2 > tol && a2 > 0.0)))
            return false;

        // 1: second-choice heuristic, maximize |E1 - E2| over non-bound points
        int best = -1;
        double best_gap = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (alpha[i] > 0.0 && alpha[i] < c) {
                double gap = std::fabs(err[i] - err[i2]);
                if (gap > best_gap) {
                    best_gap = gap;
                    best = static_cast<int>(i);
                }
            }
        }
        if (best >= 0 && take_step(best, i2))
            return true;
        // 2: all non-bound points, random start
        std::size_t start = rng.index(n);
        for (std::size_t off = 0; off < n; ++off) {
            std::size_t i = (start + off) % n;
            if (alpha[i] > 0.0 && alpha[i] < c && take_step(static_cast<int>(i), i2))
                return true;
        }
        // 3: everything, random start
        start = rng.index(n);
        for (std::size_t off = 0; off < n; ++off) {
            std::size_t i = (start + off) % n;
            if (take_step(static_cast<int>(i), i2))
                return true;
        }
        return false;
    };

    int num_changed = 0;
    bool examine_all = true;
    int epochs = 0;
    while (num_changed > 0 || examine_all) {
        num_changed = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (examine_all || (alpha[i] > 0.0 && alpha[i] < c))
                num_changed += examine(static_cast<int>(i)) ? 1 : 0;
        }
        if (examine_all)
            examine_all = false;
        else if (num_changed == 0)
            examine_all = true;
        if (++epochs >= params.max_epochs)
            break;
    }
    if (trace)
        trace->epochs = epochs;

    SvmModel model;
    model.gamma = gamma;
    model.c = c;
    model.bias = b;
    for (std::size_t i = 0; i < n; ++i) {
        if (alpha[i] > 0.0) {
            model.coeffs.push_back(alpha[i] * labels[i]);
            model.svs.push_back(samples[i]);
        }
    }
    return model;
}

// One-vs-rest wrapper. With exactly two classes a single binary machine is
// trained (+1 = higher class label); its sign decides, zero going to the
// lower label, so two-class OvR is exactly the binary machine.
struct OvrModel {
    std::vector<int> classes; // sorted ascending
    std::vector<SvmModel> models;

    bool binary_reduction() const { return classes.size() == 2 && models.size() == 1; }
};

inline OvrModel train_ovr(const std::vector<std::vector<float>>& samples, const std::vector<int>& labels,
                          std::vector<int> classes, double c, double gamma, std::uint64_t seed,
                          const SmoParams& params = {}) {
    if (samples.size() != labels.size())
        throw ArgumentError("train_ovr: label count mismatch");
    OvrModel ovr;
    ovr.classes = std::move(classes);
    std::sort(ovr.classes.begin(), ovr.classes.end());
    ovr.classes.erase(std::unique(ovr.classes.begin(), ovr.classes.end()), ovr.classes.end());
    if (ovr.classes.size() < 2)
        throw ArgumentError("train_ovr: need at least 2 classes");
    for (int l : labels)
        if (std::find(ovr.classes.begin(), ovr.classes.end(), l) == ovr.classes.end())
            throw ArgumentError("train_ovr: label " + std::to_string(l) + " not in class list");

    Rng base(seed);
    std::vector<int> binary(labels.size());
    if (ovr.classes.size() == 2) {
        for (std::size_t i = 0; i < labels.size(); ++i)
            binary[i] = labels[i] == ovr.classes[1] ? 1 : -1;
        ovr.models.push_back(train_smo(samples, binary, c, gamma, base.derive_seed("ovr-0"), params));
        return ovr;
    }
    for (std::size_t m = 0; m < ovr.classes.size(); ++m) {
        for (std::size_t i = 0; i < labels.size(); ++i)
            binary[i] = labels[i] == ovr.classes[m] ? 1 : -1;
        ovr.models.push_back(
            train_smo(samples, binary, c, gamma, base.derive_seed("ovr-" + std::to_string(m)), params));
    }
    return ovr;
}

inline OvrModel train_ovr(const std::vector<std::vector<float>>& samples, const std::vector<int>& labels,
                          double c, double gamma, std::uint64_t seed, const SmoParams& params = {}) {
    return train_ovr(samples, labels, labels, c, gamma, seed, params);
}

inline std::vector<double> decision_values(const OvrModel& ovr, const std::vector<float>& x) {
    if (ovr.binary_reduction()) {
        double d = decision(ovr.models[0], x);
        return {-d, d};
    }
    std::vector<double> out;
    out.reserve(ovr.models.size());
    for (const auto& m : ovr.models)
        out.push_back(decision(m, x));
    return out;
}

inline int predict(const OvrModel& ovr, const std::vector<float>& x) {
    std::vector<double> d = decision_values(ovr, x);
    std::size_t best = 0;
    for (std::size_t i = 1; i < d.size(); ++i)
        if (d[i] > d[best]) // strict: ties resolve to the lowest class
            best = i;
    return ovr.classes[best];
}

inline void save_model(std::ostream& out, const SvmModel& model) {
    out.write("SSVM", 4);
    write_u32(out, 1);
    write_f64(out, model.gamma);
    write_f64(out, model.c);
    write_f64(out, model.bias);
    write_u32(out, static_cast<std::uint32_t>(model.svs.size()));
    std::uint32_t dim = model.svs.empty() ? 0 : static_cast<std::uint32_t>(model.svs[0].size());
    write_u32(out, dim);
    for (double a : model.coeffs)
        write_f64(out, a);
    for (const auto& sv : model.svs)
        write_f32_array(out, sv.data(), sv.size());
}

inline SvmModel load_model(std::istream& in) {
    expect_magic(in, "SSVM", "model");
    std::uint32_t version = read_u32(in);
    if (version != 1)
        throw FormatError("model: unsupported version");
    SvmModel model;
    model.gamma = read_f64(in);
    model.c = read_f64(in);
    model.bias = read_f64(in);
    std::uint32_t m = read_u32(in);
    std::uint32_t dim = read_u32(in);
    model.coeffs.resize(m);
    for (double& a : model.coeffs)
        a = read_f64(in);
    model.svs.assign(m, std::vector<float>(dim));
    for (auto& sv : model.svs)
        read_f32_array(in, sv.data(), sv.size());
    return model;
}

// An OvR model file is the per-class records back to back; class labels ride
// in a small CSV sidecar (the record itself has no label field).
inline void save_ovr(std::ostream& out, const OvrModel& ovr) {
    for (const auto& m : ovr.models)
        save_model(out, m);
}

inline std::vector<SvmModel> load_model_records(std::istream& in) {
    std::vector<SvmModel> records;
    while (true) {
        int c = in.peek();
        if (c == EOF)
            break;
        records.push_back(load_model(in));
    }
    if (records.empty())
        throw FormatError("model: no records in file");
    return records;
}

inline void save_classes_csv(std::ostream& out, const std::vector<int>& classes) {
    out << "class\n";
    for (int c : classes)
        out << c << "\n";
}

inline std::vector<int> load_classes_csv(std::istream& in) {
    std::vector<int> classes;
    for (const auto& row : read_csv(in, "class"))
        classes.push_back(std::stoi(row.at(0)));
    return classes;
}

inline OvrModel assemble_ovr(std::vector<SvmModel> records, std::vector<int> classes) {
    OvrModel ovr;
    ovr.models = std::move(records);
    ovr.classes = std::move(classes);
    bool two_class = ovr.classes.size() == 2 && ovr.models.size() == 1;
    if (!two_class && ovr.models.size() != ovr.classes.size())
        throw FormatError("model: record count does not match class list");
    return ovr;
}

} // namespace sigdoc
