#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "convnilm/errors.hpp"

namespace convnilm {

// Evaluation metrics over watt-space series, shaped [C][T] as plain arrays.
// A scaled-space report is possible behind the same API; the report says
// which space it was computed in.

using SeriesSet = std::vector<std::vector<double>>; // [C][T]

namespace metrics_detail {

inline void check_shapes(const SeriesSet& pred, const SeriesSet& target) {
    if (pred.size() != target.size() || pred.empty())
        throw ShapeError("metrics: appliance count mismatch");
    for (size_t i = 0; i < pred.size(); ++i)
        if (pred[i].size() != target[i].size() || pred[i].empty())
            throw ShapeError("metrics: series length mismatch");
}

} // namespace metrics_detail

// Mean absolute error per appliance; total is the unweighted appliance mean.
inline std::vector<double> mae_per_appliance(const SeriesSet& pred, const SeriesSet& target) {
    metrics_detail::check_shapes(pred, target);
    std::vector<double> out;
    for (size_t i = 0; i < pred.size(); ++i) {
        double acc = 0.0;
        for (size_t t = 0; t < pred[i].size(); ++t) acc += std::abs(pred[i][t] - target[i][t]);
        out.push_back(acc / static_cast<double>(pred[i].size()));
    }
    return out;
}

inline double mae_total(const SeriesSet& pred, const SeriesSet& target) {
    auto per = mae_per_appliance(pred, target);
    double acc = 0.0;
    for (double v : per) acc += v;
    return acc / static_cast<double>(per.size());
}

// Estimated accuracy: 1 - sum|err| / (2 sum target). The total keeps the
// appliance sums inside the ratio; the per-appliance variant drops them.
inline double est_acc_total(const SeriesSet& pred, const SeriesSet& target) {
    metrics_detail::check_shapes(pred, target);
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < pred.size(); ++i)
        for (size_t t = 0; t < pred[i].size(); ++t) {
            num += std::abs(pred[i][t] - target[i][t]);
            den += target[i][t];
        }
    if (den <= 0.0) throw DataError("est_acc undefined: total target energy is zero");
    return 1.0 - num / (2.0 * den);
}

// Per-appliance values; an appliance with zero target energy gets NaN.
inline std::vector<double> est_acc_per_appliance(const SeriesSet& pred, const SeriesSet& target) {
    metrics_detail::check_shapes(pred, target);
    std::vector<double> out;
    for (size_t i = 0; i < pred.size(); ++i) {
        double num = 0.0, den = 0.0;
        for (size_t t = 0; t < pred[i].size(); ++t) {
            num += std::abs(pred[i][t] - target[i][t]);
            den += target[i][t];
        }
        out.push_back(den > 0.0 ? 1.0 - num / (2.0 * den) : std::numeric_limits<double>::quiet_NaN());
    }
    return out;
}

// Signal aggregate error |r_hat - r| / r per appliance; NaN when r == 0.
inline std::vector<double> sae_per_appliance(const SeriesSet& pred, const SeriesSet& target) {
    metrics_detail::check_shapes(pred, target);
    std::vector<double> out;
    for (size_t i = 0; i < pred.size(); ++i) {
        double r_hat = 0.0, r = 0.0;
        for (size_t t = 0; t < pred[i].size(); ++t) {
            r_hat += pred[i][t];
            r += target[i][t];
        }
        out.push_back(r > 0.0 ? std::abs(r_hat - r) / r : std::numeric_limits<double>::quiet_NaN());
    }
    return out;
}

// Unweighted mean over appliances with defined SAE.
inline double sae_total(const SeriesSet& pred, const SeriesSet& target, int64_t* excluded = nullptr) {
    auto per = sae_per_appliance(pred, target);
    double acc = 0.0;
    int64_t n = 0, skipped = 0;
    for (double v : per) {
        if (std::isnan(v)) {
            ++skipped;
            continue;
        }
        acc += v;
        ++n;
    }
    if (excluded) *excluded = skipped;
    if (n == 0) throw DataError("sae undefined for every appliance");
    return acc / static_cast<double>(n);
}

struct ApplianceMetrics {
    std::string name;
    double mae = 0.0;
    double est_acc = 0.0; // NaN when undefined
    double sae = 0.0;     // NaN when undefined
};

struct MetricsReport {
    std::vector<ApplianceMetrics> per_appliance;
    double total_mae = 0.0;
    double total_est_acc = 0.0;
    double total_sae = 0.0;
    int64_t window_count = 0;
    int64_t sae_excluded = 0;
    bool scaled_space = false;

    // CSV: header plus C + 1 data rows (appliances, then the total row).
    std::string to_csv() const {
        std::ostringstream os;
        os.precision(10);
        os << "appliance,mae_w,est_acc,sae\n";
        for (auto& a : per_appliance)
            os << a.name << ',' << a.mae << ',' << a.est_acc << ',' << a.sae << '\n';
        os << "total," << total_mae << ',' << total_est_acc << ',' << total_sae << '\n';
        return os.str();
    }

    std::string to_table() const {
        std::ostringstream os;
        os.precision(6);
        os << "metrics (" << (scaled_space ? "scaled space" : "watt space")
           << ", " << window_count << " windows)\n";
        for (auto& a : per_appliance)
            os << "  " << a.name << ": mae=" << a.mae << " est_acc=" << a.est_acc
               << " sae=" << a.sae << "\n";
        os << "  total: mae=" << total_mae << " est_acc=" << total_est_acc
           << " sae=" << total_sae;
        if (sae_excluded > 0) os << "  (sae excludes " << sae_excluded << " zero-energy appliance(s))";
        os << "\n";
        return os.str();
    }
};

inline MetricsReport compute_report(const SeriesSet& pred, const SeriesSet& target,
                                    const std::vector<std::string>& names,
                                    int64_t window_count, bool scaled_space = false) {
    metrics_detail::check_shapes(pred, target);
    if (names.size() != pred.size()) throw ShapeError("metrics: name count mismatch");
    MetricsReport r;
    auto mae = mae_per_appliance(pred, target);
    auto acc = est_acc_per_appliance(pred, target);
    auto sae = sae_per_appliance(pred, target);
    for (size_t i = 0; i < pred.size(); ++i)
        r.per_appliance.push_back({names[i], mae[i], acc[i], sae[i]});
    r.total_mae = mae_total(pred, target);
    r.total_est_acc = est_acc_total(pred, target);
    r.total_sae = sae_total(pred, target, &r.sae_excluded);
    r.window_count = window_count;
    r.scaled_space = scaled_space;
    return r;
}

} // namespace convnilm
