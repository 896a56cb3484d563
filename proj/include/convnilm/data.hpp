#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "convnilm/errors.hpp"
#include "convnilm/rng.hpp"

namespace convnilm {

// ---------------------------------------------------------------------------
// Channel files: "<unix-seconds> <watts>" per line, timestamps strictly
// increasing. A labels file maps channel numbers to appliance names.
// ---------------------------------------------------------------------------
struct ChannelSample {
    int64_t t;
    double w;
};

struct ChannelSeries {
    std::string name;
    std::vector<ChannelSample> samples;
    double native_period_s = 0.0; // median spacing, informational
};

inline ChannelSeries parse_channel_file(const std::string& path, std::string name = "") {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open channel file: " + path);
    ChannelSeries series;
    series.name = name.empty() ? std::filesystem::path(path).stem().string() : std::move(name);

    std::string line;
    int64_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        int64_t ts;
        double w;
        if (!(ls >> ts >> w)) throw DataError(path + ":" + std::to_string(line_no) + ": unparseable line");
        std::string trailing;
        if (ls >> trailing) throw DataError(path + ":" + std::to_string(line_no) + ": trailing tokens");
        if (!std::isfinite(w)) throw DataError(path + ":" + std::to_string(line_no) + ": non-finite power");
        if (!series.samples.empty() && ts <= series.samples.back().t)
            throw DataError(path + ":" + std::to_string(line_no) + ": non-increasing timestamp");
        series.samples.push_back({ts, w});
    }
    if (series.samples.empty()) throw DataError(path + ": empty channel file");

    if (series.samples.size() > 1) {
        std::vector<int64_t> gaps;
        gaps.reserve(series.samples.size() - 1);
        for (size_t i = 1; i < series.samples.size(); ++i)
            gaps.push_back(series.samples[i].t - series.samples[i - 1].t);
        std::nth_element(gaps.begin(), gaps.begin() + gaps.size() / 2, gaps.end());
        series.native_period_s = static_cast<double>(gaps[gaps.size() / 2]);
    }
    return series;
}

inline void write_channel_file(const std::string& path, const ChannelSeries& series) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot write channel file: " + path);
    os.precision(17);
    for (auto& s : series.samples) os << s.t << ' ' << s.w << '\n';
}

inline std::vector<std::pair<int, std::string>> parse_labels_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open labels file: " + path);
    std::vector<std::pair<int, std::string>> labels;
    std::string line;
    int64_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        int ch;
        std::string nm;
        if (!(ls >> ch >> nm)) throw DataError(path + ":" + std::to_string(line_no) + ": unparseable label line");
        labels.emplace_back(ch, nm);
    }
    if (labels.empty()) throw DataError(path + ": empty labels file");
    return labels;
}

// ---------------------------------------------------------------------------
// Resampling onto a uniform grid
// ---------------------------------------------------------------------------
struct UniformSeries {
    int64_t t0 = 0;
    double period_s = 1.0;
    std::vector<double> values;
    int64_t zero_filled = 0; // grid points inside gaps longer than 60 s
};

// Linear interpolation onto a uniform grid from the first to the last
// timestamp. Grid points strictly inside a gap longer than 60 s are
// zero-filled; points coinciding with real samples keep their values.
inline UniformSeries resample_linear(const ChannelSeries& series, double period_s) {
    if (period_s <= 0.0) throw ConfigError("resample period must be positive");
    if (series.samples.empty()) throw DataError("resample of empty series");

    UniformSeries out;
    out.t0 = series.samples.front().t;
    out.period_s = period_s;
    const int64_t span = series.samples.back().t - series.samples.front().t;
    const int64_t n = static_cast<int64_t>(std::floor(static_cast<double>(span) / period_s)) + 1;
    if (series.samples.size() == 1 && n > 1)
        throw DataError("cannot resample a single sample onto a multi-point grid");
    out.values.resize(static_cast<size_t>(n));

    size_t hi = 0; // first sample with t >= grid point
    for (int64_t i = 0; i < n; ++i) {
        double g = static_cast<double>(out.t0) + static_cast<double>(i) * period_s;
        while (hi + 1 < series.samples.size() && static_cast<double>(series.samples[hi].t) < g) ++hi;
        const auto& b = series.samples[hi];
        if (static_cast<double>(b.t) == g) {
            out.values[static_cast<size_t>(i)] = b.w;
            continue;
        }
        const auto& a = series.samples[hi - 1];
        if (b.t - a.t > 60) {
            out.values[static_cast<size_t>(i)] = 0.0;
            ++out.zero_filled;
            continue;
        }
        double f = (g - static_cast<double>(a.t)) / static_cast<double>(b.t - a.t);
        out.values[static_cast<size_t>(i)] = a.w + f * (b.w - a.w);
    }
    return out;
}

// Same interpolation and gap rule as resample_linear, but onto an explicit
// grid so several channels can share one time base.
inline std::vector<double> resample_onto(const ChannelSeries& series, int64_t t_start,
                                         int64_t n, double period_s) {
    if (period_s <= 0.0 || n <= 0) throw ConfigError("resample_onto: bad grid");
    if (series.samples.empty()) throw DataError("resample of empty series");
    std::vector<double> out(static_cast<size_t>(n));
    size_t hi = 0;
    for (int64_t i = 0; i < n; ++i) {
        double g = static_cast<double>(t_start) + static_cast<double>(i) * period_s;
        while (hi + 1 < series.samples.size() && static_cast<double>(series.samples[hi].t) < g) ++hi;
        const auto& b = series.samples[hi];
        if (static_cast<double>(b.t) == g) {
            out[static_cast<size_t>(i)] = b.w;
            continue;
        }
        if (g < static_cast<double>(series.samples.front().t) ||
            g > static_cast<double>(series.samples.back().t)) {
            out[static_cast<size_t>(i)] = 0.0;
            continue;
        }
        const auto& a = series.samples[hi - 1];
        if (b.t - a.t > 60) {
            out[static_cast<size_t>(i)] = 0.0;
            continue;
        }
        double f = (g - static_cast<double>(a.t)) / static_cast<double>(b.t - a.t);
        out[static_cast<size_t>(i)] = a.w + f * (b.w - a.w);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Aggregate construction: sum of target series, an optional extra appliance,
// and zero-mean Gaussian noise, clamped at 0 W.
// ---------------------------------------------------------------------------
inline std::vector<double> build_aggregate(const std::vector<std::vector<double>>& targets,
                                           const std::vector<double>* extra,
                                           double noise_std, Rng& rng) {
    if (targets.empty()) throw DataError("build_aggregate needs at least one target");
    const size_t T = targets[0].size();
    for (auto& t : targets)
        if (t.size() != T) throw ShapeError("build_aggregate: target length mismatch");
    if (extra && extra->size() != T) throw ShapeError("build_aggregate: extra length mismatch");

    std::vector<double> agg(T, 0.0);
    for (auto& t : targets)
        for (size_t i = 0; i < T; ++i) agg[i] += t[i];
    if (extra)
        for (size_t i = 0; i < T; ++i) agg[i] += (*extra)[i];
    if (noise_std > 0.0)
        for (size_t i = 0; i < T; ++i) agg[i] += noise_std * rng.gaussian();
    for (auto& v : agg) v = std::max(0.0, v);
    return agg;
}

// ---------------------------------------------------------------------------
// Min-max scaling, fitted on the mixture only. The same (min, max) scales the
// targets and is inverted on predictions before watt-space metrics;
// per-appliance scaling is deliberately not available.
// ---------------------------------------------------------------------------
struct MinMaxScale {
    double min_w = 0.0;
    double max_w = 1.0;

    static MinMaxScale fit(const std::vector<double>& mixture) {
        if (mixture.empty()) throw DataError("minmax fit on empty series");
        auto [lo, hi] = std::minmax_element(mixture.begin(), mixture.end());
        if (*hi == *lo) throw DataError("minmax fit on a constant mixture");
        return {*lo, *hi};
    }

    double apply(double x) const { return (x - min_w) / (max_w - min_w); }
    double invert(double y) const { return y * (max_w - min_w) + min_w; }

    std::vector<double> apply(const std::vector<double>& xs) const {
        std::vector<double> out(xs.size());
        for (size_t i = 0; i < xs.size(); ++i) out[i] = apply(xs[i]);
        return out;
    }
    std::vector<double> invert(const std::vector<double>& ys) const {
        std::vector<double> out(ys.size());
        for (size_t i = 0; i < ys.size(); ++i) out[i] = invert(ys[i]);
        return out;
    }
};

inline std::pair<std::vector<double>, MinMaxScale> minmax_fit_transform(const std::vector<double>& mixture) {
    MinMaxScale sc = MinMaxScale::fit(mixture);
    return {sc.apply(mixture), sc};
}

// ---------------------------------------------------------------------------
// Windows
// ---------------------------------------------------------------------------
struct SignalWindow {
    std::vector<double> mixture;               // scaled
    std::vector<std::vector<double>> targets;  // scaled with the mixture's (min,max)
    MinMaxScale scale;
    int64_t start_ts = 0;
};

// Cuts scaled series into windows of T_window samples. Default stride equals
// the window length (non-overlapping); the trailing partial window is dropped.
inline std::vector<SignalWindow> window_split(const std::vector<double>& mixture,
                                              const std::vector<std::vector<double>>& targets,
                                              const MinMaxScale& scale,
                                              int64_t T_window, int64_t stride = 0,
                                              int64_t t0 = 0, double period_s = 1.0,
                                              int64_t* dropped = nullptr) {
    if (stride <= 0) stride = T_window;
    const int64_t T = static_cast<int64_t>(mixture.size());
    if (T_window <= 0) throw ConfigError("window length must be positive");
    if (T_window > T) throw DataError("window length " + std::to_string(T_window) +
                                      " exceeds series length " + std::to_string(T));
    for (auto& t : targets)
        if (static_cast<int64_t>(t.size()) != T) throw ShapeError("window_split: target length mismatch");

    std::vector<SignalWindow> windows;
    int64_t start = 0;
    for (; start + T_window <= T; start += stride) {
        SignalWindow w;
        w.mixture.assign(mixture.begin() + start, mixture.begin() + start + T_window);
        for (auto& t : targets)
            w.targets.emplace_back(t.begin() + start, t.begin() + start + T_window);
        w.scale = scale;
        w.start_ts = t0 + static_cast<int64_t>(static_cast<double>(start) * period_s);
        windows.push_back(std::move(w));
    }
    if (dropped) *dropped = T - (windows.empty() ? 0 : start);
    return windows;
}

// ---------------------------------------------------------------------------
// Contiguous-block k-fold split over time-ordered windows. No shuffling:
// adjacent-window leakage across folds is the failure mode this avoids.
// The seed parameter is accepted for interface stability and unused.
// ---------------------------------------------------------------------------
struct FoldPlan {
    std::vector<int> train;
    std::vector<int> validation;
};

inline std::vector<FoldPlan> kfold_split(int64_t n_windows, int64_t k, uint64_t seed = 0) {
    (void)seed;
    if (k < 2) throw ConfigError("k-fold requires k >= 2");
    if (k > n_windows) throw DataError("k-fold with k=" + std::to_string(k) +
                                       " exceeds window count " + std::to_string(n_windows));
    std::vector<FoldPlan> folds(static_cast<size_t>(k));
    const int64_t base = n_windows / k, rem = n_windows % k;
    int64_t pos = 0;
    for (int64_t f = 0; f < k; ++f) {
        int64_t len = base + (f < rem ? 1 : 0);
        for (int64_t i = 0; i < n_windows; ++i) {
            if (i >= pos && i < pos + len)
                folds[static_cast<size_t>(f)].validation.push_back(static_cast<int>(i));
            else
                folds[static_cast<size_t>(f)].train.push_back(static_cast<int>(i));
        }
        pos += len;
    }
    return folds;
}

// ---------------------------------------------------------------------------
// Dataset container and on-disk formats:
//   manifest.txt  key = value lines plus per-appliance sections
//   windows.bin   magic "NILMW1", u64 counts (windows, C, T),
//                 f64 scale min/max, then per window: i64 start,
//                 f64 mixture[T], f64 targets[C][T]
// ---------------------------------------------------------------------------
struct Dataset {
    std::string source;                  // synthetic | redd | ukdale
    double period_s = 1.0;
    std::vector<std::string> appliances; // length C
    MinMaxScale scale;
    std::vector<SignalWindow> windows;
    int64_t k_folds = 10;

    int64_t C() const { return static_cast<int64_t>(appliances.size()); }
    int64_t T() const { return windows.empty() ? 0 : static_cast<int64_t>(windows[0].mixture.size()); }
};

namespace data_detail {

inline void put_u64(std::ostream& os, uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
inline void put_i64(std::ostream& os, int64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
inline void put_f64(std::ostream& os, double v) { os.write(reinterpret_cast<const char*>(&v), 8); }
inline uint64_t get_u64(std::istream& is) {
    uint64_t v;
    is.read(reinterpret_cast<char*>(&v), 8);
    if (!is) throw DataError("window cache truncated");
    return v;
}
inline int64_t get_i64(std::istream& is) { return static_cast<int64_t>(get_u64(is)); }
inline double get_f64(std::istream& is) {
    double v;
    is.read(reinterpret_cast<char*>(&v), 8);
    if (!is) throw DataError("window cache truncated");
    return v;
}

} // namespace data_detail

inline void save_dataset(const std::string& dir, const Dataset& ds) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    {
        std::ofstream m(fs::path(dir) / "manifest.txt");
        if (!m) throw DataError("cannot write manifest in " + dir);
        m.precision(17);
        m << "format = nilm-manifest-v1\n";
        m << "source = " << ds.source << "\n";
        m << "period_s = " << ds.period_s << "\n";
        m << "appliances = " << ds.C() << "\n";
        m << "windows = " << ds.windows.size() << "\n";
        m << "window_len = " << ds.T() << "\n";
        m << "scale_min_w = " << ds.scale.min_w << "\n";
        m << "scale_max_w = " << ds.scale.max_w << "\n";
        m << "k_folds = " << ds.k_folds << "\n";
        for (size_t i = 0; i < ds.appliances.size(); ++i)
            m << "appliance_" << i << " = " << ds.appliances[i] << "\n";
        auto folds = kfold_split(static_cast<int64_t>(ds.windows.size()),
                                 std::min<int64_t>(ds.k_folds, static_cast<int64_t>(ds.windows.size())));
        for (size_t f = 0; f < folds.size(); ++f)
            for (int w : folds[f].validation) m << "fold_of_window_" << w << " = " << f << "\n";
    }

    std::ofstream os(fs::path(dir) / "windows.bin", std::ios::binary);
    if (!os) throw DataError("cannot write window cache in " + dir);
    os.write("NILMW1", 6);
    data_detail::put_u64(os, ds.windows.size());
    data_detail::put_u64(os, static_cast<uint64_t>(ds.C()));
    data_detail::put_u64(os, static_cast<uint64_t>(ds.T()));
    data_detail::put_f64(os, ds.scale.min_w);
    data_detail::put_f64(os, ds.scale.max_w);
    for (auto& w : ds.windows) {
        data_detail::put_i64(os, w.start_ts);
        for (double v : w.mixture) data_detail::put_f64(os, v);
        for (auto& t : w.targets)
            for (double v : t) data_detail::put_f64(os, v);
    }
    if (!os) throw DataError("window cache write failed in " + dir);
}

inline std::map<std::string, std::string> parse_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open manifest: " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(is, line)) {
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            size_t a = s.find_first_not_of(" \t");
            size_t b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

inline Dataset load_dataset(const std::string& dir) {
    namespace fs = std::filesystem;
    auto kv = parse_manifest((fs::path(dir) / "manifest.txt").string());
    Dataset ds;
    ds.source = kv.count("source") ? kv["source"] : "unknown";
    ds.period_s = kv.count("period_s") ? std::stod(kv["period_s"]) : 1.0;
    ds.k_folds = kv.count("k_folds") ? std::stoll(kv["k_folds"]) : 10;

    std::ifstream is(fs::path(dir) / "windows.bin", std::ios::binary);
    if (!is) throw DataError("cannot open window cache in " + dir);
    char magic[6];
    is.read(magic, 6);
    if (!is || std::string(magic, 6) != "NILMW1") throw DataError("bad window cache magic in " + dir);
    uint64_t n_windows = data_detail::get_u64(is);
    uint64_t C = data_detail::get_u64(is);
    uint64_t T = data_detail::get_u64(is);
    ds.scale.min_w = data_detail::get_f64(is);
    ds.scale.max_w = data_detail::get_f64(is);
    for (uint64_t i = 0; i < C; ++i) {
        std::string key = "appliance_" + std::to_string(i);
        ds.appliances.push_back(kv.count(key) ? kv[key] : key);
    }
    for (uint64_t wi = 0; wi < n_windows; ++wi) {
        SignalWindow w;
        w.scale = ds.scale;
        w.start_ts = data_detail::get_i64(is);
        w.mixture.resize(T);
        for (auto& v : w.mixture) v = data_detail::get_f64(is);
        w.targets.assign(C, std::vector<double>(T));
        for (auto& t : w.targets)
            for (auto& v : t) v = data_detail::get_f64(is);
        ds.windows.push_back(std::move(w));
    }
    return ds;
}

} // namespace convnilm
