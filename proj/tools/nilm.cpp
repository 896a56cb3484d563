// nilm: dataset preparation, synthetic generation, training, evaluation,
// disaggregation and checkpoint inspection for the convnilm library.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

#include <CLI11.hpp>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include "convnilm/convnilm.hpp"

namespace fs = std::filesystem;
using namespace convnilm;

namespace {

int worker_count(size_t n_items) {
    unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("NILM_THREADS")) {
        try {
            long v = std::stol(env);
            if (v >= 1) hw = static_cast<unsigned>(v);
        } catch (const std::exception&) {
            throw ConfigError("NILM_THREADS is not an integer");
        }
    }
    return static_cast<int>(std::min<size_t>(hw, std::max<size_t>(1, n_items)));
}

struct RunPaths {
    fs::path out;
    explicit RunPaths(const std::string& dir) : out(dir) { fs::create_directories(out); }
    fs::path file(const std::string& name) const { return out / name; }
};

// Every command echoes the configuration it actually ran with.
void echo_config(const RunPaths& paths, const std::map<std::string, std::string>& kv) {
    std::ofstream os(paths.file("effective.cfg"));
    os.precision(17);
    std::string section;
    for (auto& [key, val] : kv) {
        auto dot = key.find('.');
        std::string sec = dot == std::string::npos ? "" : key.substr(0, dot);
        std::string base = dot == std::string::npos ? key : key.substr(dot + 1);
        if (sec != section) {
            os << "[" << sec << "]\n";
            section = sec;
        }
        os << base << " = " << val << "\n";
    }
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

ModelConfig model_config_from(const KvConfig& cfg, const std::string& variant) {
    ModelConfig mc;
    mc.N = cfg.get_int("model.n", mc.N);
    mc.L = cfg.get_int("model.l", mc.L);
    mc.S = cfg.get_int("model.s", mc.L / 2);
    mc.B = cfg.get_int("model.b", mc.B);
    mc.H = cfg.get_int("model.h", mc.H);
    mc.P = cfg.get_int("model.p", mc.P);
    mc.X = cfg.get_int("model.x", mc.X);
    mc.R = cfg.get_int("model.r", mc.R);
    mc.leaky_slope = cfg.get_double("model.leaky_slope", mc.leaky_slope);
    mc.causal = cfg.get_bool("model.causal", false);
    mc.glu = cfg.get_bool("model.glu", false);
    if (variant == "base") {
        mc.causal = false;
        mc.glu = false;
    } else if (variant == "causal") {
        mc.causal = true;
        mc.glu = false;
    } else if (variant == "causal-glu") {
        mc.causal = true;
        mc.glu = true;
    } else if (!variant.empty()) {
        throw ConfigError("unknown variant: " + variant);
    }
    return mc;
}

TrainConfig train_config_from(const KvConfig& cfg) {
    TrainConfig tc;
    tc.epochs = cfg.get_int("train.epochs", tc.epochs);
    tc.batch_size = cfg.get_int("train.batch_size", tc.batch_size);
    tc.lr = cfg.get_double("train.lr", tc.lr);
    tc.beta1 = cfg.get_double("train.beta1", tc.beta1);
    tc.beta2 = cfg.get_double("train.beta2", tc.beta2);
    tc.eps = cfg.get_double("train.eps", tc.eps);
    tc.k_folds = cfg.get_int("train.k_folds", tc.k_folds);
    tc.seed = static_cast<uint64_t>(cfg.get_int("train.seed", 0));
    std::string loss = cfg.get_str("train.loss", "wmse");
    if (loss == "wmse") tc.loss = LossKind::Wmse;
    else if (loss == "mse-mean") tc.loss = LossKind::MseMean;
    else throw ConfigError("train.loss must be wmse or mse-mean");
    tc.grad_clip = cfg.get_bool("train.grad_clip", false);
    tc.clip_threshold = cfg.get_double("train.clip_threshold", 5.0);
    return tc;
}

void dump_model_train_kv(std::map<std::string, std::string>& kv, const ModelConfig& mc,
                         const TrainConfig& tc) {
    kv["model.n"] = std::to_string(mc.N);
    kv["model.l"] = std::to_string(mc.L);
    kv["model.s"] = std::to_string(mc.S);
    kv["model.b"] = std::to_string(mc.B);
    kv["model.h"] = std::to_string(mc.H);
    kv["model.p"] = std::to_string(mc.P);
    kv["model.x"] = std::to_string(mc.X);
    kv["model.r"] = std::to_string(mc.R);
    kv["model.c"] = std::to_string(mc.C);
    kv["model.causal"] = mc.causal ? "true" : "false";
    kv["model.glu"] = mc.glu ? "true" : "false";
    kv["model.leaky_slope"] = fmt(mc.leaky_slope);
    kv["train.epochs"] = std::to_string(tc.epochs);
    kv["train.batch_size"] = std::to_string(tc.batch_size);
    kv["train.lr"] = fmt(tc.lr);
    kv["train.beta1"] = fmt(tc.beta1);
    kv["train.beta2"] = fmt(tc.beta2);
    kv["train.eps"] = fmt(tc.eps);
    kv["train.k_folds"] = std::to_string(tc.k_folds);
    kv["train.seed"] = std::to_string(tc.seed);
    kv["train.loss"] = tc.loss == LossKind::Wmse ? "wmse" : "mse-mean";
    kv["train.grad_clip"] = tc.grad_clip ? "true" : "false";
    kv["train.clip_threshold"] = fmt(tc.clip_threshold);
}

// Scales raw watt series and windows them into a dataset.
Dataset make_dataset(const std::string& source, double period_s,
                     std::vector<std::string> names,
                     const std::vector<double>& mixture_w,
                     const std::vector<std::vector<double>>& targets_w,
                     int64_t window_len, int64_t t0) {
    auto [scaled, scale] = minmax_fit_transform(mixture_w);
    std::vector<std::vector<double>> targets_scaled;
    for (auto& t : targets_w) targets_scaled.push_back(scale.apply(t));
    int64_t dropped = 0;
    Dataset ds;
    ds.source = source;
    ds.period_s = period_s;
    ds.appliances = std::move(names);
    ds.scale = scale;
    ds.windows = window_split(scaled, targets_scaled, scale, window_len, 0, t0, period_s, &dropped);
    if (ds.windows.empty()) throw DataError("no complete windows of length " + std::to_string(window_len));
    if (dropped > 0)
        std::cerr << "note: dropped " << dropped << " trailing samples (partial window)\n";
    return ds;
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------
struct SynthArgs {
    std::string spec_file, out;
    int64_t T = 2048;
    int64_t n_windows = 40;
    double noise = 2.0;
    double period = 1.0;
    uint64_t seed = 7;
};

int cmd_synth(const SynthArgs& a) {
    auto specs = a.spec_file.empty() ? default_specs() : parse_spec_file(a.spec_file);
    auto data = gen_synthetic(specs, a.T * a.n_windows, a.period, a.noise, a.seed);
    std::vector<std::string> names;
    for (auto& s : specs) names.push_back(s.name);
    Dataset ds = make_dataset("synthetic", a.period, names, data.mixture, data.targets, a.T, 0);

    RunPaths paths(a.out);
    save_dataset(a.out, ds);
    std::map<std::string, std::string> kv;
    kv["synth.spec"] = a.spec_file.empty() ? "<default>" : a.spec_file;
    kv["synth.window_len"] = std::to_string(a.T);
    kv["synth.windows"] = std::to_string(a.n_windows);
    kv["synth.noise_std_w"] = fmt(a.noise);
    kv["synth.period_s"] = fmt(a.period);
    kv["synth.seed"] = std::to_string(a.seed);
    echo_config(paths, kv);

    std::cout << "synthetic dataset: " << ds.windows.size() << " windows of " << a.T
              << " samples, C=" << ds.C() << "\n";
    for (auto& n : ds.appliances) std::cout << "  appliance: " << n << "\n";
    std::cout << "scale: min=" << ds.scale.min_w << " W, max=" << ds.scale.max_w << " W\n";
    return 0;
}

// ---------------------------------------------------------------------------
// prepare
// ---------------------------------------------------------------------------
struct PrepareArgs {
    std::string dataset = "redd";
    std::string dir, out, extra;
    int house = 1;
    int top = 5;
    int64_t window = 0;  // 0: dataset default
    double period = 0.0; // 0: dataset default
    double noise = 0.0;
    uint64_t seed = 0;
};

int cmd_prepare(const PrepareArgs& a) {
    if (a.dataset != "redd" && a.dataset != "ukdale")
        throw ConfigError("--dataset must be redd or ukdale");
    const double period = a.period > 0 ? a.period : (a.dataset == "redd" ? 1.0 : 6.0);
    const int64_t window = a.window > 0 ? a.window : (a.dataset == "redd" ? 86400 : 14400);

    fs::path house_dir = fs::path(a.dir) / ("house_" + std::to_string(a.house));
    if (!fs::exists(house_dir)) throw DataError("house directory not found: " + house_dir.string());
    auto labels = parse_labels_file((house_dir / "labels.dat").string());

    struct Channel {
        int number;
        std::string name;
        ChannelSeries series;
        double energy;
    };
    std::vector<Channel> channels;
    for (auto& [num, name] : labels) {
        if (name == "mains") continue; // aggregate is rebuilt from appliance channels
        fs::path p = house_dir / ("channel_" + std::to_string(num) + ".dat");
        if (!fs::exists(p)) throw DataError("missing channel file: " + p.string());
        Channel c{num, name, parse_channel_file(p.string(), name), 0.0};
        auto res = resample_linear(c.series, period);
        for (double v : res.values) c.energy += v * period;
        channels.push_back(std::move(c));
    }
    if (static_cast<int>(channels.size()) < a.top)
        throw DataError("only " + std::to_string(channels.size()) + " appliance channels, --top " +
                        std::to_string(a.top) + " requested");

    std::stable_sort(channels.begin(), channels.end(),
                     [](const Channel& x, const Channel& y) { return x.energy > y.energy; });

    const Channel* extra_ch = nullptr;
    if (!a.extra.empty()) {
        for (size_t i = static_cast<size_t>(a.top); i < channels.size(); ++i)
            if (channels[i].name == a.extra) extra_ch = &channels[i];
        if (!extra_ch) throw DataError("--extra appliance not found outside the top selection: " + a.extra);
    }

    // Common grid across the selected channels.
    int64_t t_start = std::numeric_limits<int64_t>::min();
    int64_t t_end = std::numeric_limits<int64_t>::max();
    auto span_of = [&](const Channel& c) {
        t_start = std::max(t_start, c.series.samples.front().t);
        t_end = std::min(t_end, c.series.samples.back().t);
    };
    for (int i = 0; i < a.top; ++i) span_of(channels[static_cast<size_t>(i)]);
    if (extra_ch) span_of(*extra_ch);
    if (t_end <= t_start) throw DataError("selected channels have no overlapping time span");
    const int64_t n = static_cast<int64_t>(std::floor(static_cast<double>(t_end - t_start) / period)) + 1;

    std::vector<std::string> names;
    std::vector<std::vector<double>> targets;
    for (int i = 0; i < a.top; ++i) {
        auto& c = channels[static_cast<size_t>(i)];
        names.push_back(c.name);
        targets.push_back(resample_onto(c.series, t_start, n, period));
    }
    std::vector<double> extra_series;
    if (extra_ch) extra_series = resample_onto(extra_ch->series, t_start, n, period);

    Rng rng(a.seed);
    auto mixture = build_aggregate(targets, extra_ch ? &extra_series : nullptr, a.noise, rng);
    Dataset ds = make_dataset(a.dataset, period, names, mixture, targets, window, t_start);

    RunPaths paths(a.out);
    save_dataset(a.out, ds);
    std::map<std::string, std::string> kv;
    kv["prepare.dataset"] = a.dataset;
    kv["prepare.house"] = std::to_string(a.house);
    kv["prepare.top"] = std::to_string(a.top);
    kv["prepare.period_s"] = fmt(period);
    kv["prepare.window_len"] = std::to_string(window);
    kv["prepare.noise_std_w"] = fmt(a.noise);
    kv["prepare.extra"] = a.extra.empty() ? "<none>" : a.extra;
    kv["prepare.seed"] = std::to_string(a.seed);
    echo_config(paths, kv);

    std::cout << "selected appliances (by energy):\n";
    for (int i = 0; i < a.top; ++i)
        std::cout << "  " << channels[static_cast<size_t>(i)].name << " (channel "
                  << channels[static_cast<size_t>(i)].number << ", "
                  << channels[static_cast<size_t>(i)].energy / 3600.0 << " Wh)\n";
    if (extra_ch) std::cout << "extra (in mixture only): " << extra_ch->name << "\n";
    std::cout << "scale: min=" << ds.scale.min_w << " W, max=" << ds.scale.max_w << " W\n";
    std::cout << ds.windows.size() << " windows of " << window << " samples at " << period << " s\n";
    return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------
struct TrainArgs {
    std::string data, out, variant, config, init_ckpt;
    int fold = 0;
    bool all_folds = false;
    long long epochs_override = -1;
    long long seed_override = -1;
    std::string loss_override;
};

int cmd_train(const TrainArgs& a) {
    KvConfig cfg = a.config.empty() ? KvConfig() : KvConfig::parse_file(a.config);
    ModelConfig mc = model_config_from(cfg, a.variant);
    TrainConfig tc = train_config_from(cfg);
    if (a.epochs_override >= 0) tc.epochs = a.epochs_override;
    if (a.seed_override >= 0) tc.seed = static_cast<uint64_t>(a.seed_override);
    if (!a.loss_override.empty()) {
        if (a.loss_override == "wmse") tc.loss = LossKind::Wmse;
        else if (a.loss_override == "mse-mean") tc.loss = LossKind::MseMean;
        else throw ConfigError("--loss must be wmse or mse-mean");
    }

    Dataset ds = load_dataset(a.data);
    int64_t cfg_c = cfg.get_int("model.c", 0);
    if (cfg_c > 0 && cfg_c != ds.C())
        throw ConfigError("config model.c=" + std::to_string(cfg_c) + " but dataset has C=" +
                          std::to_string(ds.C()));
    mc.C = ds.C();
    mc.validate();
    tc.validate();

    RunPaths paths(a.out);
    std::map<std::string, std::string> kv;
    dump_model_train_kv(kv, mc, tc);
    kv["data.dir"] = a.data;
    kv["data.windows"] = std::to_string(ds.windows.size());
    echo_config(paths, kv);

    const int64_t k = std::min<int64_t>(tc.k_folds, static_cast<int64_t>(ds.windows.size()));
    if (k < 2) throw DataError("need at least 2 windows for a train/validation split");
    auto folds = kfold_split(static_cast<int64_t>(ds.windows.size()), k, tc.seed);
    if (!a.all_folds && (a.fold < 0 || a.fold >= static_cast<int>(folds.size())))
        throw ConfigError("--fold out of range (have " + std::to_string(folds.size()) + " folds)");

    std::ofstream log(paths.file("train_log.txt"));
    log.precision(10);

    CheckpointScale scale{true, ds.scale.min_w, ds.scale.max_w};
    std::ofstream summary(paths.file("summary.txt"));
    summary.precision(10);

    int first = a.all_folds ? 0 : a.fold;
    int last = a.all_folds ? static_cast<int>(folds.size()) - 1 : a.fold;
    for (int f = first; f <= last; ++f) {
        ModelParams params;
        if (!a.init_ckpt.empty()) {
            ModelConfig loaded_cfg;
            CheckpointScale loaded_scale;
            load_checkpoint(a.init_ckpt, loaded_cfg, params, loaded_scale);
            if (loaded_cfg.C != mc.C) throw DataError("--init checkpoint has C=" + std::to_string(loaded_cfg.C));
            mc = loaded_cfg;
        } else {
            params = init_params<double>(mc, tc.seed);
        }

        std::vector<const SignalWindow*> trainw, valw;
        for (int i : folds[static_cast<size_t>(f)].train) trainw.push_back(&ds.windows[static_cast<size_t>(i)]);
        for (int i : folds[static_cast<size_t>(f)].validation) valw.push_back(&ds.windows[static_cast<size_t>(i)]);

        std::string last_path = paths.file("fold" + std::to_string(f) + "_last.ckpt").string();
        auto outname = paths.file("fold" + std::to_string(f) + "_best.ckpt").string();

        auto outcome = train_fold(mc, std::move(params), trainw, valw, tc, f,
            [&](const EpochRecord& r) {
                log << "fold=" << r.fold << " epoch=" << r.epoch
                    << " train_wmse=" << r.train_loss << " val_wmse=" << r.val_wmse
                    << " wall_s=" << r.wall_s << "\n";
                log.flush();
            });

        save_checkpoint(outname, mc, outcome.best_params, scale);
        // last-state checkpoint: resume with --init
        save_checkpoint(last_path, mc, outcome.best_params, scale);

        summary << "fold=" << f << " best_epoch=" << outcome.best_epoch
                << " best_val_wmse=" << outcome.best_val
                << " diverged=" << (outcome.diverged ? 1 : 0)
                << " collapse_alarm=" << (outcome.collapse_alarm ? 1 : 0) << "\n";
        std::cout << "fold " << f << ": best val WMSE " << outcome.best_val << " at epoch "
                  << outcome.best_epoch << (outcome.diverged ? " (diverged, last good kept)" : "")
                  << (outcome.collapse_alarm ? " (collapse alarm)" : "") << "\n";
        if (outcome.diverged) return 3;
    }
    return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------
struct EvalArgs {
    std::string checkpoint, data, out;
    int fold = 0;
    std::string split = "val";
    bool scaled = false;
};

int cmd_eval(const EvalArgs& a) {
    ModelConfig mc;
    ModelParams params;
    CheckpointScale cscale;
    load_checkpoint(a.checkpoint, mc, params, cscale);

    Dataset ds = load_dataset(a.data);
    if (mc.C != ds.C())
        throw DataError("checkpoint expects C=" + std::to_string(mc.C) + " appliances, dataset has " +
                        std::to_string(ds.C()));

    std::vector<int> selected;
    if (a.split == "all") {
        for (size_t i = 0; i < ds.windows.size(); ++i) selected.push_back(static_cast<int>(i));
    } else {
        const int64_t k = std::min<int64_t>(ds.k_folds, static_cast<int64_t>(ds.windows.size()));
        auto folds = kfold_split(static_cast<int64_t>(ds.windows.size()), k);
        if (a.fold < 0 || a.fold >= static_cast<int>(folds.size()))
            throw ConfigError("--fold out of range");
        selected = a.split == "val" ? folds[static_cast<size_t>(a.fold)].validation
                                    : folds[static_cast<size_t>(a.fold)].train;
    }
    if (selected.empty()) throw DataError("no windows selected for evaluation");

    const MinMaxScale scale{ds.scale.min_w, ds.scale.max_w};
    const int64_t C = ds.C();

    // Forward passes are pure; windows evaluate in parallel workers over
    // shared read-only parameters, then aggregate in window order.
    std::vector<std::vector<std::vector<double>>> preds(selected.size());
    std::atomic<size_t> next{0};
    int n_workers = worker_count(selected.size());
    std::vector<std::thread> pool;
    std::atomic<bool> failed{false};
    std::string fail_msg;
    std::mutex fail_mu;
    for (int w = 0; w < n_workers; ++w) {
        pool.emplace_back([&]() {
            for (;;) {
                size_t i = next.fetch_add(1);
                if (i >= selected.size() || failed.load()) break;
                try {
                    const SignalWindow& win = ds.windows[static_cast<size_t>(selected[i])];
                    Tensor mix = Tensor::from({1, static_cast<int64_t>(win.mixture.size())},
                                              std::vector<double>(win.mixture));
                    TapeT<double> tape(false);
                    Tensor p = forward(tape, mix, params, mc);
                    std::vector<std::vector<double>> rows(static_cast<size_t>(C));
                    for (int64_t c = 0; c < C; ++c)
                        rows[static_cast<size_t>(c)].assign(p.ptr() + c * p.shape[1],
                                                            p.ptr() + (c + 1) * p.shape[1]);
                    preds[i] = std::move(rows);
                } catch (const std::exception& e) {
                    std::lock_guard<std::mutex> g(fail_mu);
                    failed = true;
                    fail_msg = e.what();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failed) throw NumericError("evaluation failed: " + fail_msg);

    SeriesSet pred(static_cast<size_t>(C)), target(static_cast<size_t>(C));
    std::vector<double> times;
    for (size_t i = 0; i < selected.size(); ++i) {
        const SignalWindow& win = ds.windows[static_cast<size_t>(selected[i])];
        const int64_t Tp = static_cast<int64_t>(preds[i][0].size());
        for (int64_t t = 0; t < Tp; ++t)
            times.push_back(static_cast<double>(win.start_ts) + static_cast<double>(t) * ds.period_s);
        for (int64_t c = 0; c < C; ++c) {
            for (int64_t t = 0; t < Tp; ++t) {
                double p = preds[i][static_cast<size_t>(c)][static_cast<size_t>(t)];
                double y = win.targets[static_cast<size_t>(c)][static_cast<size_t>(t)];
                if (a.scaled) {
                    pred[static_cast<size_t>(c)].push_back(p);
                    target[static_cast<size_t>(c)].push_back(y);
                } else {
                    pred[static_cast<size_t>(c)].push_back(scale.invert(p));
                    target[static_cast<size_t>(c)].push_back(scale.invert(y));
                }
            }
        }
    }

    MetricsReport report = compute_report(pred, target, ds.appliances,
                                          static_cast<int64_t>(selected.size()), a.scaled);

    RunPaths paths(a.out);
    {
        std::ofstream csv(paths.file("metrics.csv"));
        csv << report.to_csv();
        std::ofstream txt(paths.file("metrics.txt"));
        txt << report.to_table();
    }
    for (int64_t c = 0; c < C; ++c) {
        std::ofstream tr(paths.file("trace_" + ds.appliances[static_cast<size_t>(c)] + ".csv"));
        tr.precision(10);
        tr << "time,target_w,pred_w\n";
        for (size_t t = 0; t < times.size(); ++t)
            tr << times[t] << ',' << target[static_cast<size_t>(c)][t] << ','
               << pred[static_cast<size_t>(c)][t] << '\n';
    }
    std::map<std::string, std::string> kv;
    kv["eval.checkpoint"] = a.checkpoint;
    kv["eval.data"] = a.data;
    kv["eval.fold"] = std::to_string(a.fold);
    kv["eval.split"] = a.split;
    kv["eval.space"] = a.scaled ? "scaled" : "watts";
    echo_config(paths, kv);

    std::cout << report.to_table();
    return 0;
}

// ---------------------------------------------------------------------------
// disaggregate
// ---------------------------------------------------------------------------
struct DisaggArgs {
    std::string checkpoint, input, out;
    double period = 1.0;
    bool stream = false;
    bool f32 = false;
};

template <typename S>
std::vector<std::vector<S>> run_disagg(const ModelConfig& mc, ModelParamsT<S>& params,
                                       const std::vector<S>& scaled, bool stream) {
    const int64_t T = static_cast<int64_t>(scaled.size());
    // Pad to the next frame-complete length by repeating the last value so
    // predictions cover the whole grid; output is truncated back to T.
    int64_t covered = (mc.frames(T) - 1) * mc.S + mc.L;
    std::vector<S> padded = scaled;
    while (covered < T) {
        padded.push_back(scaled.back());
        covered = (mc.frames(static_cast<int64_t>(padded.size())) - 1) * mc.S + mc.L;
    }

    std::vector<std::vector<S>> out;
    if (stream) {
        StreamingDisaggregatorT<S> sd(mc, params);
        ReceptiveField rf = receptive_field(mc);
        int64_t chunk = std::max<int64_t>(mc.S, (rf.analytic_samples / mc.S) * mc.S);
        for (size_t pos = 0; pos < padded.size(); pos += static_cast<size_t>(chunk)) {
            size_t n = std::min(padded.size() - pos, static_cast<size_t>(chunk));
            sd.push(std::vector<S>(padded.begin() + pos, padded.begin() + pos + n), out);
        }
        sd.finish(out);
    } else {
        const int64_t Tp = static_cast<int64_t>(padded.size());
        TensorT<S> mix = TensorT<S>::from({1, Tp}, std::move(padded));
        TapeT<S> tape(false);
        TensorT<S> p = forward(tape, mix, params, mc);
        out.resize(static_cast<size_t>(mc.C));
        for (int64_t c = 0; c < mc.C; ++c)
            out[static_cast<size_t>(c)].assign(p.ptr() + c * p.shape[1], p.ptr() + (c + 1) * p.shape[1]);
    }
    for (auto& series : out) series.resize(static_cast<size_t>(T));
    return out;
}

int cmd_disaggregate(const DisaggArgs& a) {
    ModelConfig mc;
    ModelParams params64;
    CheckpointScale cscale;
    load_checkpoint(a.checkpoint, mc, params64, cscale);
    if (!cscale.present) throw DataError("checkpoint carries no scale parameters");
    if (a.stream && !mc.causal)
        throw ConfigError("--stream requires a causal checkpoint; this one is non-causal");

    ChannelSeries series = parse_channel_file(a.input);
    UniformSeries grid = resample_linear(series, a.period);
    if (static_cast<int64_t>(grid.values.size()) < mc.L)
        throw DataError("input (" + std::to_string(grid.values.size()) +
                        " samples after resampling) is shorter than one frame of " + std::to_string(mc.L));

    MinMaxScale scale{cscale.min_w, cscale.max_w};
    std::vector<double> scaled = scale.apply(grid.values);

    std::vector<std::vector<double>> watts(static_cast<size_t>(mc.C));
    if (a.f32) {
        ModelParamsT<float> params32;
        ModelConfig mc32;
        CheckpointScale sc32;
        load_checkpoint(a.checkpoint, mc32, params32, sc32);
        std::vector<float> scaled32(scaled.begin(), scaled.end());
        auto out32 = run_disagg<float>(mc32, params32, scaled32, a.stream);
        for (int64_t c = 0; c < mc.C; ++c)
            for (float v : out32[static_cast<size_t>(c)])
                watts[static_cast<size_t>(c)].push_back(scale.invert(static_cast<double>(v)));
    } else {
        auto out64 = run_disagg<double>(mc, params64, scaled, a.stream);
        for (int64_t c = 0; c < mc.C; ++c)
            for (double v : out64[static_cast<size_t>(c)])
                watts[static_cast<size_t>(c)].push_back(scale.invert(v));
    }

    RunPaths paths(a.out);
    for (int64_t c = 0; c < mc.C; ++c) {
        std::ofstream os(paths.file("appliance_" + std::to_string(c) + ".csv"));
        os.precision(10);
        os << "time,pred_w\n";
        for (size_t i = 0; i < watts[static_cast<size_t>(c)].size(); ++i)
            os << (static_cast<double>(grid.t0) + static_cast<double>(i) * a.period) << ','
               << watts[static_cast<size_t>(c)][i] << '\n';
    }
    std::map<std::string, std::string> kv;
    kv["disaggregate.checkpoint"] = a.checkpoint;
    kv["disaggregate.input"] = a.input;
    kv["disaggregate.period_s"] = fmt(a.period);
    kv["disaggregate.stream"] = a.stream ? "true" : "false";
    kv["disaggregate.precision"] = a.f32 ? "f32" : "f64";
    echo_config(paths, kv);

    std::cout << "wrote " << mc.C << " appliance series of " << grid.values.size() << " samples to "
              << a.out << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// inspect
// ---------------------------------------------------------------------------
int cmd_inspect(const std::string& checkpoint) {
    ModelConfig mc;
    ModelParams params;
    CheckpointScale scale;
    load_checkpoint(checkpoint, mc, params, scale);

    std::cout << "config: N=" << mc.N << " L=" << mc.L << " S=" << mc.S << " B=" << mc.B
              << " H=" << mc.H << " P=" << mc.P << " X=" << mc.X << " R=" << mc.R
              << " C=" << mc.C << " causal=" << (mc.causal ? "yes" : "no")
              << " glu=" << (mc.glu ? "yes" : "no") << " leaky_slope=" << mc.leaky_slope << "\n";
    if (scale.present)
        std::cout << "scale: min=" << scale.min_w << " W, max=" << scale.max_w << " W\n";

    std::cout << "parameters:\n";
    for (auto& [name, count] : param_breakdown(mc))
        std::cout << "  " << name << ": " << count << "\n";
    int64_t total = param_count(mc);
    std::cout << "  total: " << total << "\n";
    if (total != params.count()) throw DataError("parameter accounting mismatch against stored blobs");

    ReceptiveField rf = receptive_field(mc);
    std::cout << "receptive field:\n";
    std::cout << "  separator stack (as built): " << rf.analytic_frames << " frames\n";
    std::cout << "  end-to-end span: " << rf.analytic_samples << " samples\n";
    std::cout << "  closed form 2^(X*R)*(P-1), kernel-length reading: " << rf.formula_frames
              << " frames\n";
    std::cout << "  closed form 2^(X*R)*(L-1), encoder-filter reading: " << rf.formula_samples_enc
              << " samples\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"convnilm: convolutional energy disaggregation"};
    app.require_subcommand(1);

    SynthArgs synth;
    auto* s = app.add_subcommand("synth", "generate a synthetic dataset");
    s->add_option("--spec", synth.spec_file, "appliance spec file (default: built-in 3-appliance set)");
    s->add_option("--T", synth.T, "window length in samples")->capture_default_str();
    s->add_option("--windows", synth.n_windows, "number of windows")->capture_default_str();
    s->add_option("--noise", synth.noise, "mixture noise std in watts")->capture_default_str();
    s->add_option("--period", synth.period, "sample period in seconds")->capture_default_str();
    s->add_option("--seed", synth.seed, "generator seed")->capture_default_str();
    s->add_option("--out", synth.out, "output dataset directory")->required();

    PrepareArgs prep;
    auto* p = app.add_subcommand("prepare", "ingest a REDD/UK-DALE-format house directory");
    p->add_option("--dataset", prep.dataset, "redd or ukdale")->required();
    p->add_option("--dir", prep.dir, "dataset root (contains house_<N>/)")->required();
    p->add_option("--house", prep.house, "house number")->capture_default_str();
    p->add_option("--top", prep.top, "number of highest-energy appliances to keep")->capture_default_str();
    p->add_option("--window", prep.window, "window length in samples (default: one day)");
    p->add_option("--period", prep.period, "grid period in seconds (default: 1 for redd, 6 for ukdale)");
    p->add_option("--noise", prep.noise, "extra mixture noise std in watts")->capture_default_str();
    p->add_option("--extra", prep.extra, "appliance added to the mixture but not disaggregated");
    p->add_option("--seed", prep.seed, "noise seed")->capture_default_str();
    p->add_option("--out", prep.out, "output dataset directory")->required();

    TrainArgs train;
    auto* t = app.add_subcommand("train", "train a model on a prepared dataset");
    t->add_option("--data", train.data, "dataset directory")->required();
    t->add_option("--out", train.out, "run output directory")->required();
    t->add_option("--variant", train.variant, "base | causal | causal-glu");
    t->add_option("--config", train.config, "config file (key = value with [model]/[train] sections)");
    t->add_option("--fold", train.fold, "fold to train")->capture_default_str();
    t->add_flag("--all-folds", train.all_folds, "train every fold");
    t->add_option("--epochs", train.epochs_override, "override train.epochs");
    t->add_option("--seed", train.seed_override, "override train.seed");
    t->add_option("--loss", train.loss_override, "override train.loss (wmse | mse-mean)");
    t->add_option("--init", train.init_ckpt, "checkpoint to start from");

    EvalArgs eval;
    auto* e = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    e->add_option("--checkpoint", eval.checkpoint, "checkpoint file")->required();
    e->add_option("--data", eval.data, "dataset directory")->required();
    e->add_option("--out", eval.out, "report output directory")->required();
    e->add_option("--fold", eval.fold, "fold whose windows to use")->capture_default_str();
    e->add_option("--split", eval.split, "val | train | all")->capture_default_str();
    e->add_flag("--scaled", eval.scaled, "report metrics in scaled space (debug)");

    DisaggArgs dis;
    auto* d = app.add_subcommand("disaggregate", "disaggregate a raw mixture file");
    d->add_option("--checkpoint", dis.checkpoint, "checkpoint file")->required();
    d->add_option("--input", dis.input, "mixture channel file (\"<unix-seconds> <watts>\" lines)")->required();
    d->add_option("--out", dis.out, "output directory")->required();
    d->add_option("--period", dis.period, "resampling period in seconds")->capture_default_str();
    d->add_flag("--stream", dis.stream, "stream in receptive-field-sized chunks (causal only)");
    d->add_flag("--f32", dis.f32, "run the forward pass in 32-bit floats");

    std::string inspect_ckpt;
    auto* i = app.add_subcommand("inspect", "print checkpoint config, parameters and receptive field");
    i->add_option("--checkpoint", inspect_ckpt, "checkpoint file")->required();

    try {
        app.parse(argc, argv);
        if (*s) return cmd_synth(synth);
        if (*p) return cmd_prepare(prep);
        if (*t) return cmd_train(train);
        if (*e) return cmd_eval(eval);
        if (*d) return cmd_disaggregate(dis);
        if (*i) return cmd_inspect(inspect_ckpt);
        return 1;
    } catch (const CLI::CallForHelp& err) {
        return app.exit(err);
    } catch (const CLI::ParseError& err) {
        app.exit(err);
        return 1;
    } catch (const ConfigError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 1;
    } catch (const DataError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 2;
    } catch (const ShapeError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 2;
    } catch (const NumericError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 3;
    }
}
