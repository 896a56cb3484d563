#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "convnilm/data.hpp"
#include "convnilm/model.hpp"

namespace convnilm {

enum class LossKind { Wmse, MseMean };

struct TrainConfig {
    int64_t epochs = 2000;
    int64_t batch_size = 5;
    double lr = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 0.01; // unusually large, kept as the working default
    int64_t k_folds = 10;
    uint64_t seed = 0;
    LossKind loss = LossKind::Wmse;
    bool grad_clip = false;
    double clip_threshold = 5.0;

    void validate() const {
        if (epochs <= 0 || batch_size <= 0) throw ConfigError("train config: epochs and batch size must be positive");
        if (lr <= 0.0) throw ConfigError("train config: learning rate must be positive");
        if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
            throw ConfigError("train config: betas must lie in [0,1)");
        if (eps <= 0.0) throw ConfigError("train config: eps must be positive");
        if (k_folds < 2) throw ConfigError("train config: k_folds must be >= 2");
    }
};

// Window mean squared error: time-averaged, summed over appliances. The sum
// over appliances is deliberately not divided by C, so wmse == C * mse_mean.
template <typename S>
TensorT<S> wmse(TapeT<S>& tape, const TensorT<S>& pred, const TensorT<S>& target) {
    if (pred.shape != target.shape) throw ShapeError("wmse: shape mismatch " + shape_str(pred.shape) +
                                                     " vs " + shape_str(target.shape));
    if (pred.rank() != 2) throw ShapeError("wmse: expected [C, T]");
    const int64_t T = pred.shape[1];
    TensorT<S> d = sub(tape, pred, target);
    return mul(tape, sum_all(tape, mul(tape, d, d)), 1.0 / static_cast<double>(T));
}

template <typename S>
TensorT<S> mse_mean(TapeT<S>& tape, const TensorT<S>& pred, const TensorT<S>& target) {
    if (pred.shape != target.shape) throw ShapeError("mse_mean: shape mismatch");
    TensorT<S> d = sub(tape, pred, target);
    return mean_all(tape, mul(tape, d, d));
}

template <typename S>
TensorT<S> training_loss(TapeT<S>& tape, LossKind kind, const TensorT<S>& pred, const TensorT<S>& target) {
    return kind == LossKind::Wmse ? wmse(tape, pred, target) : mse_mean(tape, pred, target);
}

// Plain-array WMSE for validation passes that skip the tape.
inline double wmse_value(const double* pred, const double* target, int64_t C, int64_t T) {
    double acc = 0.0;
    for (int64_t i = 0; i < C * T; ++i) {
        double d = pred[i] - target[i];
        acc += d * d;
    }
    return acc / static_cast<double>(T);
}

// ---------------------------------------------------------------------------
// Adam with bias correction: p -= lr * m_hat / (sqrt(v_hat) + eps).
// ---------------------------------------------------------------------------
template <typename S>
struct AdamStateT {
    std::vector<std::vector<S>> m, v;
    int64_t step = 0;

    static AdamStateT init(ModelParamsT<S>& params) {
        AdamStateT st;
        for (auto& [name, t] : params.entries()) {
            st.m.emplace_back(static_cast<size_t>(t->numel()), S(0));
            st.v.emplace_back(static_cast<size_t>(t->numel()), S(0));
        }
        return st;
    }
};

// One optimizer step over flat per-parameter gradient buffers, aligned with
// params.entries(). Throws NumericError on a non-finite gradient.
template <typename S>
void adam_step(ModelParamsT<S>& params, const std::vector<std::vector<S>>& grads,
               AdamStateT<S>& state, const TrainConfig& cfg) {
    auto entries = params.entries();
    if (grads.size() != entries.size() || state.m.size() != entries.size())
        throw ShapeError("adam_step: gradient/state layout mismatch");

    for (auto& g : grads)
        for (S v : g)
            if (!std::isfinite(static_cast<double>(v))) throw NumericError("non-finite gradient in adam_step");

    double clip_scale = 1.0;
    if (cfg.grad_clip) {
        double sq = 0.0;
        for (auto& g : grads)
            for (S v : g) sq += static_cast<double>(v) * static_cast<double>(v);
        double norm = std::sqrt(sq);
        if (norm > cfg.clip_threshold) clip_scale = cfg.clip_threshold / norm;
    }

    ++state.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (size_t pi = 0; pi < entries.size(); ++pi) {
        S* p = entries[pi].second->ptr();
        const auto& g = grads[pi];
        auto& m = state.m[pi];
        auto& v = state.v[pi];
        for (size_t i = 0; i < g.size(); ++i) {
            double gi = static_cast<double>(g[i]) * clip_scale;
            double mi = cfg.beta1 * static_cast<double>(m[i]) + (1.0 - cfg.beta1) * gi;
            double vi = cfg.beta2 * static_cast<double>(v[i]) + (1.0 - cfg.beta2) * gi * gi;
            m[i] = static_cast<S>(mi);
            v[i] = static_cast<S>(vi);
            double m_hat = mi / bc1;
            double v_hat = vi / bc2;
            p[i] = static_cast<S>(static_cast<double>(p[i]) - cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps));
        }
    }
}

// ---------------------------------------------------------------------------
// Collapse monitor: fires after 5 consecutive epochs in which the mean
// absolute prediction is below 1e-6 of the mean absolute target. Disabled
// while the targets themselves are all zero.
// ---------------------------------------------------------------------------
struct CollapseMonitor {
    int consecutive = 0;
    bool alarmed = false;

    bool update(double mean_abs_pred, double mean_abs_target) {
        if (mean_abs_target <= 0.0) {
            consecutive = 0;
            return alarmed;
        }
        if (mean_abs_pred < 1e-6 * mean_abs_target) {
            if (++consecutive >= 5) alarmed = true;
        } else {
            consecutive = 0;
        }
        return alarmed;
    }
};

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------
struct EpochRecord {
    int64_t fold = 0;
    int64_t epoch = 0;
    double train_loss = 0.0;
    double val_wmse = 0.0;
    double wall_s = 0.0;
};

template <typename S>
struct FoldOutcome {
    ModelParamsT<S> best_params;
    double best_val = std::numeric_limits<double>::infinity();
    int64_t best_epoch = -1;
    bool diverged = false;
    bool collapse_alarm = false;
    std::vector<EpochRecord> log;
};

using EpochSink = std::function<void(const EpochRecord&)>;

// Trains one fold. Mini-batch loss is the mean of per-window WMSE (or
// mse_mean); windows are reshuffled every epoch from the run seed, so two
// runs with the same seed produce identical loss curves. On divergence
// (non-finite or > 1e6 batch loss) the last completed epoch's parameters are
// returned.
template <typename S>
FoldOutcome<S> train_fold(const ModelConfig& mcfg, ModelParamsT<S> params,
                          const std::vector<const SignalWindow*>& train_windows,
                          const std::vector<const SignalWindow*>& val_windows,
                          const TrainConfig& tcfg, int64_t fold_idx = 0,
                          const EpochSink& sink = {}) {
    mcfg.validate();
    tcfg.validate();
    if (train_windows.empty()) throw DataError("train_fold: no training windows");

    const int64_t C = mcfg.C;
    auto to_tensors = [&](const SignalWindow& w) {
        const int64_t T = static_cast<int64_t>(w.mixture.size());
        std::vector<S> mix(w.mixture.begin(), w.mixture.end());
        TensorT<S> m = TensorT<S>::from({1, T}, std::move(mix));
        std::vector<S> tgt;
        tgt.reserve(static_cast<size_t>(C * T));
        for (auto& t : w.targets) tgt.insert(tgt.end(), t.begin(), t.end());
        TensorT<S> g = TensorT<S>::from({C, T}, std::move(tgt));
        return std::make_pair(m, g);
    };

    std::vector<std::pair<TensorT<S>, TensorT<S>>> train_t, val_t;
    for (auto* w : train_windows) {
        if (static_cast<int64_t>(w->targets.size()) != C)
            throw DataError("train_fold: window has " + std::to_string(w->targets.size()) +
                            " targets but model expects " + std::to_string(C));
        train_t.push_back(to_tensors(*w));
    }
    for (auto* w : val_windows) val_t.push_back(to_tensors(*w));

    FoldOutcome<S> out;
    out.best_params = params.clone();
    AdamStateT<S> adam = AdamStateT<S>::init(params);
    CollapseMonitor monitor;
    Rng shuffle_rng(tcfg.seed * 0x2545f4914f6cdd1dULL + static_cast<uint64_t>(fold_idx) + 1);

    auto entries = params.entries();
    std::vector<std::vector<S>> grad_acc(entries.size());
    for (size_t i = 0; i < entries.size(); ++i)
        grad_acc[i].assign(static_cast<size_t>(entries[i].second->numel()), S(0));

    ModelParamsT<S> last_good = params.clone();
    std::vector<size_t> order(train_t.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int64_t epoch = 0; epoch < tcfg.epochs; ++epoch) {
        auto t_start = std::chrono::steady_clock::now();

        // Fisher-Yates from the run RNG
        for (size_t i = order.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(shuffle_rng.below(i));
            std::swap(order[i - 1], order[j]);
        }

        double epoch_loss = 0.0;
        double abs_pred = 0.0, abs_target = 0.0;
        int64_t abs_count = 0;
        bool failed = false;

        for (size_t b0 = 0; b0 < order.size() && !failed; b0 += static_cast<size_t>(tcfg.batch_size)) {
            size_t b1 = std::min(order.size(), b0 + static_cast<size_t>(tcfg.batch_size));
            const double inv_n = 1.0 / static_cast<double>(b1 - b0);
            for (auto& g : grad_acc) std::fill(g.begin(), g.end(), S(0));

            double batch_loss = 0.0;
            for (size_t bi = b0; bi < b1; ++bi) {
                auto& [mix, tgt] = train_t[order[bi]];
                TapeT<S> tape;
                params.watch_all(tape);
                TensorT<S> pred;
                TensorT<S> loss;
                try {
                    pred = forward(tape, mix, params, mcfg);
                    loss = training_loss(tape, tcfg.loss, pred, tgt);
                } catch (const NumericError&) {
                    failed = true;
                    break;
                }
                double lv = static_cast<double>(loss.item());
                if (!std::isfinite(lv) || lv > 1e6) {
                    failed = true;
                    break;
                }
                batch_loss += lv * inv_n;

                for (int64_t i = 0; i < pred.numel(); ++i) abs_pred += std::abs(static_cast<double>(pred.ptr()[i]));
                for (int64_t i = 0; i < tgt.numel(); ++i) abs_target += std::abs(static_cast<double>(tgt.ptr()[i]));
                abs_count += pred.numel();

                GradientMapT<S> grads = tape.backward(loss);
                for (size_t pi = 0; pi < entries.size(); ++pi) {
                    TensorT<S> g = grads.at(*entries[pi].second);
                    const S* gp = g.ptr();
                    auto& acc = grad_acc[pi];
                    for (size_t i = 0; i < acc.size(); ++i) acc[i] += static_cast<S>(inv_n) * gp[i];
                }
            }
            if (failed) break;

            try {
                adam_step(params, grad_acc, adam, tcfg);
            } catch (const NumericError&) {
                failed = true;
                break;
            }
            epoch_loss += batch_loss * static_cast<double>(b1 - b0);
        }

        if (failed || !params.all_finite()) {
            out.diverged = true;
            params = last_good;
            break;
        }

        epoch_loss /= static_cast<double>(train_t.size());
        monitor.update(abs_count ? abs_pred / static_cast<double>(abs_count) : 0.0,
                       abs_count ? abs_target / static_cast<double>(abs_count) : 0.0);
        out.collapse_alarm = monitor.alarmed;

        double val = 0.0;
        if (!val_t.empty()) {
            for (auto& [mix, tgt] : val_t) {
                TapeT<S> t(false);
                TensorT<S> pred = forward(t, mix, params, mcfg);
                std::vector<double> pd(pred.ptr(), pred.ptr() + pred.numel());
                std::vector<double> td(tgt.ptr(), tgt.ptr() + tgt.numel());
                val += wmse_value(pd.data(), td.data(), C, pred.shape[1]);
            }
            val /= static_cast<double>(val_t.size());
        }

        double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        EpochRecord rec{fold_idx, epoch, epoch_loss, val, wall};
        out.log.push_back(rec);
        if (sink) sink(rec);

        if (val_t.empty() ? epoch_loss < out.best_val : val < out.best_val) {
            out.best_val = val_t.empty() ? epoch_loss : val;
            out.best_epoch = epoch;
            out.best_params = params.clone();
        }
        last_good = params.clone();
    }

    if (out.best_epoch < 0) out.best_params = params.clone();
    return out;
}

} // namespace convnilm
