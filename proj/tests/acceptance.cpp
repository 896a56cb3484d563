// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Everything here is deterministic; training-based checks reuse the
// library's seeded paths end to end.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "convnilm/convnilm.hpp"

using namespace convnilm;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& what) {
    std::printf("CRITERION %d %s  %s\n", criterion, pass ? "PASS" : "FAIL", what.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

std::vector<double> rand_vec(Rng& rng, int64_t n, double lo = -1, double hi = 1) {
    std::vector<double> v(static_cast<size_t>(n));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

std::string fmt2(const char* pattern, double a, double b = 0, double c = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, pattern, a, b, c);
    return buf;
}

// --------------------------------------------------------------------------
// 1. gradient correctness
// --------------------------------------------------------------------------
void criterion_gradients() {
    auto t0 = std::chrono::steady_clock::now();
    Rng rng(101);
    double worst_op = 0;

    auto check = [&](const std::function<Tensor(Tape&, const std::vector<Tensor>&)>& f,
                     std::vector<Tensor> in) {
        worst_op = std::max(worst_op, grad_check(f, std::move(in), 1e-6));
    };

    for (int trial = 0; trial < 3; ++trial) {
        // operands away from kinks and division trouble
        Tensor a = Tensor::from({3, 6}, rand_vec(rng, 18, 0.3, 1.6));
        Tensor b = Tensor::from({3, 6}, rand_vec(rng, 18, 0.3, 1.6));
        Tensor col = Tensor::from({3, 1}, rand_vec(rng, 3, 0.4, 1.2));
        check([](Tape& t, const std::vector<Tensor>& in) { return sum_all(t, add(t, in[0], in[1])); }, {a, b});
        check([](Tape& t, const std::vector<Tensor>& in) { return sum_all(t, sub(t, in[0], in[1])); }, {a, b});
        check([](Tape& t, const std::vector<Tensor>& in) { return sum_all(t, mul(t, in[0], in[1])); }, {a, b});
        check([](Tape& t, const std::vector<Tensor>& in) { return sum_all(t, div(t, in[0], in[1])); }, {a, b});
        check([](Tape& t, const std::vector<Tensor>& in) { return sum_all(t, mul(t, in[0], in[1])); }, {a, col});
        check([](Tape& t, const std::vector<Tensor>& in) { return sum_all(t, sqrt_op(t, in[0])); }, {a});
        check([](Tape& t, const std::vector<Tensor>& in) { return sum_all(t, sigmoid(t, in[0])); }, {a});
        check([](Tape& t, const std::vector<Tensor>& in) { return sum_all(t, cumsum_last(t, in[0])); }, {a});
        check([](Tape& t, const std::vector<Tensor>& in) {
            Tensor m = mean_over(t, in[0], {1});
            return sum_all(t, mul(t, m, m));
        }, {a});
        check([](Tape& t, const std::vector<Tensor>& in) { return sum_all(t, leaky_relu(t, in[0], 0.01)); }, {a});
        check([](Tape& t, const std::vector<Tensor>& in) { return sum_all(t, relu(t, in[0])); }, {a});
        check([](Tape& t, const std::vector<Tensor>& in) { return sum_all(t, glu(t, in[0], in[1])); }, {a, b});

        Tensor g = Tensor::from({3, 1}, rand_vec(rng, 3, 0.5, 1.5));
        Tensor bb = Tensor::from({3, 1}, rand_vec(rng, 3));
        for (NormMode m : {NormMode::Global, NormMode::Framewise, NormMode::Cumulative})
            check([m](Tape& t, const std::vector<Tensor>& in) {
                Tensor y = channel_norm(t, in[0], m, in[1], in[2]);
                return sum_all(t, mul(t, y, y));
            }, {a, g, bb});

        Conv1dSpec sp;
        sp.in_channels = 2;
        sp.out_channels = 3;
        sp.kernel_size = 3;
        sp.dilation = 2;
        sp.padding = Padding::CausalLeft;
        Tensor x = Tensor::from({2, 12}, rand_vec(rng, 24));
        Tensor w = Tensor::from({3, 2, 3}, rand_vec(rng, 18));
        Tensor bias = Tensor::from({3}, rand_vec(rng, 3));
        check([&sp](Tape& t, const std::vector<Tensor>& in) {
            Tensor y = conv1d(t, in[0], sp, in[1], &in[2]);
            return sum_all(t, mul(t, y, y));
        }, {x, w, bias});

        Tensor tin = Tensor::from({2, 5}, rand_vec(rng, 10));
        Tensor tv = Tensor::from({2, 6}, rand_vec(rng, 12));
        check([](Tape& t, const std::vector<Tensor>& in) {
            Tensor y = transposed_conv1d(t, in[0], in[1], 3);
            return sum_all(t, mul(t, y, y));
        }, {tin, tv});
    }

    // full toy model at a smooth point
    ModelConfig cfg;
    cfg.N = 4;
    cfg.L = 8;
    cfg.S = 4;
    cfg.B = 2;
    cfg.H = 3;
    cfg.P = 3;
    cfg.X = 2;
    cfg.R = 1;
    cfg.C = 2;
    double model_err = 1e300;
    for (uint64_t seed = 1; seed < 50; ++seed) {
        ModelParams p = init_params<double>(cfg, seed);
        Rng mrng(seed * 31 + 7);
        Tensor mix = Tensor::from({1, 64}, rand_vec(mrng, 64, 0, 1));
        Tensor tgt = Tensor::from({2, 64}, rand_vec(mrng, 128, 0, 1));
        Tape probe(false);
        forward(probe, mix, p, cfg);
        if (probe.kink_min <= 1e-4) continue;
        std::vector<Tensor> inputs;
        for (auto& [name, tns] : p.entries()) inputs.push_back(*tns);
        inputs.push_back(mix);
        model_err = grad_check(
            [&](Tape& t, const std::vector<Tensor>&) { return wmse(t, forward(t, mix, p, cfg), tgt); },
            inputs, 1e-6);
        break;
    }

    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool pass = worst_op < 1e-4 && model_err < 1e-3 && secs < 60.0;
    report(1, pass,
           fmt2("grad_check: worst op %.3g (<1e-4), full toy model %.3g (<1e-3), %.1f s (<60)",
                worst_op, model_err, secs));
}

// --------------------------------------------------------------------------
// 2. convolution oracle + adjoint
// --------------------------------------------------------------------------
std::vector<double> conv_oracle(const std::vector<double>& input, int64_t Cin, int64_t T,
                                const std::vector<double>& weight, const std::vector<double>* bias,
                                const Conv1dSpec& sp) {
    const int64_t pl = sp.pad_left(), pr = sp.pad_right();
    const int64_t Tp = T + pl + pr;
    std::vector<double> padded(static_cast<size_t>(Cin * Tp), 0.0);
    for (int64_t c = 0; c < Cin; ++c)
        for (int64_t t = 0; t < T; ++t) padded[static_cast<size_t>(c * Tp + pl + t)] = input[static_cast<size_t>(c * T + t)];
    const int64_t To = (Tp - sp.span()) / sp.stride + 1;
    std::vector<double> out(static_cast<size_t>(sp.out_channels * To), 0.0);
    for (int64_t co = 0; co < sp.out_channels; ++co)
        for (int64_t t = 0; t < To; ++t) {
            double acc = bias ? (*bias)[static_cast<size_t>(co)] : 0.0;
            for (int64_t ci = 0; ci < Cin; ++ci) {
                if (sp.depthwise && ci != co) continue;
                for (int64_t k = 0; k < sp.kernel_size; ++k) {
                    double w = sp.depthwise ? weight[static_cast<size_t>(co * sp.kernel_size + k)]
                                            : weight[static_cast<size_t>((co * Cin + ci) * sp.kernel_size + k)];
                    acc += w * padded[static_cast<size_t>(ci * Tp + t * sp.stride + k * sp.dilation)];
                }
            }
            out[static_cast<size_t>(co * To + t)] = acc;
        }
    return out;
}

void criterion_conv_oracle() {
    Rng rng(202);
    Tape t(false);
    double worst = 0;
    int specs_run = 0;
    for (int trial = 0; trial < 100; ++trial) {
        Conv1dSpec sp;
        sp.depthwise = rng.below(4) == 0;
        sp.in_channels = 1 + static_cast<int64_t>(rng.below(4));
        sp.out_channels = sp.depthwise ? sp.in_channels : 1 + static_cast<int64_t>(rng.below(4));
        sp.kernel_size = 1 + static_cast<int64_t>(rng.below(5));
        sp.stride = 1 + static_cast<int64_t>(rng.below(3));
        sp.dilation = 1 + static_cast<int64_t>(rng.below(3));
        sp.padding = trial % 3 == 0 ? Padding::None
                                    : (trial % 3 == 1 ? Padding::CausalLeft : Padding::SameSymmetric);
        sp.bias = rng.below(2) == 0;
        const int64_t min_t = std::max<int64_t>(1, sp.span() - sp.pad_left() - sp.pad_right());
        const int64_t T = min_t + static_cast<int64_t>(rng.below(static_cast<uint64_t>(64 - min_t + 1)));

        std::vector<double> xv = rand_vec(rng, sp.in_channels * T);
        std::vector<double> wv = sp.depthwise ? rand_vec(rng, sp.out_channels * sp.kernel_size)
                                              : rand_vec(rng, sp.out_channels * sp.in_channels * sp.kernel_size);
        std::vector<double> bv = rand_vec(rng, sp.out_channels);
        Tensor x = Tensor::from({sp.in_channels, T}, xv);
        Tensor w = Tensor::from(sp.depthwise ? Shape{sp.out_channels, sp.kernel_size}
                                             : Shape{sp.out_channels, sp.in_channels, sp.kernel_size},
                                wv);
        Tensor b = Tensor::from({sp.out_channels}, bv);
        Tensor got = conv1d(t, x, sp, w, sp.bias ? &b : nullptr);
        std::vector<double> want = conv_oracle(xv, sp.in_channels, T, wv, sp.bias ? &bv : nullptr, sp);
        for (int64_t i = 0; i < got.numel(); ++i)
            worst = std::max(worst, std::abs(got.ptr()[i] - want[static_cast<size_t>(i)]));
        ++specs_run;
    }

    double worst_adjoint = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const int64_t N = 1 + static_cast<int64_t>(rng.below(6));
        const int64_t L = 2 + static_cast<int64_t>(rng.below(7));
        const int64_t S = 1 + static_cast<int64_t>(rng.below(static_cast<uint64_t>(L)));
        const int64_t K = 1 + static_cast<int64_t>(rng.below(8));
        const int64_t T = (K - 1) * S + L;
        Tensor x = Tensor::from({1, T}, rand_vec(rng, T));
        Tensor y = Tensor::from({N, K}, rand_vec(rng, N * K));
        Tensor v = Tensor::from({N, L}, rand_vec(rng, N * L));
        Tensor w = v.clone();
        w.shape = {N, 1, L};
        Conv1dSpec sp;
        sp.in_channels = 1;
        sp.out_channels = N;
        sp.kernel_size = L;
        sp.stride = S;
        sp.bias = false;
        Tensor cx = conv1d(t, x, sp, w, nullptr);
        Tensor ty = transposed_conv1d(t, y, v, S);
        double lhs = 0, rhs = 0;
        for (int64_t i = 0; i < cx.numel(); ++i) lhs += cx.ptr()[i] * y.ptr()[i];
        for (int64_t i = 0; i < ty.numel(); ++i) rhs += x.ptr()[i] * ty.ptr()[i];
        worst_adjoint = std::max(worst_adjoint, std::abs(lhs - rhs));
    }
    bool pass = specs_run == 100 && worst < 1e-9 && worst_adjoint < 1e-9;
    report(2, pass,
           fmt2("conv oracle: 100 specs, max |diff| %.3g (<1e-9); adjoint max |gap| %.3g (<1e-9)",
                worst, worst_adjoint));
}

// --------------------------------------------------------------------------
// 3. causality and receptive-field bound
// --------------------------------------------------------------------------
void criterion_causality() {
    Rng rng(303);
    bool earlier_ok = true, rf_ok = true;
    int trials = 0;
    while (trials < 50) {
        ModelConfig cfg;
        cfg.N = 3 + static_cast<int64_t>(rng.below(4));
        cfg.L = 4 + 2 * static_cast<int64_t>(rng.below(3));
        cfg.S = 2 + static_cast<int64_t>(rng.below(3));
        cfg.S = std::min(cfg.S, cfg.L);
        cfg.B = 2 + static_cast<int64_t>(rng.below(2));
        cfg.H = 2 + static_cast<int64_t>(rng.below(3));
        cfg.P = 2 + static_cast<int64_t>(rng.below(2));
        cfg.X = 1 + static_cast<int64_t>(rng.below(3));
        cfg.R = 1 + static_cast<int64_t>(rng.below(2));
        cfg.C = 1 + static_cast<int64_t>(rng.below(3));
        cfg.causal = true;
        ModelParams p = init_params<double>(cfg, 400 + static_cast<uint64_t>(trials));
        ReceptiveField rf = receptive_field(cfg);

        const int64_t T = (rf.analytic_frames + 8 - 1) * cfg.S + cfg.L;
        std::vector<double> base = rand_vec(rng, T, 0, 1);
        const int64_t hit = static_cast<int64_t>(rng.below(static_cast<uint64_t>(T)));
        std::vector<double> bumped = base;
        bumped[static_cast<size_t>(hit)] += 0.31;

        Tape t1(false), t2(false);
        Tensor y0 = forward(t1, Tensor::from({1, T}, base), p, cfg);
        Tensor y1 = forward(t2, Tensor::from({1, T}, bumped), p, cfg);
        const int64_t To = y0.shape[1];

        // first frame covering the perturbed sample
        int64_t k_min = hit >= cfg.L ? (hit - cfg.L) / cfg.S + 1 : 0;
        for (int64_t c = 0; c < cfg.C; ++c)
            for (int64_t i = 0; i < k_min * cfg.S; ++i)
                if (y0.vec()[static_cast<size_t>(c * To + i)] != y1.vec()[static_cast<size_t>(c * To + i)])
                    earlier_ok = false;

        // beyond the analytic RF: the last encoder frame containing the
        // sample influences mask frames up to RF-1 ahead, and the decoder
        // smears each frame over L samples
        int64_t K = cfg.frames(T);
        int64_t k_hit_last = std::min(hit / cfg.S, K - 1);
        int64_t first_unaffected = (k_hit_last + rf.analytic_frames - 1) * cfg.S + cfg.L;
        for (int64_t c = 0; c < cfg.C; ++c)
            for (int64_t i = first_unaffected; i < To; ++i)
                if (y0.vec()[static_cast<size_t>(c * To + i)] != y1.vec()[static_cast<size_t>(c * To + i)])
                    rf_ok = false;
        ++trials;
    }
    report(3, earlier_ok && rf_ok,
           std::string("causality: 50 random (config, t) trials; earlier frames ") +
               (earlier_ok ? "bit-identical" : "CHANGED") + ", beyond analytic RF " +
               (rf_ok ? "bit-identical" : "CHANGED"));
}

// --------------------------------------------------------------------------
// 4. metric oracles
// --------------------------------------------------------------------------
void criterion_metrics() {
    Rng rng(404);
    double worst = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const size_t C = 1 + rng.below(5), T = 5 + rng.below(80);
        SeriesSet p(C, std::vector<double>(T)), y(C, std::vector<double>(T));
        for (auto& row : p)
            for (auto& v : row) v = rng.uniform(-20, 300);
        for (auto& row : y)
            for (auto& v : row) v = rng.uniform(0.01, 300);

        // brute-force counterparts
        for (size_t i = 0; i < C; ++i) {
            double acc = 0;
            for (size_t t = 0; t < T; ++t) acc += std::abs(p[i][t] - y[i][t]);
            worst = std::max(worst, std::abs(mae_per_appliance(p, y)[i] - acc / static_cast<double>(T)));
            double rp = 0, ry = 0;
            for (size_t t = 0; t < T; ++t) {
                rp += p[i][t];
                ry += y[i][t];
            }
            worst = std::max(worst, std::abs(sae_per_appliance(p, y)[i] - std::abs(rp - ry) / ry));
        }
        double num = 0, den = 0;
        for (size_t i = 0; i < C; ++i)
            for (size_t t = 0; t < T; ++t) {
                num += std::abs(p[i][t] - y[i][t]);
                den += y[i][t];
            }
        worst = std::max(worst, std::abs(est_acc_total(p, y) - (1.0 - num / (2.0 * den))));
    }

    // zero-predictor laws, exact
    SeriesSet y = {{3, 5, 7}, {1, 2, 4}};
    SeriesSet zero(2, std::vector<double>(3, 0.0));
    bool zero_laws = est_acc_total(zero, y) == 0.5;
    for (double v : sae_per_appliance(zero, y)) zero_laws = zero_laws && v == 1.0;

    report(4, worst < 1e-12 && zero_laws,
           fmt2("metrics vs brute force: max |diff| %.3g (<1e-12); zero-predictor laws exact: ", worst) +
               (zero_laws ? "yes" : "NO"));
}

// --------------------------------------------------------------------------
// 5. loss law
// --------------------------------------------------------------------------
void criterion_loss_law() {
    Rng rng(505);
    Tape t(false);
    double worst = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const int64_t C = 1 + static_cast<int64_t>(rng.below(7));
        const int64_t T = 1 + static_cast<int64_t>(rng.below(80));
        Tensor p = Tensor::from({C, T}, rand_vec(rng, C * T, -3, 3));
        Tensor y = Tensor::from({C, T}, rand_vec(rng, C * T, -3, 3));
        double w = wmse(t, p, y).item();
        double m = mse_mean(t, p, y).item();
        worst = std::max(worst, std::abs(w - static_cast<double>(C) * m) / std::max(1.0, std::abs(w)));
    }
    report(5, worst < 1e-12, fmt2("wmse == C * mse-mean: max relative gap %.3g (<1e-12)", worst));
}

// --------------------------------------------------------------------------
// 6 + 7. desk-scale disaggregation and the loss-artefact regression
// --------------------------------------------------------------------------
struct TrainedEval {
    double est_acc_total = 0;
    std::vector<double> mae;
    std::vector<double> sae;
    bool ok = false;
};

TrainedEval run_training(LossKind loss) {
    auto specs = default_specs(); // Type I 100 W duty 0.3, Type II {0,50,200} W, Type IV 30 W
    const int64_t T = 2048, n_windows = 40;
    auto full = gen_synthetic(specs, T * n_windows, 1.0, 2.0, 7);
    auto [scaled, sc] = minmax_fit_transform(full.mixture);
    std::vector<std::vector<double>> tgt;
    for (auto& series : full.targets) tgt.push_back(sc.apply(series));
    auto windows = window_split(scaled, tgt, sc, T);

    ModelConfig mc;
    mc.N = 16;
    mc.L = 16;
    mc.S = 8;
    mc.B = 4;
    mc.H = 8;
    mc.P = 3;
    mc.X = 3;
    mc.R = 2;
    mc.C = 3;

    TrainConfig tc;
    tc.epochs = 300;
    tc.seed = 7;
    tc.loss = loss;

    auto folds = kfold_split(static_cast<int64_t>(windows.size()), tc.k_folds);
    std::vector<const SignalWindow*> trainw, valw;
    for (int i : folds[0].train) trainw.push_back(&windows[static_cast<size_t>(i)]);
    for (int i : folds[0].validation) valw.push_back(&windows[static_cast<size_t>(i)]);

    ModelParams params = init_params<double>(mc, tc.seed);
    auto outcome = train_fold(mc, std::move(params), trainw, valw, tc, 0, {});

    TrainedEval ev;
    if (outcome.diverged) return ev;
    SeriesSet pred(3), target(3);
    for (auto* w : valw) {
        Tensor mix = Tensor::from({1, static_cast<int64_t>(w->mixture.size())},
                                  std::vector<double>(w->mixture));
        Tape t(false);
        Tensor p = forward(t, mix, outcome.best_params, mc);
        for (int64_t c = 0; c < 3; ++c)
            for (int64_t i = 0; i < p.shape[1]; ++i) {
                pred[static_cast<size_t>(c)].push_back(sc.invert(p.ptr()[c * p.shape[1] + i]));
                target[static_cast<size_t>(c)].push_back(sc.invert(w->targets[static_cast<size_t>(c)][i]));
            }
    }
    ev.est_acc_total = est_acc_total(pred, target);
    ev.mae = mae_per_appliance(pred, target);
    ev.sae = sae_per_appliance(pred, target);
    ev.ok = true;
    return ev;
}

void criteria_training() {
    auto t0 = std::chrono::steady_clock::now();
    TrainedEval wmse_run = run_training(LossKind::Wmse);
    double mins = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;

    // appliance 2 is the Type IV 30 W permanent device, the lowest-power one
    const size_t type4 = 2;
    bool pass6 = wmse_run.ok && wmse_run.est_acc_total >= 0.85 && wmse_run.sae[type4] <= 0.05 &&
                 mins < 30.0;
    report(6, pass6,
           fmt2("desk-scale training: val Est.Acc %.4f (>=0.85), Type IV SAE %.4f (<=0.05), %.1f min (<30)",
                wmse_run.est_acc_total, wmse_run.ok ? wmse_run.sae[type4] : -1, mins));

    TrainedEval mse_run = run_training(LossKind::MseMean);
    double ratio = (wmse_run.ok && mse_run.ok) ? mse_run.mae[type4] / wmse_run.mae[type4] : 0.0;
    bool pass7 = wmse_run.ok && mse_run.ok && ratio >= 2.0;
    report(7, pass7,
           fmt2("loss artefact: lowest-power appliance MAE %.3f W (mse-mean) vs %.3f W (wmse), ratio %.2f (>=2)",
                mse_run.ok ? mse_run.mae[type4] : -1, wmse_run.ok ? wmse_run.mae[type4] : -1, ratio));
}

// --------------------------------------------------------------------------
// 8. model-size sanity
// --------------------------------------------------------------------------
void criterion_model_size() {
    ModelConfig cfg; // N=32 L=48 S=24 B=2 H=3 P=3 X=3 R=2
    cfg.C = 5;
    std::printf("  parameter breakdown for the default configuration (C=5):\n");
    for (auto& [name, count] : param_breakdown(cfg))
        std::printf("    %-34s %8lld\n", name.c_str(), static_cast<long long>(count));
    int64_t total = param_count(cfg);
    std::printf("    %-34s %8lld\n", "total", static_cast<long long>(total));
    std::printf("    note: an externally reported figure of 41088 parameters for this\n"
                "    configuration is not reproduced by any block structure enumerated\n"
                "    here; the discrepancy is reported, not hidden.\n");
    ModelParams p = init_params<double>(cfg, 1);
    bool pass = total < 100000 && p.count() == total;
    report(8, pass, fmt2("parameter count %g (<100000), allocation matches accounting", (double)total));
}

// --------------------------------------------------------------------------
// 9. pipeline exactness
// --------------------------------------------------------------------------
void criterion_pipeline() {
    Rng rng(909);
    // min-max round trip
    std::vector<double> xs = rand_vec(rng, 2000, 0, 4000);
    auto [scaled, sc] = minmax_fit_transform(xs);
    double worst_rt = 0;
    for (size_t i = 0; i < xs.size(); ++i)
        worst_rt = std::max(worst_rt, std::abs(sc.invert(scaled[i]) - xs[i]));

    // resampling hand cases
    ChannelSeries s1;
    s1.samples = {{0, 0.0}, {2, 2.0}};
    bool resample_ok = resample_linear(s1, 1.0).values == std::vector<double>{0, 1, 2};
    ChannelSeries s2;
    s2.samples = {{0, 5.0}, {10, 7.0}, {310, 9.0}};
    auto u2 = resample_linear(s2, 10.0);
    resample_ok = resample_ok && u2.values[0] == 5.0 && u2.values[1] == 7.0 && u2.values[2] == 0.0 &&
                  u2.values[30] == 0.0 && u2.values[31] == 9.0;

    // streaming vs whole-signal, causal checkpoint, T = 10^4
    ModelConfig mc;
    mc.N = 8;
    mc.L = 8;
    mc.S = 4;
    mc.B = 4;
    mc.H = 8;
    mc.P = 3;
    mc.X = 3;
    mc.R = 2;
    mc.C = 3;
    mc.causal = true;
    ModelParams params = init_params<double>(mc, 99);
    std::vector<double> mix = rand_vec(rng, 10000, 0, 1);
    Tape tw(false);
    Tensor whole = forward(tw, Tensor::from({1, 10000}, mix), params, mc);
    StreamingDisaggregator sd(mc, params);
    std::vector<std::vector<double>> streamed;
    const size_t chunk = static_cast<size_t>(receptive_field(mc).analytic_samples);
    for (size_t pos = 0; pos < mix.size(); pos += chunk) {
        size_t n = std::min(chunk, mix.size() - pos);
        sd.push(std::vector<double>(mix.begin() + pos, mix.begin() + pos + n), streamed);
    }
    sd.finish(streamed);
    bool stream_ok = streamed.size() == 3;
    for (int64_t c = 0; c < 3 && stream_ok; ++c) {
        stream_ok = static_cast<int64_t>(streamed[static_cast<size_t>(c)].size()) == whole.shape[1];
        for (int64_t i = 0; stream_ok && i < whole.shape[1]; ++i)
            stream_ok = streamed[static_cast<size_t>(c)][static_cast<size_t>(i)] ==
                        whole.vec()[static_cast<size_t>(c * whole.shape[1] + i)];
    }

    // checkpoint save/load forward bit-identity
    namespace fs = std::filesystem;
    std::string path = (fs::temp_directory_path() / "convnilm_acceptance.ckpt").string();
    save_checkpoint(path, mc, params, {true, 1.0, 2.0});
    ModelConfig mc2;
    ModelParams p2;
    CheckpointScale sc2;
    load_checkpoint(path, mc2, p2, sc2);
    Tensor in = Tensor::from({1, 200}, rand_vec(rng, 200, 0, 1));
    Tape t1(false), t2(false);
    bool ckpt_ok = forward(t1, in, params, mc).vec() == forward(t2, in, p2, mc2).vec();

    bool pass = worst_rt < 1e-12 && resample_ok && stream_ok && ckpt_ok;
    report(9, pass,
           fmt2("pipeline: min-max round trip %.3g (<1e-12); resample hand cases %s; ", worst_rt) +
               (resample_ok ? "ok" : "FAIL") + "; streaming bit-identical " +
               (stream_ok ? "yes" : "NO") + "; checkpoint forward bit-identical " + (ckpt_ok ? "yes" : "NO"));
}

} // namespace

int main() {
    std::printf("acceptance suite\n");
    criterion_gradients();
    criterion_conv_oracle();
    criterion_causality();
    criterion_metrics();
    criterion_loss_law();
    criteria_training();
    criterion_model_size();
    criterion_pipeline();
    std::printf("%s (%d failure%s)\n", g_failures == 0 ? "ALL CRITERIA PASS" : "FAILURES PRESENT",
                g_failures, g_failures == 1 ? "" : "s");
    return g_failures == 0 ? 0 : 1;
}
