#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "convnilm/nn.hpp"
#include "convnilm/rng.hpp"

namespace convnilm {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------
struct ModelConfig {
    int64_t N = 32;  // encoder/decoder filter count
    int64_t L = 48;  // filter length, samples
    int64_t S = 24;  // encoder stride, samples
    int64_t B = 2;   // bottleneck channels
    int64_t H = 3;   // block channels
    int64_t P = 3;   // block kernel size
    int64_t X = 3;   // blocks per repeat (dilations 2^0 .. 2^(X-1))
    int64_t R = 2;   // repeats
    int64_t C = 1;   // appliance count
    bool causal = false;
    bool glu = false;
    double leaky_slope = 0.01;

    void validate() const {
        if (N <= 0 || L <= 0 || S <= 0 || B <= 0 || H <= 0 || P <= 0 || X <= 0 || R <= 0 || C <= 0)
            throw ConfigError("model config: all counts must be positive");
        if (S > L) throw ConfigError("model config: stride S must not exceed filter length L");
        if (!(leaky_slope >= 0.0 && leaky_slope < 1.0))
            throw ConfigError("model config: leaky_slope must lie in [0, 1)");
    }

    // Frame count for a window of T samples.
    int64_t frames(int64_t T) const {
        if (T < L) throw ShapeError("window of " + std::to_string(T) + " samples is shorter than filter length " + std::to_string(L));
        return (T - L) / S + 1;
    }

    NormMode norm_mode() const { return causal ? NormMode::Framewise : NormMode::Global; }
    Padding block_padding() const { return causal ? Padding::CausalLeft : Padding::SameSymmetric; }
};

// ---------------------------------------------------------------------------
// Receptive field. Two readings are reported: the closed-form value with the
// kernel length plugged into 2^l (L-1), and the reach of the dilated stack as
// actually built, where dilations restart at 1 in every repeat.
// ---------------------------------------------------------------------------
struct ReceptiveField {
    int64_t analytic_frames;       // true reach of the separator, in frames
    int64_t analytic_samples;      // end-to-end span: (frames-1)*S + L
    int64_t formula_frames;        // 2^(X*R) * (P-1), kernel-length reading
    int64_t formula_samples_enc;   // 2^(X*R) * (L-1), encoder-filter reading
};

inline ReceptiveField receptive_field(const ModelConfig& cfg) {
    cfg.validate();
    ReceptiveField rf{};
    int64_t pow_x = int64_t(1) << cfg.X;          // 2^X
    rf.analytic_frames = 1 + cfg.R * (cfg.P - 1) * (pow_x - 1);
    rf.analytic_samples = (rf.analytic_frames - 1) * cfg.S + cfg.L;
    int64_t pow_l = int64_t(1) << (cfg.X * cfg.R); // 2^(X*R)
    rf.formula_frames = pow_l * (cfg.P - 1);
    rf.formula_samples_enc = pow_l * (cfg.L - 1);
    return rf;
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------
template <typename S>
struct SeparatorBlockT {
    TensorT<S> pw_w, pw_b;       // 1x1 conv B -> H (2H when gated)
    TensorT<S> n1_g, n1_b;       // norm after first activation
    TensorT<S> dw_w;             // depthwise conv, kernel P
    TensorT<S> dw_gate_w;        // parallel depthwise gate (GLU only)
    TensorT<S> n2_g, n2_b;
    TensorT<S> res_w, res_b;     // 1x1 conv H -> B, residual
    TensorT<S> skip_w, skip_b;   // 1x1 conv H -> B, skip
};

template <typename S>
struct ModelParamsT {
    TensorT<S> enc_w, enc_b;           // [N,1,L], [N]
    TensorT<S> norm0_g, norm0_b;       // [N,1]
    TensorT<S> bottleneck_w, bottleneck_b; // [B,N,1], [B]
    std::vector<SeparatorBlockT<S>> blocks; // R*X in execution order
    TensorT<S> mask_w, mask_b;         // [C*N,B,1], [C*N]
    TensorT<S> dec_v;                  // [N,L]

    std::vector<std::pair<std::string, TensorT<S>*>> entries() {
        std::vector<std::pair<std::string, TensorT<S>*>> e;
        e.emplace_back("encoder.w", &enc_w);
        e.emplace_back("encoder.b", &enc_b);
        e.emplace_back("sep.norm0.gain", &norm0_g);
        e.emplace_back("sep.norm0.bias", &norm0_b);
        e.emplace_back("sep.bottleneck.w", &bottleneck_w);
        e.emplace_back("sep.bottleneck.b", &bottleneck_b);
        for (size_t i = 0; i < blocks.size(); ++i) {
            auto& bl = blocks[i];
            std::string p = "sep.block" + std::to_string(i) + ".";
            e.emplace_back(p + "pw.w", &bl.pw_w);
            e.emplace_back(p + "pw.b", &bl.pw_b);
            e.emplace_back(p + "norm1.gain", &bl.n1_g);
            e.emplace_back(p + "norm1.bias", &bl.n1_b);
            e.emplace_back(p + "dw.w", &bl.dw_w);
            if (bl.dw_gate_w.data) e.emplace_back(p + "dw_gate.w", &bl.dw_gate_w);
            e.emplace_back(p + "norm2.gain", &bl.n2_g);
            e.emplace_back(p + "norm2.bias", &bl.n2_b);
            e.emplace_back(p + "res.w", &bl.res_w);
            e.emplace_back(p + "res.b", &bl.res_b);
            e.emplace_back(p + "skip.w", &bl.skip_w);
            e.emplace_back(p + "skip.b", &bl.skip_b);
        }
        e.emplace_back("sep.mask.w", &mask_w);
        e.emplace_back("sep.mask.b", &mask_b);
        e.emplace_back("decoder.v", &dec_v);
        return e;
    }

    std::vector<std::pair<std::string, const TensorT<S>*>> entries() const {
        auto& self = const_cast<ModelParamsT&>(*this);
        std::vector<std::pair<std::string, const TensorT<S>*>> e;
        for (auto& [name, t] : self.entries()) e.emplace_back(name, t);
        return e;
    }

    int64_t count() const {
        int64_t n = 0;
        for (auto& [name, t] : entries()) n += t->numel();
        return n;
    }

    void watch_all(TapeT<S>& tape) {
        for (auto& [name, t] : entries()) tape.watch(*t);
    }

    ModelParamsT clone() const {
        ModelParamsT out = *this;
        auto src = entries();
        auto dst = out.entries();
        for (size_t i = 0; i < src.size(); ++i) *dst[i].second = src[i].second->clone();
        return out;
    }

    bool all_finite() const {
        for (auto& [name, t] : entries())
            for (int64_t i = 0; i < t->numel(); ++i)
                if (!std::isfinite(static_cast<double>(t->ptr()[i]))) return false;
        return true;
    }
};

namespace detail {

template <typename S>
TensorT<S> init_uniform(Rng& rng, Shape shape, int64_t fan_in) {
    double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
    TensorT<S> t = TensorT<S>::zeros(shape, true);
    for (int64_t i = 0; i < t.numel(); ++i) t.ptr()[i] = static_cast<S>(rng.uniform(-bound, bound));
    return t;
}

template <typename S>
TensorT<S> init_const(Shape shape, double v) {
    return TensorT<S>::full(std::move(shape), static_cast<S>(v), true);
}

} // namespace detail

// Conv weights uniform +-sqrt(1/fan_in); biases start at zero so no layer
// carries a random DC offset, which the large optimizer eps is slow to train
// away. Norm gains start at 1.
template <typename S>
ModelParamsT<S> init_params(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    ModelParamsT<S> p;
    const int64_t H_out = cfg.glu ? 2 * cfg.H : cfg.H;

    p.enc_w = detail::init_uniform<S>(rng, {cfg.N, 1, cfg.L}, cfg.L);
    p.enc_b = detail::init_const<S>({cfg.N}, 0.0);
    p.norm0_g = detail::init_const<S>({cfg.N, 1}, 1.0);
    p.norm0_b = detail::init_const<S>({cfg.N, 1}, 0.0);
    p.bottleneck_w = detail::init_uniform<S>(rng, {cfg.B, cfg.N, 1}, cfg.N);
    p.bottleneck_b = detail::init_const<S>({cfg.B}, 0.0);
    for (int64_t i = 0; i < cfg.R * cfg.X; ++i) {
        SeparatorBlockT<S> bl;
        bl.pw_w = detail::init_uniform<S>(rng, {H_out, cfg.B, 1}, cfg.B);
        bl.pw_b = detail::init_const<S>({H_out}, 0.0);
        bl.n1_g = detail::init_const<S>({cfg.H, 1}, 1.0);
        bl.n1_b = detail::init_const<S>({cfg.H, 1}, 0.0);
        bl.dw_w = detail::init_uniform<S>(rng, {cfg.H, cfg.P}, cfg.P);
        if (cfg.glu) bl.dw_gate_w = detail::init_uniform<S>(rng, {cfg.H, cfg.P}, cfg.P);
        bl.n2_g = detail::init_const<S>({cfg.H, 1}, 1.0);
        bl.n2_b = detail::init_const<S>({cfg.H, 1}, 0.0);
        bl.res_w = detail::init_uniform<S>(rng, {cfg.B, cfg.H, 1}, cfg.H);
        bl.res_b = detail::init_const<S>({cfg.B}, 0.0);
        bl.skip_w = detail::init_uniform<S>(rng, {cfg.B, cfg.H, 1}, cfg.H);
        bl.skip_b = detail::init_const<S>({cfg.B}, 0.0);
        p.blocks.push_back(std::move(bl));
    }
    p.mask_w = detail::init_uniform<S>(rng, {cfg.C * cfg.N, cfg.B, 1}, cfg.B);
    p.mask_b = detail::init_const<S>({cfg.C * cfg.N}, 0.0);
    p.dec_v = detail::init_uniform<S>(rng, {cfg.N, cfg.L}, cfg.N);
    return p;
}

// Per-layer parameter accounting.
inline std::vector<std::pair<std::string, int64_t>> param_breakdown(const ModelConfig& cfg) {
    cfg.validate();
    std::vector<std::pair<std::string, int64_t>> b;
    const int64_t H_out = cfg.glu ? 2 * cfg.H : cfg.H;
    b.emplace_back("encoder (N*L + N)", cfg.N * cfg.L + cfg.N);
    b.emplace_back("sep.norm0 (2N)", 2 * cfg.N);
    b.emplace_back("sep.bottleneck (B*N + B)", cfg.B * cfg.N + cfg.B);
    int64_t per_block = H_out * cfg.B + H_out          // pointwise
                      + 2 * cfg.H                      // norm1
                      + cfg.H * cfg.P * (cfg.glu ? 2 : 1) // depthwise (+ gate), no bias
                      + 2 * cfg.H                      // norm2
                      + 2 * (cfg.B * cfg.H + cfg.B);   // residual + skip
    b.emplace_back("sep.blocks (" + std::to_string(cfg.R * cfg.X) + " x " + std::to_string(per_block) + ")",
                   cfg.R * cfg.X * per_block);
    b.emplace_back("sep.mask (C*N*B + C*N)", cfg.C * cfg.N * cfg.B + cfg.C * cfg.N);
    b.emplace_back("decoder (N*L)", cfg.N * cfg.L);
    return b;
}

inline int64_t param_count(const ModelConfig& cfg) {
    int64_t n = 0;
    for (auto& [name, c] : param_breakdown(cfg)) n += c;
    return n;
}

// ---------------------------------------------------------------------------
// Forward pipeline
// ---------------------------------------------------------------------------

// Mixture [1, T] -> latent Z [N, K]; frames of length L at stride S through
// the learned filter bank, then the leaky-ReLU nonlinearity.
template <typename S>
TensorT<S> encode(TapeT<S>& tape, const TensorT<S>& mixture,
                  ModelParamsT<S>& params, const ModelConfig& cfg) {
    if (mixture.rank() != 2 || mixture.shape[0] != 1)
        throw ShapeError("encode: mixture must be [1, T]");
    cfg.frames(mixture.shape[1]); // validates T >= L
    Conv1dSpec sp;
    sp.in_channels = 1;
    sp.out_channels = cfg.N;
    sp.kernel_size = cfg.L;
    sp.stride = cfg.S;
    sp.padding = Padding::None;
    TensorT<S> z = conv1d(tape, mixture, sp, params.enc_w, &params.enc_b);
    return leaky_relu(tape, z, cfg.leaky_slope);
}

namespace detail {

template <typename S>
TensorT<S> pointwise(TapeT<S>& tape, const TensorT<S>& x, int64_t cin, int64_t cout,
                     const TensorT<S>& w, const TensorT<S>& b) {
    Conv1dSpec sp;
    sp.in_channels = cin;
    sp.out_channels = cout;
    sp.kernel_size = 1;
    return conv1d(tape, x, sp, w, &b);
}

} // namespace detail

// Latent Z [N, K] -> masks [C, N, K], one non-negative mask per appliance.
// Mask rows are deliberately not constrained to sum to one across appliances.
template <typename S>
TensorT<S> separate(TapeT<S>& tape, const TensorT<S>& z,
                    ModelParamsT<S>& params, const ModelConfig& cfg) {
    if (z.rank() != 2 || z.shape[0] != cfg.N) throw ShapeError("separate: Z must be [N, K]");
    const NormMode nm = cfg.norm_mode();
    const double slope = cfg.leaky_slope;

    TensorT<S> y = channel_norm(tape, z, nm, params.norm0_g, params.norm0_b);
    y = detail::pointwise(tape, y, cfg.N, cfg.B, params.bottleneck_w, params.bottleneck_b);

    TensorT<S> skip_sum;
    size_t bi = 0;
    for (int64_t r = 0; r < cfg.R; ++r) {
        for (int64_t x = 0; x < cfg.X; ++x, ++bi) {
            auto& bl = params.blocks[bi];
            const int64_t dil = int64_t(1) << x;

            TensorT<S> h = detail::pointwise(tape, y, cfg.B, cfg.glu ? 2 * cfg.H : cfg.H,
                                             bl.pw_w, bl.pw_b);
            if (cfg.glu) {
                TensorT<S> lin = slice0(tape, h, 0, cfg.H);
                TensorT<S> gate = slice0(tape, h, cfg.H, cfg.H);
                h = glu(tape, lin, gate);
            } else {
                h = leaky_relu(tape, h, slope);
            }
            h = channel_norm(tape, h, nm, bl.n1_g, bl.n1_b);

            Conv1dSpec dw;
            dw.in_channels = cfg.H;
            dw.out_channels = cfg.H;
            dw.kernel_size = cfg.P;
            dw.dilation = dil;
            dw.padding = cfg.block_padding();
            dw.depthwise = true;
            dw.bias = false;
            if (cfg.glu) {
                // gate through a parallel depthwise convolution
                TensorT<S> lin = conv1d(tape, h, dw, bl.dw_w, nullptr);
                TensorT<S> gate = conv1d(tape, h, dw, bl.dw_gate_w, nullptr);
                h = glu(tape, lin, gate);
            } else {
                h = conv1d(tape, h, dw, bl.dw_w, nullptr);
                h = leaky_relu(tape, h, slope);
            }
            h = channel_norm(tape, h, nm, bl.n2_g, bl.n2_b);

            TensorT<S> res = detail::pointwise(tape, h, cfg.H, cfg.B, bl.res_w, bl.res_b);
            TensorT<S> skip = detail::pointwise(tape, h, cfg.H, cfg.B, bl.skip_w, bl.skip_b);
            y = add(tape, y, res);
            skip_sum = skip_sum.data ? add(tape, skip_sum, skip) : skip;
        }
    }

    TensorT<S> s = leaky_relu(tape, skip_sum, slope);
    TensorT<S> m = detail::pointwise(tape, s, cfg.B, cfg.C * cfg.N, params.mask_w, params.mask_b);
    m = relu(tape, m);
    return reshape(tape, m, {cfg.C, cfg.N, z.shape[1]});
}

// Per-appliance latent selection: S[i] = Z (.) masks[i].
template <typename S>
TensorT<S> apply_masks(TapeT<S>& tape, const TensorT<S>& z, const TensorT<S>& masks) {
    if (z.rank() != 2 || masks.rank() != 3 || masks.shape[1] != z.shape[0] || masks.shape[2] != z.shape[1])
        throw ShapeError("apply_masks: expected Z [N,K] and masks [C,N,K]");
    return mul(tape, masks, z);
}

// Masked latents [C, N, K] -> per-appliance waveforms [C, (K-1)*S + L] through
// the shared decoder filter bank.
template <typename S>
TensorT<S> decode(TapeT<S>& tape, const TensorT<S>& sources,
                  ModelParamsT<S>& params, const ModelConfig& cfg) {
    if (sources.rank() != 3 || sources.shape[1] != cfg.N)
        throw ShapeError("decode: expected [C, N, K]");
    std::vector<TensorT<S>> outs;
    outs.reserve(static_cast<size_t>(sources.shape[0]));
    for (int64_t i = 0; i < sources.shape[0]; ++i) {
        TensorT<S> si = select0(tape, sources, i);
        outs.push_back(transposed_conv1d(tape, si, params.dec_v, cfg.S));
    }
    return concat0(tape, outs);
}

// Full pass: encode -> separate -> apply_masks -> decode. Output is [C, T']
// with T' = (K-1)*S + L (equal to T whenever T-L is a multiple of S).
// The decoder is linear; predictions are reported as-is, never clamped.
template <typename S>
TensorT<S> forward(TapeT<S>& tape, const TensorT<S>& mixture,
                   ModelParamsT<S>& params, const ModelConfig& cfg) {
    TensorT<S> z = encode(tape, mixture, params, cfg);
    TensorT<S> m = separate(tape, z, params, cfg);
    TensorT<S> s = apply_masks(tape, z, m);
    return decode(tape, s, params, cfg);
}

// ---------------------------------------------------------------------------
// Streaming inference for causal models.
//
// The causal variant's reach is bounded: masks at frame k depend on encoder
// frames (k - RF + 1 .. k) only, and every layer is frame-local or
// zero-padded causal. Chunks are replayed with RF-1 frames of left context,
// and the decoder's overlap-add tail (L - S samples) is carried, so the
// emitted stream is bit-identical to whole-signal inference.
// ---------------------------------------------------------------------------
template <typename S>
class StreamingDisaggregatorT {
public:
    StreamingDisaggregatorT(const ModelConfig& cfg, ModelParamsT<S>& params)
        : cfg_(cfg), params_(params), rf_(receptive_field(cfg)) {
        if (!cfg.causal) throw ConfigError("streaming requires a causal model");
    }

    // Feeds more mixture samples; appends any completed output samples
    // (one vector per appliance) to `out`.
    void push(const std::vector<S>& samples, std::vector<std::vector<S>>& out) {
        buf_.insert(buf_.end(), samples.begin(), samples.end());
        emit(out);
    }

    // Number of output samples emitted so far.
    int64_t emitted() const { return emitted_; }

    // End of input: the pending overlap-add tail (L - S samples) is final
    // once no further frames can arrive. Total output length then matches
    // whole-signal inference, (K-1)*S + L.
    void finish(std::vector<std::vector<S>>& out) {
        if (tail_.empty()) return;
        if (out.empty()) out.resize(static_cast<size_t>(cfg_.C));
        for (int64_t c = 0; c < cfg_.C; ++c) {
            auto& t = tail_[static_cast<size_t>(c)];
            out[static_cast<size_t>(c)].insert(out[static_cast<size_t>(c)].end(), t.begin(), t.end());
            t.clear();
        }
        emitted_ += cfg_.L - cfg_.S;
    }

private:
    void emit(std::vector<std::vector<S>>& out) {
        // Frames available over the absolute signal seen so far.
        int64_t total = static_cast<int64_t>(buf_.size()) + dropped_;
        if (total < cfg_.L) return;
        int64_t k_avail = (total - cfg_.L) / cfg_.S;     // last complete frame
        if (k_avail < k_next_) return;

        // Run the separator over frames [ctx_start, k_avail]; the first
        // k_next_ - ctx_start frames are context only.
        int64_t ctx_start = std::max<int64_t>(0, k_next_ - (rf_.analytic_frames - 1));
        int64_t first_sample = ctx_start * cfg_.S;
        int64_t last_sample = k_avail * cfg_.S + cfg_.L; // exclusive
        std::vector<S> seg(buf_.begin() + (first_sample - dropped_),
                           buf_.begin() + (last_sample - dropped_));
        const int64_t seg_len = static_cast<int64_t>(seg.size());
        TensorT<S> mix = TensorT<S>::from({1, seg_len}, std::move(seg));

        TapeT<S> tape(false);
        TensorT<S> z = encode(tape, mix, params_, cfg_);
        TensorT<S> m = separate(tape, z, params_, cfg_);
        TensorT<S> s = apply_masks(tape, z, m);

        // Overlap-add only the new frames into the pending tail buffer.
        const int64_t K_seg = z.shape[1];
        const int64_t new0 = k_next_ - ctx_start;        // first new frame, segment-relative
        const int64_t n_new = K_seg - new0;
        const int64_t span = (n_new - 1) * cfg_.S + cfg_.L;
        if (out.empty()) out.resize(static_cast<size_t>(cfg_.C));
        if (tail_.empty()) tail_.assign(static_cast<size_t>(cfg_.C), {});

        for (int64_t c = 0; c < cfg_.C; ++c) {
            std::vector<S> acc(static_cast<size_t>(span), S(0));
            // copy carried tail (samples already partially accumulated)
            for (size_t i = 0; i < tail_[static_cast<size_t>(c)].size(); ++i)
                acc[i] = tail_[static_cast<size_t>(c)][i];
            // add contributions of the new frames, frame-ascending
            const S* sc = s.ptr() + c * cfg_.N * K_seg;
            for (int64_t k = 0; k < n_new; ++k)
                for (int64_t n = 0; n < cfg_.N; ++n) {
                    S a = sc[n * K_seg + (new0 + k)];
                    if (a == S(0)) continue;
                    const S* vn = params_.dec_v.ptr() + n * cfg_.L;
                    S* o = acc.data() + k * cfg_.S;
                    for (int64_t l = 0; l < cfg_.L; ++l) o[l] += a * vn[l];
                }
            // samples [0, n_new*S) are final; the rest is the next tail
            int64_t done = n_new * cfg_.S;
            out[static_cast<size_t>(c)].insert(out[static_cast<size_t>(c)].end(),
                                               acc.begin(), acc.begin() + done);
            tail_[static_cast<size_t>(c)].assign(acc.begin() + done, acc.end());
        }
        emitted_ += n_new * cfg_.S;
        k_next_ = k_avail + 1;

        // Drop input samples no longer needed for any future context.
        int64_t keep_from = std::max<int64_t>(0, (k_next_ - (rf_.analytic_frames - 1)) * cfg_.S);
        if (keep_from > dropped_) {
            buf_.erase(buf_.begin(), buf_.begin() + (keep_from - dropped_));
            dropped_ = keep_from;
        }
    }

    ModelConfig cfg_;
    ModelParamsT<S>& params_;
    ReceptiveField rf_;
    std::vector<S> buf_;
    std::vector<std::vector<S>> tail_;
    int64_t dropped_ = 0;   // absolute index of buf_[0]
    int64_t k_next_ = 0;    // next frame whose output has not been emitted
    int64_t emitted_ = 0;
};

using ModelParams = ModelParamsT<double>;
using StreamingDisaggregator = StreamingDisaggregatorT<double>;

} // namespace convnilm
