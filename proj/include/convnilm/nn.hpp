#pragma once

#include <cmath>
#include <cstdint>

#include "convnilm/conv.hpp"
#include "convnilm/ops.hpp"
#include "convnilm/tensor.hpp"

namespace convnilm {

namespace detail {

template <typename S>
void note_kinks(TapeT<S>& tape, const TensorT<S>& x) {
    double m = tape.kink_min;
    for (int64_t i = 0; i < x.numel(); ++i)
        m = std::min(m, std::abs(static_cast<double>(x.ptr()[i])));
    tape.kink_min = m;
}

} // namespace detail

template <typename S>
TensorT<S> leaky_relu(TapeT<S>& tape, const TensorT<S>& x, double slope) {
    if (!(slope >= 0.0 && slope < 1.0)) throw ConfigError("leaky_relu slope must lie in [0, 1)");
    detail::note_kinks(tape, x);
    TensorT<S> out = TensorT<S>::zeros(x.shape);
    const S a = static_cast<S>(slope);
    for (int64_t i = 0; i < x.numel(); ++i) {
        S v = x.ptr()[i];
        out.ptr()[i] = v >= S(0) ? v : a * v;
    }
    int64_t nx = tape.input_node(x);
    if (nx >= 0) {
        auto xd = x.data;
        int64_t node = tape.record(out.shape, {nx}, [nx, xd, a](TapeT<S>& tp, const std::vector<S>& g) {
            auto& gb = tp.grad_buf(nx);
            for (size_t i = 0; i < g.size(); ++i)
                gb[i] += (*xd)[i] >= S(0) ? g[i] : a * g[i];
        });
        tape.attach(out, node);
    }
    return out;
}

template <typename S>
TensorT<S> relu(TapeT<S>& tape, const TensorT<S>& x) {
    return leaky_relu(tape, x, 0.0);
}

// PReLU with a learnable slope, scalar or broadcastable to x.
template <typename S>
TensorT<S> prelu(TapeT<S>& tape, const TensorT<S>& x, const TensorT<S>& slope) {
    detail::note_kinks(tape, x);
    // max(x,0) + slope*min(x,0), assembled from primitives so both gradients flow
    TensorT<S> pos = relu(tape, x);
    TensorT<S> negpart = sub(tape, x, pos); // min(x, 0)
    return add(tape, pos, mul(tape, negpart, slope));
}

enum class Act { Relu, LeakyRelu, Sigmoid, Prelu };

template <typename S>
TensorT<S> activation(TapeT<S>& tape, Act kind, const TensorT<S>& x, double slope = 0.01) {
    switch (kind) {
        case Act::Relu: return relu(tape, x);
        case Act::LeakyRelu: return leaky_relu(tape, x, slope);
        case Act::Sigmoid: return sigmoid(tape, x);
        case Act::Prelu: return prelu(tape, x, TensorT<S>::scalar(static_cast<S>(slope)));
    }
    throw ConfigError("unknown activation kind");
}

// Gated linear unit: a * sigmoid(b).
template <typename S>
TensorT<S> glu(TapeT<S>& tape, const TensorT<S>& a, const TensorT<S>& b) {
    if (a.shape != b.shape) throw ShapeError("glu: operands must share a shape");
    return mul(tape, a, sigmoid(tape, b));
}

enum class NormMode { Global, Framewise, Cumulative };

// Channel normalization over x[C, T] with per-channel gain/bias of shape [C, 1].
//   Global:     statistics over all (c, t).
//   Framewise:  statistics over channels at each position t (zero temporal reach).
//   Cumulative: statistics over all channels at positions <= t.
// Built from primitives, so gradients come from the tape.
template <typename S>
TensorT<S> channel_norm(TapeT<S>& tape, const TensorT<S>& x, NormMode mode,
                        const TensorT<S>& gain, const TensorT<S>& bias) {
    if (x.rank() != 2) throw ShapeError("channel_norm: input must be [C, T]");
    const int64_t C = x.shape[0], T = x.shape[1];
    if (gain.shape != Shape{C, 1} || bias.shape != Shape{C, 1})
        throw ShapeError("channel_norm: gain/bias must be [C, 1]");
    const double eps = 1e-8;

    TensorT<S> normed;
    switch (mode) {
        case NormMode::Global: {
            TensorT<S> mu = mean_all(tape, x);
            TensorT<S> xc = sub(tape, x, mu);
            TensorT<S> var = mean_all(tape, mul(tape, xc, xc));
            normed = div(tape, xc, sqrt_op(tape, add(tape, var, eps)));
            break;
        }
        case NormMode::Framewise: {
            TensorT<S> mu = mean_over(tape, x, {0});            // [T]
            TensorT<S> xc = sub(tape, x, mu);
            TensorT<S> var = mean_over(tape, mul(tape, xc, xc), {0});
            normed = div(tape, xc, sqrt_op(tape, add(tape, var, eps)));
            break;
        }
        case NormMode::Cumulative: {
            std::vector<S> counts(static_cast<size_t>(T));
            for (int64_t t = 0; t < T; ++t) counts[static_cast<size_t>(t)] = static_cast<S>(C * (t + 1));
            TensorT<S> cnt = TensorT<S>::from({T}, counts);
            TensorT<S> sum_c = sum_over(tape, x, {0});           // [T]
            TensorT<S> sumsq_c = sum_over(tape, mul(tape, x, x), {0});
            TensorT<S> mu = div(tape, cumsum_last(tape, sum_c), cnt);
            TensorT<S> ex2 = div(tape, cumsum_last(tape, sumsq_c), cnt);
            TensorT<S> var = sub(tape, ex2, mul(tape, mu, mu));
            TensorT<S> xc = sub(tape, x, mu);
            normed = div(tape, xc, sqrt_op(tape, add(tape, var, eps)));
            break;
        }
    }
    return add(tape, mul(tape, normed, gain), bias);
}

} // namespace convnilm
