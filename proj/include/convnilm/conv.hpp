#pragma once

#include <cstdint>
#include <vector>

#include "convnilm/ops.hpp"
#include "convnilm/tensor.hpp"

namespace convnilm {

enum class Padding { None, SameSymmetric, CausalLeft };

struct Conv1dSpec {
    int64_t in_channels = 1;
    int64_t out_channels = 1;
    int64_t kernel_size = 1;
    int64_t stride = 1;
    int64_t dilation = 1;
    Padding padding = Padding::None;
    bool depthwise = false;
    bool bias = true;

    int64_t span() const { return dilation * (kernel_size - 1) + 1; }

    int64_t pad_left() const {
        switch (padding) {
            case Padding::None: return 0;
            case Padding::CausalLeft: return dilation * (kernel_size - 1);
            case Padding::SameSymmetric: return dilation * (kernel_size - 1) / 2;
        }
        return 0;
    }

    int64_t pad_right() const {
        switch (padding) {
            case Padding::None: return 0;
            case Padding::CausalLeft: return 0;
            case Padding::SameSymmetric: return dilation * (kernel_size - 1) - pad_left();
        }
        return 0;
    }

    int64_t out_len(int64_t T) const {
        int64_t padded = T + pad_left() + pad_right();
        if (padded < span())
            throw ShapeError("conv1d: kernel span " + std::to_string(span()) +
                             " exceeds padded length " + std::to_string(padded));
        return (padded - span()) / stride + 1;
    }

    void validate() const {
        if (in_channels <= 0 || out_channels <= 0 || kernel_size <= 0 || stride < 1 || dilation < 1)
            throw ShapeError("conv1d: invalid spec");
        if (depthwise && in_channels != out_channels)
            throw ShapeError("conv1d: depthwise requires in_channels == out_channels");
    }
};

namespace detail {

// Shared by forward and the weight/input gradient kernels. Iterates output
// positions in ascending order so results are bit-stable across paths.
template <typename S>
void conv1d_forward_kernel(const S* x, int64_t T, const Conv1dSpec& sp,
                           const S* w, const S* b, S* y, int64_t To) {
    const int64_t K = sp.kernel_size, D = sp.dilation, St = sp.stride, pl = sp.pad_left();
    if (sp.depthwise) {
        for (int64_t c = 0; c < sp.out_channels; ++c) {
            const S* xc = x + c * T;
            const S* wc = w + c * K;
            S* yc = y + c * To;
            for (int64_t t = 0; t < To; ++t) {
                int64_t base = t * St - pl;
                S acc = b ? b[c] : S(0);
                for (int64_t k = 0; k < K; ++k) {
                    int64_t p = base + k * D;
                    if (p >= 0 && p < T) acc += wc[k] * xc[p];
                }
                yc[t] = acc;
            }
        }
    } else {
        for (int64_t co = 0; co < sp.out_channels; ++co) {
            S* yc = y + co * To;
            for (int64_t t = 0; t < To; ++t) {
                int64_t base = t * St - pl;
                S acc = b ? b[co] : S(0);
                const S* wc = w + co * sp.in_channels * K;
                for (int64_t ci = 0; ci < sp.in_channels; ++ci) {
                    const S* xc = x + ci * T;
                    const S* wk = wc + ci * K;
                    for (int64_t k = 0; k < K; ++k) {
                        int64_t p = base + k * D;
                        if (p >= 0 && p < T) acc += wk[k] * xc[p];
                    }
                }
                yc[t] = acc;
            }
        }
    }
}

} // namespace detail

// 1-D convolution over [Cin, T] producing [Cout, T'].
// Weight layout: [Cout, Cin, K], or [C, K] for depthwise. Bias: [Cout].
template <typename S>
TensorT<S> conv1d(TapeT<S>& tape, const TensorT<S>& input, const Conv1dSpec& sp,
                  const TensorT<S>& weight, const TensorT<S>* bias = nullptr) {
    sp.validate();
    if (input.rank() != 2 || input.shape[0] != sp.in_channels)
        throw ShapeError("conv1d: input must be [" + std::to_string(sp.in_channels) + ", T], got " + shape_str(input.shape));
    Shape expect_w = sp.depthwise ? Shape{sp.out_channels, sp.kernel_size}
                                  : Shape{sp.out_channels, sp.in_channels, sp.kernel_size};
    if (weight.shape != expect_w)
        throw ShapeError("conv1d: weight shape " + shape_str(weight.shape) + " expected " + shape_str(expect_w));
    if (sp.bias != (bias != nullptr))
        throw ShapeError("conv1d: bias presence does not match spec");
    if (bias && bias->shape != Shape{sp.out_channels})
        throw ShapeError("conv1d: bias shape " + shape_str(bias->shape));

    const int64_t T = input.shape[1];
    const int64_t To = sp.out_len(T);
    TensorT<S> out = TensorT<S>::zeros({sp.out_channels, To});
    detail::conv1d_forward_kernel(input.ptr(), T, sp, weight.ptr(), bias ? bias->ptr() : nullptr,
                                  out.ptr(), To);
    detail::check_finite(out.vec(), "conv1d");

    int64_t nx = tape.input_node(input);
    int64_t nw = tape.input_node(weight);
    int64_t nb = bias ? tape.input_node(*bias) : -1;
    if (nx >= 0 || nw >= 0 || nb >= 0) {
        auto xd = input.data;
        auto wd = weight.data;
        int64_t node = tape.record(out.shape, {nx, nw, nb},
            [sp, T, To, nx, nw, nb, xd, wd](TapeT<S>& tp, const std::vector<S>& g) {
                const int64_t K = sp.kernel_size, D = sp.dilation, St = sp.stride, pl = sp.pad_left();
                const S* w = wd->data();
                const S* x = xd->data();
                if (nx >= 0) {
                    auto& gx = tp.grad_buf(nx);
                    for (int64_t co = 0; co < sp.out_channels; ++co) {
                        for (int64_t t = 0; t < To; ++t) {
                            S go = g[static_cast<size_t>(co * To + t)];
                            if (go == S(0)) continue;
                            int64_t base = t * St - pl;
                            if (sp.depthwise) {
                                const S* wc = w + co * K;
                                for (int64_t k = 0; k < K; ++k) {
                                    int64_t p = base + k * D;
                                    if (p >= 0 && p < T) gx[static_cast<size_t>(co * T + p)] += go * wc[k];
                                }
                            } else {
                                const S* wc = w + co * sp.in_channels * K;
                                for (int64_t ci = 0; ci < sp.in_channels; ++ci)
                                    for (int64_t k = 0; k < K; ++k) {
                                        int64_t p = base + k * D;
                                        if (p >= 0 && p < T)
                                            gx[static_cast<size_t>(ci * T + p)] += go * wc[ci * K + k];
                                    }
                            }
                        }
                    }
                }
                if (nw >= 0) {
                    auto& gw = tp.grad_buf(nw);
                    for (int64_t co = 0; co < sp.out_channels; ++co) {
                        for (int64_t t = 0; t < To; ++t) {
                            S go = g[static_cast<size_t>(co * To + t)];
                            if (go == S(0)) continue;
                            int64_t base = t * St - pl;
                            if (sp.depthwise) {
                                for (int64_t k = 0; k < K; ++k) {
                                    int64_t p = base + k * D;
                                    if (p >= 0 && p < T) gw[static_cast<size_t>(co * K + k)] += go * x[co * T + p];
                                }
                            } else {
                                for (int64_t ci = 0; ci < sp.in_channels; ++ci)
                                    for (int64_t k = 0; k < K; ++k) {
                                        int64_t p = base + k * D;
                                        if (p >= 0 && p < T)
                                            gw[static_cast<size_t>((co * sp.in_channels + ci) * K + k)] += go * x[ci * T + p];
                                    }
                            }
                        }
                    }
                }
                if (nb >= 0) {
                    auto& gb = tp.grad_buf(nb);
                    for (int64_t co = 0; co < sp.out_channels; ++co) {
                        S acc = S(0);
                        for (int64_t t = 0; t < To; ++t) acc += g[static_cast<size_t>(co * To + t)];
                        gb[static_cast<size_t>(co)] += acc;
                    }
                }
            });
        tape.attach(out, node);
    }
    return out;
}

template <typename S>
TensorT<S> conv1d(TapeT<S>& tape, const TensorT<S>& input, const Conv1dSpec& sp,
                  const TensorT<S>& weight, std::nullptr_t) {
    return conv1d(tape, input, sp, weight, static_cast<const TensorT<S>*>(nullptr));
}

namespace detail {

// Overlap-add synthesis: frames ascending, then filters, then taps, so a
// streaming decoder that replays frame ranges accumulates bit-identically.
template <typename S>
void overlap_add_kernel(const S* in, int64_t N, int64_t Kf, const S* v, int64_t L,
                        int64_t stride, S* out) {
    for (int64_t k = 0; k < Kf; ++k)
        for (int64_t n = 0; n < N; ++n) {
            S a = in[n * Kf + k];
            if (a == S(0)) continue;
            const S* vn = v + n * L;
            S* o = out + k * stride;
            for (int64_t l = 0; l < L; ++l) o[l] += a * vn[l];
        }
}

} // namespace detail

// Transposed 1-D convolution: [N, K] frames against filters V[N, L] with the
// given stride, overlap-added into [1, (K-1)*stride + L]. Exact adjoint of a
// stride-S, no-padding conv1d with the same filters.
template <typename S>
TensorT<S> transposed_conv1d(TapeT<S>& tape, const TensorT<S>& input,
                             const TensorT<S>& filters, int64_t stride) {
    if (input.rank() != 2) throw ShapeError("transposed_conv1d: input must be [N, K]");
    if (filters.rank() != 2 || filters.shape[0] != input.shape[0])
        throw ShapeError("transposed_conv1d: filters must be [N, L], got " + shape_str(filters.shape));
    if (stride < 1) throw ShapeError("transposed_conv1d: stride must be >= 1");

    const int64_t N = input.shape[0], Kf = input.shape[1], L = filters.shape[1];
    const int64_t T = (Kf - 1) * stride + L;
    TensorT<S> out = TensorT<S>::zeros({1, T});
    detail::overlap_add_kernel(input.ptr(), N, Kf, filters.ptr(), L, stride, out.ptr());
    detail::check_finite(out.vec(), "transposed_conv1d");

    int64_t nx = tape.input_node(input);
    int64_t nv = tape.input_node(filters);
    if (nx >= 0 || nv >= 0) {
        auto xd = input.data;
        auto vd = filters.data;
        int64_t node = tape.record(out.shape, {nx, nv},
            [N, Kf, L, stride, nx, nv, xd, vd](TapeT<S>& tp, const std::vector<S>& g) {
                if (nx >= 0) {
                    auto& gx = tp.grad_buf(nx);
                    const S* v = vd->data();
                    for (int64_t k = 0; k < Kf; ++k)
                        for (int64_t n = 0; n < N; ++n) {
                            S acc = S(0);
                            const S* vn = v + n * L;
                            const S* go = g.data() + k * stride;
                            for (int64_t l = 0; l < L; ++l) acc += vn[l] * go[l];
                            gx[static_cast<size_t>(n * Kf + k)] += acc;
                        }
                }
                if (nv >= 0) {
                    auto& gv = tp.grad_buf(nv);
                    const S* x = xd->data();
                    for (int64_t k = 0; k < Kf; ++k)
                        for (int64_t n = 0; n < N; ++n) {
                            S a = x[n * Kf + k];
                            if (a == S(0)) continue;
                            const S* go = g.data() + k * stride;
                            for (int64_t l = 0; l < L; ++l) gv[static_cast<size_t>(n * L + l)] += a * go[l];
                        }
                }
            });
        tape.attach(out, node);
    }
    return out;
}

} // namespace convnilm
