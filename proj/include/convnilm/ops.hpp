#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "convnilm/tensor.hpp"

namespace convnilm {

enum class EwOp { Add, Sub, Mul, Div };
enum class ReduceOp { Sum, Mean, Max };

namespace detail {

// Right-aligned broadcast: each trailing dimension pair must be equal or one
// side must have extent 1 (a missing dimension counts as 1).
inline Shape broadcast_shape(const Shape& a, const Shape& b) {
    size_t ra = a.size(), rb = b.size(), r = std::max(ra, rb);
    Shape out(r);
    for (size_t i = 0; i < r; ++i) {
        int64_t da = i < r - ra ? 1 : a[i - (r - ra)];
        int64_t db = i < r - rb ? 1 : b[i - (r - rb)];
        if (da != db && da != 1 && db != 1)
            throw ShapeError("shapes " + shape_str(a) + " and " + shape_str(b) + " do not broadcast");
        out[i] = std::max(da, db);
    }
    return out;
}

// Flat strides of `s` embedded in a broadcast result of shape `out`;
// stride 0 marks a broadcast dimension.
inline std::vector<int64_t> broadcast_strides(const Shape& s, const Shape& out) {
    size_t r = out.size(), rs = s.size();
    std::vector<int64_t> strides(r, 0);
    int64_t acc = 1;
    for (size_t i = rs; i-- > 0;) {
        size_t oi = i + (r - rs);
        strides[oi] = (s[i] == 1 && out[oi] != 1) ? 0 : acc;
        acc *= s[i];
    }
    return strides;
}

// Odometer over the broadcast result shape tracking flat offsets into both
// operands.
struct BroadcastIter {
    const Shape& out;
    std::vector<int64_t> sa, sb;
    std::vector<int64_t> idx;
    int64_t ia = 0, ib = 0;

    BroadcastIter(const Shape& out, const Shape& a, const Shape& b)
        : out(out), sa(broadcast_strides(a, out)), sb(broadcast_strides(b, out)), idx(out.size(), 0) {}

    void advance() {
        for (size_t d = out.size(); d-- > 0;) {
            ++idx[d];
            ia += sa[d];
            ib += sb[d];
            if (idx[d] < out[d]) return;
            ia -= sa[d] * out[d];
            ib -= sb[d] * out[d];
            idx[d] = 0;
        }
    }
};

} // namespace detail

// ---------------------------------------------------------------------------
// Elementwise binary ops
// ---------------------------------------------------------------------------
template <typename S>
TensorT<S> elementwise(TapeT<S>& tape, EwOp op, const TensorT<S>& a, const TensorT<S>& b) {
    using T = TensorT<S>;
    const bool same = a.shape == b.shape;
    Shape out_shape = same ? a.shape : detail::broadcast_shape(a.shape, b.shape);
    T out = T::zeros(out_shape);

    auto apply = [op](S x, S y) -> S {
        switch (op) {
            case EwOp::Add: return x + y;
            case EwOp::Sub: return x - y;
            case EwOp::Mul: return x * y;
            case EwOp::Div: return x / y;
        }
        return S(0);
    };

    if (op == EwOp::Div) {
        for (S y : b.vec())
            if (y == S(0)) throw NumericError("division by exact zero");
    }

    const S* pa = a.ptr();
    const S* pb = b.ptr();
    S* po = out.ptr();
    const int64_t n = out.numel();

    if (same) {
        for (int64_t i = 0; i < n; ++i) po[i] = apply(pa[i], pb[i]);
    } else if (b.numel() == 1) {
        const S y = pb[0];
        for (int64_t i = 0; i < n; ++i) po[i] = apply(pa[i], y);
    } else if (a.numel() == 1) {
        const S x = pa[0];
        for (int64_t i = 0; i < n; ++i) po[i] = apply(x, pb[i]);
    } else {
        detail::BroadcastIter it(out_shape, a.shape, b.shape);
        for (int64_t i = 0; i < n; ++i, it.advance()) po[i] = apply(pa[it.ia], pb[it.ib]);
    }
    detail::check_finite(out.vec(), "elementwise");

    int64_t na = tape.input_node(a), nb = tape.input_node(b);
    if (na >= 0 || nb >= 0) {
        auto da = a.data, db = b.data;
        Shape sha = a.shape, shb = b.shape;
        int64_t node = tape.record(out_shape, {na, nb},
            [op, na, nb, da, db, sha, shb, out_shape](TapeT<S>& tp, const std::vector<S>& gout) {
                // contrib(i, ia, ib) is d(out[i])/d(parent) * gout[i]
                auto accumulate = [&](int64_t parent, bool is_a, auto contrib) {
                    if (parent < 0) return;
                    const Shape& pshape = is_a ? sha : shb;
                    auto& gbuf = tp.grad_buf(parent);
                    if (pshape == out_shape) {
                        detail::BroadcastIter it(out_shape, sha, shb);
                        for (size_t i = 0; i < gout.size(); ++i, it.advance())
                            gbuf[i] += contrib(i, it.ia, it.ib);
                    } else {
                        detail::BroadcastIter it(out_shape, sha, shb);
                        for (size_t i = 0; i < gout.size(); ++i, it.advance())
                            gbuf[static_cast<size_t>(is_a ? it.ia : it.ib)] += contrib(i, it.ia, it.ib);
                    }
                };
                switch (op) {
                    case EwOp::Add:
                        accumulate(na, true, [&](size_t i, int64_t, int64_t) { return gout[i]; });
                        accumulate(nb, false, [&](size_t i, int64_t, int64_t) { return gout[i]; });
                        break;
                    case EwOp::Sub:
                        accumulate(na, true, [&](size_t i, int64_t, int64_t) { return gout[i]; });
                        accumulate(nb, false, [&](size_t i, int64_t, int64_t) { return -gout[i]; });
                        break;
                    case EwOp::Mul:
                        accumulate(na, true, [&](size_t i, int64_t, int64_t ib) { return gout[i] * (*db)[static_cast<size_t>(ib)]; });
                        accumulate(nb, false, [&](size_t i, int64_t ia, int64_t) { return gout[i] * (*da)[static_cast<size_t>(ia)]; });
                        break;
                    case EwOp::Div:
                        accumulate(na, true, [&](size_t i, int64_t, int64_t ib) { return gout[i] / (*db)[static_cast<size_t>(ib)]; });
                        accumulate(nb, false, [&](size_t i, int64_t ia, int64_t ib) {
                            S bv = (*db)[static_cast<size_t>(ib)];
                            return -gout[i] * (*da)[static_cast<size_t>(ia)] / (bv * bv);
                        });
                        break;
                }
            });
        tape.attach(out, node);
    }
    return out;
}

template <typename S>
TensorT<S> add(TapeT<S>& t, const TensorT<S>& a, const TensorT<S>& b) { return elementwise(t, EwOp::Add, a, b); }
template <typename S>
TensorT<S> sub(TapeT<S>& t, const TensorT<S>& a, const TensorT<S>& b) { return elementwise(t, EwOp::Sub, a, b); }
template <typename S>
TensorT<S> mul(TapeT<S>& t, const TensorT<S>& a, const TensorT<S>& b) { return elementwise(t, EwOp::Mul, a, b); }
template <typename S>
TensorT<S> div(TapeT<S>& t, const TensorT<S>& a, const TensorT<S>& b) { return elementwise(t, EwOp::Div, a, b); }

template <typename S>
TensorT<S> add(TapeT<S>& t, const TensorT<S>& a, double c) { return add(t, a, TensorT<S>::scalar(S(c))); }
template <typename S>
TensorT<S> sub(TapeT<S>& t, const TensorT<S>& a, double c) { return sub(t, a, TensorT<S>::scalar(S(c))); }
template <typename S>
TensorT<S> mul(TapeT<S>& t, const TensorT<S>& a, double c) { return mul(t, a, TensorT<S>::scalar(S(c))); }
template <typename S>
TensorT<S> div(TapeT<S>& t, const TensorT<S>& a, double c) { return div(t, a, TensorT<S>::scalar(S(c))); }

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------
template <typename S>
TensorT<S> reduce(TapeT<S>& tape, ReduceOp op, const TensorT<S>& x, std::vector<int> axes) {
    using T = TensorT<S>;
    const int64_t r = x.rank();
    std::sort(axes.begin(), axes.end());
    for (size_t i = 0; i < axes.size(); ++i) {
        if (axes[i] < 0 || axes[i] >= r) throw ShapeError("reduce axis out of range");
        if (i > 0 && axes[i] == axes[i - 1]) throw ShapeError("duplicate reduce axis");
    }

    // Empty axis list: identity copy.
    if (axes.empty()) {
        T out = T::from(x.shape, x.vec());
        int64_t nx = tape.input_node(x);
        if (nx >= 0) {
            int64_t node = tape.record(out.shape, {nx}, [nx](TapeT<S>& tp, const std::vector<S>& g) {
                auto& gb = tp.grad_buf(nx);
                for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
            });
            tape.attach(out, node);
        }
        return out;
    }

    std::vector<bool> reduced(r, false);
    for (int a : axes) reduced[static_cast<size_t>(a)] = true;

    Shape out_shape;
    for (int64_t d = 0; d < r; ++d)
        if (!reduced[static_cast<size_t>(d)]) out_shape.push_back(x.shape[static_cast<size_t>(d)]);

    const int64_t n_in = x.numel();
    const int64_t n_out = shape_numel(out_shape);

    // Map each input flat index to its output flat index.
    std::vector<int64_t> out_stride_per_dim(r, 0);
    {
        int64_t acc = 1;
        for (int64_t d = r; d-- > 0;) {
            if (!reduced[static_cast<size_t>(d)]) {
                out_stride_per_dim[static_cast<size_t>(d)] = acc;
                acc *= x.shape[static_cast<size_t>(d)];
            }
        }
    }
    std::vector<int64_t> in_stride(r, 1);
    for (int64_t d = r - 1; d-- > 0;)
        in_stride[static_cast<size_t>(d)] = in_stride[static_cast<size_t>(d + 1)] * x.shape[static_cast<size_t>(d + 1)];

    // Captured by value below: the closure outlives this frame.
    auto out_index_of = [in_stride, out_stride_per_dim, in_shape = x.shape, r](int64_t flat) {
        int64_t oi = 0;
        for (int64_t d = 0; d < r; ++d) {
            int64_t coord = (flat / in_stride[static_cast<size_t>(d)]) % in_shape[static_cast<size_t>(d)];
            oi += coord * out_stride_per_dim[static_cast<size_t>(d)];
        }
        return oi;
    };

    int64_t count = n_in / n_out;
    T out;
    std::vector<int64_t> argmax;
    const S* px = x.ptr();

    if (op == ReduceOp::Max) {
        out = T::full(out_shape, std::numeric_limits<S>::lowest());
        argmax.assign(static_cast<size_t>(n_out), -1);
        S* po = out.ptr();
        for (int64_t i = 0; i < n_in; ++i) {
            int64_t oi = out_index_of(i);
            if (argmax[static_cast<size_t>(oi)] < 0 || px[i] > po[oi]) {
                po[oi] = px[i];
                argmax[static_cast<size_t>(oi)] = i;
            }
        }
    } else {
        out = T::zeros(out_shape);
        S* po = out.ptr();
        for (int64_t i = 0; i < n_in; ++i) po[out_index_of(i)] += px[i];
        if (op == ReduceOp::Mean)
            for (int64_t i = 0; i < n_out; ++i) po[i] /= static_cast<S>(count);
    }
    detail::check_finite(out.vec(), "reduce");

    int64_t nx = tape.input_node(x);
    if (nx >= 0) {
        int64_t node = tape.record(out_shape, {nx},
            [op, nx, n_in, count, out_index_of, argmax](TapeT<S>& tp, const std::vector<S>& g) {
                auto& gb = tp.grad_buf(nx);
                if (op == ReduceOp::Max) {
                    for (size_t oi = 0; oi < argmax.size(); ++oi)
                        gb[static_cast<size_t>(argmax[oi])] += g[oi];
                } else {
                    const S scale = op == ReduceOp::Mean ? S(1) / static_cast<S>(count) : S(1);
                    for (int64_t i = 0; i < n_in; ++i) gb[static_cast<size_t>(i)] += g[static_cast<size_t>(out_index_of(i))] * scale;
                }
            });
        tape.attach(out, node);
    }
    return out;
}

template <typename S>
TensorT<S> sum_over(TapeT<S>& t, const TensorT<S>& x, std::vector<int> axes) { return reduce(t, ReduceOp::Sum, x, std::move(axes)); }
template <typename S>
TensorT<S> mean_over(TapeT<S>& t, const TensorT<S>& x, std::vector<int> axes) { return reduce(t, ReduceOp::Mean, x, std::move(axes)); }
template <typename S>
TensorT<S> max_over(TapeT<S>& t, const TensorT<S>& x, std::vector<int> axes) { return reduce(t, ReduceOp::Max, x, std::move(axes)); }

template <typename S>
std::vector<int> all_axes(const TensorT<S>& x) {
    std::vector<int> a(static_cast<size_t>(x.rank()));
    for (size_t i = 0; i < a.size(); ++i) a[i] = static_cast<int>(i);
    return a;
}

template <typename S>
TensorT<S> sum_all(TapeT<S>& t, const TensorT<S>& x) { return sum_over(t, x, all_axes(x)); }
template <typename S>
TensorT<S> mean_all(TapeT<S>& t, const TensorT<S>& x) { return mean_over(t, x, all_axes(x)); }

// ---------------------------------------------------------------------------
// Unary ops
// ---------------------------------------------------------------------------
template <typename S>
TensorT<S> neg(TapeT<S>& tape, const TensorT<S>& x) {
    return sub(tape, TensorT<S>::scalar(S(0)), x);
}

template <typename S>
TensorT<S> sqrt_op(TapeT<S>& tape, const TensorT<S>& x) {
    using T = TensorT<S>;
    T out = T::zeros(x.shape);
    for (int64_t i = 0; i < x.numel(); ++i) {
        S v = x.ptr()[i];
        if (v < S(0)) throw NumericError("sqrt of negative value");
        out.ptr()[i] = std::sqrt(v);
    }
    int64_t nx = tape.input_node(x);
    if (nx >= 0) {
        auto od = out.data;
        int64_t node = tape.record(out.shape, {nx}, [nx, od](TapeT<S>& tp, const std::vector<S>& g) {
            auto& gb = tp.grad_buf(nx);
            for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] / (S(2) * (*od)[i]);
        });
        tape.attach(out, node);
    }
    return out;
}

template <typename S>
TensorT<S> sigmoid(TapeT<S>& tape, const TensorT<S>& x) {
    using T = TensorT<S>;
    T out = T::zeros(x.shape);
    for (int64_t i = 0; i < x.numel(); ++i) {
        S v = x.ptr()[i];
        if (v >= S(0)) {
            out.ptr()[i] = S(1) / (S(1) + std::exp(-v));
        } else {
            S e = std::exp(v);
            out.ptr()[i] = e / (S(1) + e);
        }
    }
    detail::check_finite(out.vec(), "sigmoid");
    int64_t nx = tape.input_node(x);
    if (nx >= 0) {
        auto od = out.data;
        int64_t node = tape.record(out.shape, {nx}, [nx, od](TapeT<S>& tp, const std::vector<S>& g) {
            auto& gb = tp.grad_buf(nx);
            for (size_t i = 0; i < g.size(); ++i) {
                S s = (*od)[i];
                gb[i] += g[i] * s * (S(1) - s);
            }
        });
        tape.attach(out, node);
    }
    return out;
}

// Cumulative sum along the last axis. Backward is the reversed suffix sum.
template <typename S>
TensorT<S> cumsum_last(TapeT<S>& tape, const TensorT<S>& x) {
    using T = TensorT<S>;
    if (x.rank() < 1) throw ShapeError("cumsum_last needs rank >= 1");
    const int64_t tdim = x.shape.back();
    const int64_t rows = x.numel() / tdim;
    T out = T::zeros(x.shape);
    for (int64_t r = 0; r < rows; ++r) {
        const S* src = x.ptr() + r * tdim;
        S* dst = out.ptr() + r * tdim;
        S acc = S(0);
        for (int64_t i = 0; i < tdim; ++i) {
            acc += src[i];
            dst[i] = acc;
        }
    }
    detail::check_finite(out.vec(), "cumsum");
    int64_t nx = tape.input_node(x);
    if (nx >= 0) {
        int64_t node = tape.record(out.shape, {nx}, [nx, rows, tdim](TapeT<S>& tp, const std::vector<S>& g) {
            auto& gb = tp.grad_buf(nx);
            for (int64_t r = 0; r < rows; ++r) {
                S acc = S(0);
                for (int64_t i = tdim - 1; i >= 0; --i) {
                    acc += g[static_cast<size_t>(r * tdim + i)];
                    gb[static_cast<size_t>(r * tdim + i)] += acc;
                }
            }
        });
        tape.attach(out, node);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Shape surgery
// ---------------------------------------------------------------------------
template <typename S>
TensorT<S> reshape(TapeT<S>& tape, const TensorT<S>& x, Shape new_shape) {
    validate_shape(new_shape);
    if (shape_numel(new_shape) != x.numel())
        throw ShapeError("reshape from " + shape_str(x.shape) + " to " + shape_str(new_shape));
    TensorT<S> out;
    out.shape = std::move(new_shape);
    out.data = x.data; // row-major layout is unchanged
    int64_t nx = tape.input_node(x);
    if (nx >= 0) {
        int64_t node = tape.record(out.shape, {nx}, [nx](TapeT<S>& tp, const std::vector<S>& g) {
            auto& gb = tp.grad_buf(nx);
            for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
        });
        tape.attach(out, node);
    }
    return out;
}

// Contiguous slice of `len` rows along axis 0, starting at `start`.
template <typename S>
TensorT<S> slice0(TapeT<S>& tape, const TensorT<S>& x, int64_t start, int64_t len) {
    if (x.rank() < 1) throw ShapeError("slice0 needs rank >= 1");
    if (start < 0 || len <= 0 || start + len > x.shape[0]) throw ShapeError("slice0 range out of bounds");
    Shape out_shape = x.shape;
    out_shape[0] = len;
    const int64_t inner = x.numel() / x.shape[0];
    TensorT<S> out = TensorT<S>::zeros(out_shape);
    std::copy(x.ptr() + start * inner, x.ptr() + (start + len) * inner, out.ptr());
    int64_t nx = tape.input_node(x);
    if (nx >= 0) {
        int64_t node = tape.record(out_shape, {nx}, [nx, start, inner](TapeT<S>& tp, const std::vector<S>& g) {
            auto& gb = tp.grad_buf(nx);
            for (size_t i = 0; i < g.size(); ++i) gb[static_cast<size_t>(start * inner) + i] += g[i];
        });
        tape.attach(out, node);
    }
    return out;
}

// Row i of axis 0 with the leading dimension dropped.
template <typename S>
TensorT<S> select0(TapeT<S>& tape, const TensorT<S>& x, int64_t i) {
    TensorT<S> row = slice0(tape, x, i, 1);
    Shape s(row.shape.begin() + 1, row.shape.end());
    return reshape(tape, row, s.empty() ? Shape{} : s);
}

// Concatenation along axis 0.
template <typename S>
TensorT<S> concat0(TapeT<S>& tape, const std::vector<TensorT<S>>& parts) {
    if (parts.empty()) throw ShapeError("concat0 of nothing");
    Shape tail(parts[0].shape.begin() + 1, parts[0].shape.end());
    int64_t rows = 0;
    for (const auto& p : parts) {
        if (p.rank() < 1) throw ShapeError("concat0 needs rank >= 1");
        Shape ptail(p.shape.begin() + 1, p.shape.end());
        if (ptail != tail) throw ShapeError("concat0 trailing shape mismatch");
        rows += p.shape[0];
    }
    Shape out_shape = parts[0].shape;
    out_shape[0] = rows;
    TensorT<S> out = TensorT<S>::zeros(out_shape);
    int64_t offset = 0;
    std::vector<int64_t> parents, offsets, sizes;
    for (const auto& p : parts) {
        std::copy(p.ptr(), p.ptr() + p.numel(), out.ptr() + offset);
        parents.push_back(tape.input_node(p));
        offsets.push_back(offset);
        sizes.push_back(p.numel());
        offset += p.numel();
    }
    bool any = false;
    for (int64_t n : parents) any = any || n >= 0;
    if (any) {
        int64_t node = tape.record(out_shape, parents,
            [parents, offsets, sizes](TapeT<S>& tp, const std::vector<S>& g) {
                for (size_t k = 0; k < parents.size(); ++k) {
                    if (parents[k] < 0) continue;
                    auto& gb = tp.grad_buf(parents[k]);
                    for (int64_t i = 0; i < sizes[k]; ++i)
                        gb[static_cast<size_t>(i)] += g[static_cast<size_t>(offsets[k] + i)];
                }
            });
        tape.attach(out, node);
    }
    return out;
}

} // namespace convnilm
