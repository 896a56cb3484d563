#pragma once

#include <functional>
#include <vector>

#include "convnilm/ops.hpp"
#include "convnilm/tensor.hpp"

namespace convnilm {

// Central finite differences against the tape gradient, 64-bit only.
// f must build a scalar from the given inputs on the supplied tape.
// Returns max over coordinates of |g_fd - g_ad| / max(1e-12, |g_fd| + |g_ad|).
inline double grad_check(const std::function<Tensor(Tape&, const std::vector<Tensor>&)>& f,
                         std::vector<Tensor> inputs, double eps,
                         double* kink_min_out = nullptr) {
    if (!(eps >= 1e-8 && eps <= 1e-4)) throw ConfigError("grad_check eps must lie in [1e-8, 1e-4]");
    for (auto& t : inputs) t.requires_grad = true;

    Tape tape;
    for (auto& t : inputs) tape.watch(t);
    Tensor loss = f(tape, inputs);
    if (loss.numel() != 1) throw ShapeError("grad_check requires a scalar-valued function");
    if (kink_min_out) *kink_min_out = tape.kink_min;
    GradientMap grads = tape.backward(loss);

    auto eval = [&](void) -> double {
        Tape t2(false);
        return f(t2, inputs).item();
    };

    double max_rel = 0.0;
    for (auto& t : inputs) {
        Tensor g = grads.at(t);
        for (int64_t j = 0; j < t.numel(); ++j) {
            double x0 = t.ptr()[j];
            t.ptr()[j] = x0 + eps;
            double fp = eval();
            t.ptr()[j] = x0 - eps;
            double fm = eval();
            t.ptr()[j] = x0;
            double g_fd = (fp - fm) / (2.0 * eps);
            double g_ad = g.ptr()[j];
            double rel = std::abs(g_fd - g_ad) / std::max(1e-12, std::abs(g_fd) + std::abs(g_ad));
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

} // namespace convnilm
