#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <string>
#include <vector>

#include "convnilm/errors.hpp"

namespace convnilm {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ']';
    return os.str();
}

inline void validate_shape(const Shape& s) {
    for (int64_t d : s)
        if (d <= 0) throw ShapeError("non-positive extent in shape " + shape_str(s));
}

// ---------------------------------------------------------------------------
// Tensor: dense n-d array of Scalar. The node/tape_epoch pair links a tensor
// to the tape that last recorded it; a stale epoch means "off tape".
// ---------------------------------------------------------------------------
template <typename Scalar>
struct TensorT {
    Shape shape;
    std::shared_ptr<std::vector<Scalar>> data;
    bool requires_grad = false;
    mutable int64_t node = -1;
    mutable uint64_t tape_epoch = 0;

    TensorT() = default;

    int64_t numel() const { return data ? static_cast<int64_t>(data->size()) : 0; }
    int64_t rank() const { return static_cast<int64_t>(shape.size()); }

    Scalar* ptr() { return data->data(); }
    const Scalar* ptr() const { return data->data(); }
    std::vector<Scalar>& vec() { return *data; }
    const std::vector<Scalar>& vec() const { return *data; }

    Scalar item() const {
        if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape));
        return (*data)[0];
    }

    static TensorT zeros(Shape s, bool requires_grad = false) {
        return full(std::move(s), Scalar(0), requires_grad);
    }

    static TensorT full(Shape s, Scalar v, bool requires_grad = false) {
        validate_shape(s);
        TensorT t;
        t.data = std::make_shared<std::vector<Scalar>>(static_cast<size_t>(shape_numel(s)), v);
        t.shape = std::move(s);
        t.requires_grad = requires_grad;
        return t;
    }

    static TensorT from(Shape s, std::vector<Scalar> values, bool requires_grad = false) {
        validate_shape(s);
        if (shape_numel(s) != static_cast<int64_t>(values.size()))
            throw ShapeError("data length " + std::to_string(values.size()) +
                             " does not match shape " + shape_str(s));
        TensorT t;
        t.data = std::make_shared<std::vector<Scalar>>(std::move(values));
        t.shape = std::move(s);
        t.requires_grad = requires_grad;
        return t;
    }

    static TensorT scalar(Scalar v, bool requires_grad = false) {
        return from({}, {v}, requires_grad);
    }

    // Deep copy of the payload; detached from any tape.
    TensorT clone() const {
        TensorT t;
        t.shape = shape;
        t.data = std::make_shared<std::vector<Scalar>>(*data);
        t.requires_grad = requires_grad;
        return t;
    }
};

namespace detail {

inline uint64_t next_tape_epoch() {
    static std::atomic<uint64_t> counter{1};
    return counter.fetch_add(1);
}

template <typename Scalar>
inline void check_finite(const std::vector<Scalar>& v, const char* op) {
    for (Scalar x : v)
        if (!std::isfinite(static_cast<double>(x)))
            throw NumericError(std::string("non-finite value produced by ") + op);
}

} // namespace detail

template <typename Scalar>
class GradientMapT;

// ---------------------------------------------------------------------------
// Tape: dynamic define-by-run record. Nodes are appended in creation order,
// which is a topological order, so backward() is a single reverse sweep.
// A non-recording tape never mutates shared state and is safe for concurrent
// forward-only evaluation.
// ---------------------------------------------------------------------------
template <typename Scalar>
class TapeT {
public:
    using Tensor = TensorT<Scalar>;
    using BackwardFn = std::function<void(TapeT&, const std::vector<Scalar>&)>;

    TapeT() : epoch_(detail::next_tape_epoch()) {}
    explicit TapeT(bool recording) : recording(recording), epoch_(detail::next_tape_epoch()) {}

    TapeT(const TapeT&) = delete;
    TapeT& operator=(const TapeT&) = delete;

    bool recording = true;

    // Smallest |x| seen at any activation kink this tape; used to certify
    // smooth points for finite-difference checks.
    double kink_min = std::numeric_limits<double>::infinity();

    uint64_t epoch() const { return epoch_; }
    size_t size() const { return nodes_.size(); }

    int64_t node_of(const Tensor& t) const {
        if (t.tape_epoch == epoch_) return t.node;
        // A copy of a watched tensor shares its payload; leaves resolve
        // through the payload so every alias maps to the same node.
        if (t.data) {
            auto it = leaf_of_payload_.find(t.data.get());
            if (it != leaf_of_payload_.end()) {
                t.node = it->second;
                t.tape_epoch = epoch_;
                return it->second;
            }
        }
        return -1;
    }

    // Registers a requires-grad tensor as a differentiable leaf.
    int64_t watch(const Tensor& t) {
        if (!recording) throw ShapeError("watch() on a non-recording tape");
        if (!t.requires_grad) throw ShapeError("watch() requires requires_grad=true");
        int64_t existing = node_of(t);
        if (existing >= 0) return existing;
        Node n;
        n.shape = t.shape;
        n.numel = t.numel();
        n.leaf = true;
        nodes_.push_back(std::move(n));
        t.node = static_cast<int64_t>(nodes_.size()) - 1;
        t.tape_epoch = epoch_;
        leaf_of_payload_[t.data.get()] = t.node;
        return t.node;
    }

    // Resolves the tape-node id of an op input, auto-watching grad leaves.
    int64_t input_node(const Tensor& t) {
        int64_t n = node_of(t);
        if (n < 0 && t.requires_grad && recording) n = watch(t);
        return n;
    }

    // Records an interior node. Returns -1 when not recording or when no
    // input participates in differentiation.
    int64_t record(const Shape& out_shape, std::vector<int64_t> parents, BackwardFn back) {
        if (!recording) return -1;
        bool any = false;
        for (int64_t p : parents) any = any || p >= 0;
        if (!any) return -1;
        Node n;
        n.parents = std::move(parents);
        n.back = std::move(back);
        n.shape = out_shape;
        n.numel = shape_numel(out_shape);
        nodes_.push_back(std::move(n));
        return static_cast<int64_t>(nodes_.size()) - 1;
    }

    void attach(const Tensor& t, int64_t node) const {
        t.node = node;
        t.tape_epoch = node >= 0 ? epoch_ : 0;
    }

    // Gradient buffer for a node, zero-initialised on first touch.
    std::vector<Scalar>& grad_buf(int64_t node) {
        if (grads_.size() != nodes_.size()) grads_.resize(nodes_.size());
        auto& g = grads_[static_cast<size_t>(node)];
        if (g.empty()) g.assign(static_cast<size_t>(nodes_[static_cast<size_t>(node)].numel), Scalar(0));
        return g;
    }

    GradientMapT<Scalar> backward(const Tensor& loss);

    // Drops all records and gradient state; tensor payloads stay valid.
    void clear() {
        nodes_.clear();
        grads_.clear();
        leaf_of_payload_.clear();
        epoch_ = detail::next_tape_epoch();
        kink_min = std::numeric_limits<double>::infinity();
    }

private:
    friend class GradientMapT<Scalar>;

    struct Node {
        std::vector<int64_t> parents;
        BackwardFn back;
        Shape shape;
        int64_t numel = 0;
        bool leaf = false;
    };

    std::vector<Node> nodes_;
    std::vector<std::vector<Scalar>> grads_;
    std::unordered_map<const void*, int64_t> leaf_of_payload_;
    uint64_t epoch_;
};

// ---------------------------------------------------------------------------
// GradientMap: owns the gradients produced by one backward pass, keyed by
// tape-node id. Leaves that never influenced the loss report zero tensors.
// ---------------------------------------------------------------------------
template <typename Scalar>
class GradientMapT {
public:
    using Tensor = TensorT<Scalar>;

    Tensor at(const Tensor& t) const {
        int64_t n = t.tape_epoch == epoch_ ? t.node : -1;
        if (n < 0 && t.data) {
            auto it = leaf_of_payload_.find(t.data.get());
            if (it != leaf_of_payload_.end()) n = it->second;
        }
        if (n < 0) throw ShapeError("gradient requested for a tensor that is not on this tape");
        return at_node(n);
    }

    Tensor at_node(int64_t node) const {
        if (node < 0 || node >= static_cast<int64_t>(shapes_.size()))
            throw ShapeError("gradient requested for unknown node id");
        const Shape& s = shapes_[static_cast<size_t>(node)];
        const auto& g = grads_[static_cast<size_t>(node)];
        if (g.empty()) return Tensor::zeros(s.empty() ? Shape{} : s);
        return Tensor::from(s, g);
    }

private:
    friend class TapeT<Scalar>;

    GradientMapT(std::vector<std::vector<Scalar>> grads, std::vector<Shape> shapes,
                 std::unordered_map<const void*, int64_t> leaves, uint64_t epoch)
        : grads_(std::move(grads)), shapes_(std::move(shapes)),
          leaf_of_payload_(std::move(leaves)), epoch_(epoch) {}

    std::vector<std::vector<Scalar>> grads_;
    std::vector<Shape> shapes_;
    std::unordered_map<const void*, int64_t> leaf_of_payload_;
    uint64_t epoch_;
};

template <typename Scalar>
GradientMapT<Scalar> TapeT<Scalar>::backward(const Tensor& loss) {
    int64_t root = node_of(loss);
    if (root < 0) throw ShapeError("backward() on a loss that is not on the tape");
    if (loss.numel() != 1) throw ShapeError("backward() requires a scalar loss, got shape " + shape_str(loss.shape));

    grads_.assign(nodes_.size(), {});
    grad_buf(root)[0] = Scalar(1);

    for (int64_t i = static_cast<int64_t>(nodes_.size()) - 1; i >= 0; --i) {
        auto& n = nodes_[static_cast<size_t>(i)];
        auto& g = grads_[static_cast<size_t>(i)];
        if (g.empty() || !n.back) continue;
        n.back(*this, g);
    }

    std::vector<Shape> shapes;
    shapes.reserve(nodes_.size());
    for (auto& n : nodes_) shapes.push_back(n.shape);
    GradientMapT<Scalar> map(std::move(grads_), std::move(shapes), leaf_of_payload_, epoch_);
    grads_.clear();
    return map;
}

using Tensor = TensorT<double>;
using Tape = TapeT<double>;
using GradientMap = GradientMapT<double>;

} // namespace convnilm
