#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dgcn/common.hpp"

namespace dgcn {

template <typename T>
class TapeT;

// Dense row-major tensor with optional gradient buffer. Copies share storage;
// a tensor is a cheap handle. Scalars are rank-0 (empty shape, one value).
template <typename T>
class TensorT {
    struct Node {
        Shape shape;
        std::vector<T> values;
        std::vector<T> grad;
        bool requires_grad = false;
    };

public:
    TensorT() : node_(std::make_shared<Node>()) { node_->values.clear(); }

    static TensorT zeros(Shape shape, bool requires_grad = false) {
        TensorT t;
        t.node_->shape = std::move(shape);
        t.node_->values.assign(shape_numel(t.node_->shape), T(0));
        if (requires_grad) t.set_requires_grad(true);
        return t;
    }

    static TensorT full(Shape shape, T value) {
        TensorT t = zeros(std::move(shape));
        std::fill(t.node_->values.begin(), t.node_->values.end(), value);
        return t;
    }

    static TensorT from_values(Shape shape, std::vector<T> values,
                               bool requires_grad = false) {
        if (shape_numel(shape) != values.size())
            throw std::invalid_argument("tensor: shape " + shape_str(shape) +
                                        " does not match " +
                                        std::to_string(values.size()) + " values");
        TensorT t;
        t.node_->shape = std::move(shape);
        t.node_->values = std::move(values);
        if (requires_grad) t.set_requires_grad(true);
        return t;
    }

    static TensorT scalar(T value) { return from_values({}, {value}); }

    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
    std::size_t size() const { return node_->values.size(); }
    bool defined() const { return !node_->values.empty(); }

    std::vector<T>& values() { return node_->values; }
    const std::vector<T>& values() const { return node_->values; }

    bool requires_grad() const { return node_->requires_grad; }

    void set_requires_grad(bool on) {
        node_->requires_grad = on;
        if (on)
            node_->grad.assign(node_->values.size(), T(0));
        else
            node_->grad.clear();
    }

    std::vector<T>& grad() {
        if (!node_->requires_grad)
            throw std::logic_error("tensor: grad requested but requires_grad is off");
        return node_->grad;
    }
    const std::vector<T>& grad() const {
        if (!node_->requires_grad)
            throw std::logic_error("tensor: grad requested but requires_grad is off");
        return node_->grad;
    }

    void zero_grad() {
        if (node_->requires_grad)
            std::fill(node_->grad.begin(), node_->grad.end(), T(0));
    }

    T item() const {
        if (size() != 1)
            throw std::invalid_argument("tensor: item() on non-scalar shape " +
                                        shape_str(shape()));
        return node_->values[0];
    }

    bool same_storage(const TensorT& other) const { return node_ == other.node_; }

private:
    std::shared_ptr<Node> node_;
};

// Ordered record of executed ops. backward() replays the record strictly in
// reverse execution order, which makes gradient accumulation deterministic.
template <typename T>
class TapeT {
public:
    TapeT() = default;
    TapeT(const TapeT&) = delete;
    TapeT& operator=(const TapeT&) = delete;

    static TapeT*& active() {
        thread_local TapeT* a = nullptr;
        return a;
    }

    void record(std::function<void()> backward_fn) {
        if (consumed_)
            throw std::logic_error("tape: recording after backward; reset first");
        ops_.push_back(std::move(backward_fn));
    }

    void backward(TensorT<T> loss) {
        if (consumed_)
            throw std::logic_error("tape: backward called twice without reset");
        if (loss.size() != 1)
            throw std::invalid_argument("tape: backward root must be scalar, got " +
                                        shape_str(loss.shape()));
        if (!loss.requires_grad())
            throw std::invalid_argument("tape: backward root is not grad-connected");
        consumed_ = true;
        loss.grad()[0] = T(1);
        for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
    }

    void reset() {
        ops_.clear();
        consumed_ = false;
    }

    std::size_t size() const { return ops_.size(); }
    bool consumed() const { return consumed_; }

    // RAII activation for the current thread
    class Scope {
    public:
        explicit Scope(TapeT& t) : prev_(active()) { active() = &t; }
        ~Scope() { active() = prev_; }
        Scope(const Scope&) = delete;
        Scope& operator=(const Scope&) = delete;

    private:
        TapeT* prev_;
    };

private:
    std::vector<std::function<void()>> ops_;
    bool consumed_ = false;
};

namespace detail {

template <typename T>
inline bool tracked(const TensorT<T>& t) {
    return TapeT<T>::active() != nullptr && t.requires_grad();
}

template <typename T>
inline TensorT<T> make_output(Shape shape, bool track) {
    auto out = TensorT<T>::zeros(std::move(shape));
    if (track) out.set_requires_grad(true);
    return out;
}

template <typename T>
inline void record(std::function<void()> fn) {
    TapeT<T>::active()->record(std::move(fn));
}

// outer/inner extents around one axis of a row-major shape
inline void axis_split(const Shape& s, std::size_t axis, std::size_t& outer,
                       std::size_t& n, std::size_t& inner) {
    if (axis >= s.size())
        throw std::invalid_argument("axis " + std::to_string(axis) +
                                    " out of range for shape " + shape_str(s));
    outer = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
    n = s[axis];
    inner = 1;
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
}

}  // namespace detail

// ---- elementwise ----

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
    if (a.shape() != b.shape())
        throw std::invalid_argument("add: shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
    const bool track = detail::tracked(a) || detail::tracked(b);
    TensorT<T> out = detail::make_output<T>(a.shape(), track);
    const auto& av = a.values();
    const auto& bv = b.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
    if (track) {
        detail::record<T>([a = a, b = b, out]() mutable {
            const auto& g = out.grad();
            if (a.requires_grad()) {
                auto& ga = a.grad();
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (b.requires_grad()) {
                auto& gb = b.grad();
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
            }
        });
    }
    return out;
}

template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
    if (a.shape() != b.shape())
        throw std::invalid_argument("mul: shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
    const bool track = detail::tracked(a) || detail::tracked(b);
    TensorT<T> out = detail::make_output<T>(a.shape(), track);
    const auto& av = a.values();
    const auto& bv = b.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
    if (track) {
        detail::record<T>([a = a, b = b, out]() mutable {
            const auto& g = out.grad();
            if (a.requires_grad()) {
                auto& ga = a.grad();
                const auto& bv2 = b.values();
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv2[i];
            }
            if (b.requires_grad()) {
                auto& gb = b.grad();
                const auto& av2 = a.values();
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av2[i];
            }
        });
    }
    return out;
}

template <typename T>
TensorT<T> scale(const TensorT<T>& a, T s) {
    const bool track = detail::tracked(a);
    TensorT<T> out = detail::make_output<T>(a.shape(), track);
    const auto& av = a.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * s;
    if (track) {
        detail::record<T>([a = a, out, s]() mutable {
            const auto& g = out.grad();
            auto& ga = a.grad();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
        });
    }
    return out;
}

template <typename T>
TensorT<T> add_scalar(const TensorT<T>& a, T c) {
    const bool track = detail::tracked(a);
    TensorT<T> out = detail::make_output<T>(a.shape(), track);
    const auto& av = a.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + c;
    if (track) {
        detail::record<T>([a = a, out]() mutable {
            const auto& g = out.grad();
            auto& ga = a.grad();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        });
    }
    return out;
}

// bias vector [d] over trailing axis of [...xd]; the only implicit broadcast
template <typename T>
TensorT<T> add_bias(const TensorT<T>& a, const TensorT<T>& bias) {
    if (bias.rank() != 1 || a.rank() == 0 || a.shape().back() != bias.dim(0))
        throw std::invalid_argument("add_bias: need [...x" +
                                    (bias.rank() == 1 ? std::to_string(bias.dim(0)) : std::string("d")) +
                                    "], got " + shape_str(a.shape()) + " + " +
                                    shape_str(bias.shape()));
    const bool track = detail::tracked(a) || detail::tracked(bias);
    TensorT<T> out = detail::make_output<T>(a.shape(), track);
    const std::size_t d = bias.dim(0);
    const std::size_t rows = a.size() / d;
    const auto& av = a.values();
    const auto& bv = bias.values();
    auto& ov = out.values();
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < d; ++j) ov[r * d + j] = av[r * d + j] + bv[j];
    if (track) {
        detail::record<T>([a = a, bias = bias, out, rows, d]() mutable {
            const auto& g = out.grad();
            if (a.requires_grad()) {
                auto& ga = a.grad();
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (bias.requires_grad()) {
                auto& gb = bias.grad();
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < d; ++j) gb[j] += g[r * d + j];
            }
        });
    }
    return out;
}

template <typename T>
TensorT<T> relu(const TensorT<T>& a) {
    const bool track = detail::tracked(a);
    TensorT<T> out = detail::make_output<T>(a.shape(), track);
    const auto& av = a.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] > T(0) ? av[i] : T(0);
    if (track) {
        detail::record<T>([a = a, out]() mutable {
            const auto& g = out.grad();
            const auto& av2 = a.values();
            auto& ga = a.grad();
            for (std::size_t i = 0; i < g.size(); ++i)
                if (av2[i] > T(0)) ga[i] += g[i];
        });
    }
    return out;
}

template <typename T>
TensorT<T> sigmoid(const TensorT<T>& a) {
    const bool track = detail::tracked(a);
    TensorT<T> out = detail::make_output<T>(a.shape(), track);
    const auto& av = a.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i)
        ov[i] = T(1) / (T(1) + std::exp(-av[i]));
    if (track) {
        detail::record<T>([a = a, out]() mutable {
            const auto& g = out.grad();
            const auto& o = out.values();
            auto& ga = a.grad();
            for (std::size_t i = 0; i < g.size(); ++i)
                ga[i] += g[i] * o[i] * (T(1) - o[i]);
        });
    }
    return out;
}

template <typename T>
TensorT<T> tanh_op(const TensorT<T>& a) {
    const bool track = detail::tracked(a);
    TensorT<T> out = detail::make_output<T>(a.shape(), track);
    const auto& av = a.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = std::tanh(av[i]);
    if (track) {
        detail::record<T>([a = a, out]() mutable {
            const auto& g = out.grad();
            const auto& o = out.values();
            auto& ga = a.grad();
            for (std::size_t i = 0; i < g.size(); ++i)
                ga[i] += g[i] * (T(1) - o[i] * o[i]);
        });
    }
    return out;
}

// ---- linear algebra ----

template <typename T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw std::invalid_argument("matmul: need rank-2 tensors, got " +
                                    shape_str(a.shape()) + " and " +
                                    shape_str(b.shape()));
    if (a.dim(1) != b.dim(0))
        throw std::invalid_argument("matmul: inner dimensions disagree, " +
                                    shape_str(a.shape()) + " x " +
                                    shape_str(b.shape()));
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    const bool track = detail::tracked(a) || detail::tracked(b);
    TensorT<T> out = detail::make_output<T>({m, n}, track);
    const auto& av = a.values();
    const auto& bv = b.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const T aip = av[i * k + p];
            if (aip == T(0)) continue;
            const T* brow = bv.data() + p * n;
            T* orow = ov.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
        }
    if (track) {
        detail::record<T>([a = a, b = b, out, m, k, n]() mutable {
            const auto& g = out.grad();
            if (a.requires_grad()) {
                auto& ga = a.grad();
                const auto& bv2 = b.values();
                // dA = dC * B^T
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        T acc = T(0);
                        const T* grow = g.data() + i * n;
                        const T* brow = bv2.data() + p * n;
                        for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                        ga[i * k + p] += acc;
                    }
            }
            if (b.requires_grad()) {
                auto& gb = b.grad();
                const auto& av2 = a.values();
                // dB = A^T * dC
                for (std::size_t p = 0; p < k; ++p)
                    for (std::size_t i = 0; i < m; ++i) {
                        const T aip = av2[i * k + p];
                        if (aip == T(0)) continue;
                        const T* grow = g.data() + i * n;
                        T* gbrow = gb.data() + p * n;
                        for (std::size_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
                    }
            }
        });
    }
    return out;
}

template <typename T>
TensorT<T> transpose(const TensorT<T>& a) {
    if (a.rank() != 2)
        throw std::invalid_argument("transpose: need rank-2, got " +
                                    shape_str(a.shape()));
    const std::size_t m = a.dim(0), n = a.dim(1);
    const bool track = detail::tracked(a);
    TensorT<T> out = detail::make_output<T>({n, m}, track);
    const auto& av = a.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ov[j * m + i] = av[i * n + j];
    if (track) {
        detail::record<T>([a = a, out, m, n]() mutable {
            const auto& g = out.grad();
            auto& ga = a.grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
        });
    }
    return out;
}

// ---- shape ops ----

template <typename T>
TensorT<T> reshape(const TensorT<T>& a, Shape new_shape) {
    if (shape_numel(new_shape) != a.size())
        throw std::invalid_argument("reshape: " + shape_str(a.shape()) + " -> " +
                                    shape_str(new_shape) + " changes element count");
    const bool track = detail::tracked(a);
    TensorT<T> out = detail::make_output<T>(std::move(new_shape), track);
    out.values() = a.values();
    if (track) {
        detail::record<T>([a = a, out]() mutable {
            const auto& g = out.grad();
            auto& ga = a.grad();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        });
    }
    return out;
}

template <typename T>
TensorT<T> concat(const std::vector<TensorT<T>>& parts, std::size_t axis) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    const Shape& s0 = parts[0].shape();
    std::size_t outer, n0, inner;
    detail::axis_split(s0, axis, outer, n0, inner);
    std::size_t total_axis = 0;
    for (const auto& p : parts) {
        if (p.rank() != s0.size())
            throw std::invalid_argument("concat: rank mismatch");
        for (std::size_t i = 0; i < s0.size(); ++i)
            if (i != axis && p.shape()[i] != s0[i])
                throw std::invalid_argument("concat: shape mismatch off axis, " +
                                            shape_str(p.shape()) + " vs " +
                                            shape_str(s0));
        total_axis += p.shape()[axis];
    }
    Shape out_shape = s0;
    out_shape[axis] = total_axis;
    bool track = false;
    for (const auto& p : parts) track = track || detail::tracked(p);
    TensorT<T> out = detail::make_output<T>(out_shape, track);
    auto& ov = out.values();
    std::size_t off = 0;
    for (const auto& p : parts) {
        const std::size_t pn = p.shape()[axis];
        const auto& pv = p.values();
        for (std::size_t o = 0; o < outer; ++o)
            std::copy(pv.begin() + static_cast<std::ptrdiff_t>(o * pn * inner),
                      pv.begin() + static_cast<std::ptrdiff_t>((o + 1) * pn * inner),
                      ov.begin() + static_cast<std::ptrdiff_t>((o * total_axis + off) * inner));
        off += pn;
    }
    if (track) {
        std::vector<TensorT<T>> held = parts;
        detail::record<T>([held, out, axis, outer, inner, total_axis]() mutable {
            const auto& g = out.grad();
            std::size_t off2 = 0;
            for (auto& p : held) {
                const std::size_t pn = p.shape()[axis];
                if (p.requires_grad()) {
                    auto& gp = p.grad();
                    for (std::size_t o = 0; o < outer; ++o)
                        for (std::size_t i = 0; i < pn * inner; ++i)
                            gp[o * pn * inner + i] += g[(o * total_axis + off2) * inner + i];
                }
                off2 += pn;
            }
        });
    }
    return out;
}

template <typename T>
std::vector<TensorT<T>> split(const TensorT<T>& a, std::size_t axis,
                              const std::vector<std::size_t>& sizes) {
    std::size_t outer, n, inner;
    detail::axis_split(a.shape(), axis, outer, n, inner);
    std::size_t sum = 0;
    for (auto s : sizes) sum += s;
    if (sum != n)
        throw std::invalid_argument("split: sizes sum to " + std::to_string(sum) +
                                    ", axis extent is " + std::to_string(n));
    const bool track = detail::tracked(a);
    std::vector<TensorT<T>> outs;
    const auto& av = a.values();
    std::size_t off = 0;
    for (auto pn : sizes) {
        Shape s = a.shape();
        s[axis] = pn;
        TensorT<T> part = detail::make_output<T>(s, track);
        auto& pv = part.values();
        for (std::size_t o = 0; o < outer; ++o)
            std::copy(av.begin() + static_cast<std::ptrdiff_t>((o * n + off) * inner),
                      av.begin() + static_cast<std::ptrdiff_t>((o * n + off + pn) * inner),
                      pv.begin() + static_cast<std::ptrdiff_t>(o * pn * inner));
        outs.push_back(part);
        off += pn;
    }
    if (track) {
        std::vector<std::size_t> szs = sizes;
        detail::record<T>([a = a, outs, szs, outer, n, inner]() mutable {
            auto& ga = a.grad();
            std::size_t off2 = 0;
            for (std::size_t pi = 0; pi < outs.size(); ++pi) {
                const std::size_t pn = szs[pi];
                const auto& g = outs[pi].grad();
                for (std::size_t o = 0; o < outer; ++o)
                    for (std::size_t i = 0; i < pn * inner; ++i)
                        ga[(o * n + off2) * inner + i] += g[o * pn * inner + i];
                off2 += pn;
            }
        });
    }
    return outs;
}

// [d] -> [n x d], every row a copy
template <typename T>
TensorT<T> broadcast_row(const TensorT<T>& u, std::size_t n) {
    if (u.rank() != 1)
        throw std::invalid_argument("broadcast_row: need rank-1, got " +
                                    shape_str(u.shape()));
    const std::size_t d = u.dim(0);
    const bool track = detail::tracked(u);
    TensorT<T> out = detail::make_output<T>({n, d}, track);
    const auto& uv = u.values();
    auto& ov = out.values();
    for (std::size_t r = 0; r < n; ++r)
        std::copy(uv.begin(), uv.end(), ov.begin() + static_cast<std::ptrdiff_t>(r * d));
    if (track) {
        detail::record<T>([u = u, out, n, d]() mutable {
            const auto& g = out.grad();
            auto& gu = u.grad();
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t j = 0; j < d; ++j) gu[j] += g[r * d + j];
        });
    }
    return out;
}

// ---- reductions ----

template <typename T>
TensorT<T> sum_all(const TensorT<T>& a) {
    const bool track = detail::tracked(a);
    TensorT<T> out = detail::make_output<T>({}, track);
    T acc = T(0);
    for (T v : a.values()) acc += v;
    out.values()[0] = acc;
    if (track) {
        detail::record<T>([a = a, out]() mutable {
            const T g = out.grad()[0];
            auto& ga = a.grad();
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
        });
    }
    return out;
}

template <typename T>
TensorT<T> mean(const TensorT<T>& a, std::size_t axis) {
    std::size_t outer, n, inner;
    detail::axis_split(a.shape(), axis, outer, n, inner);
    Shape out_shape;
    for (std::size_t i = 0; i < a.rank(); ++i)
        if (i != axis) out_shape.push_back(a.shape()[i]);
    const bool track = detail::tracked(a);
    TensorT<T> out = detail::make_output<T>(out_shape, track);
    const auto& av = a.values();
    auto& ov = out.values();
    const T invn = T(1) / static_cast<T>(n);
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t i = 0; i < inner; ++i)
                ov[o * inner + i] += av[(o * n + j) * inner + i] * invn;
    if (track) {
        detail::record<T>([a = a, out, outer, n, inner, invn]() mutable {
            const auto& g = out.grad();
            auto& ga = a.grad();
            for (std::size_t o = 0; o < outer; ++o)
                for (std::size_t j = 0; j < n; ++j)
                    for (std::size_t i = 0; i < inner; ++i)
                        ga[(o * n + j) * inner + i] += g[o * inner + i] * invn;
        });
    }
    return out;
}

// ---- softmax family ----

template <typename T>
TensorT<T> softmax(const TensorT<T>& a, std::size_t axis) {
    std::size_t outer, n, inner;
    detail::axis_split(a.shape(), axis, outer, n, inner);
    const bool track = detail::tracked(a);
    TensorT<T> out = detail::make_output<T>(a.shape(), track);
    const auto& av = a.values();
    auto& ov = out.values();
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < inner; ++i) {
            const std::size_t base = o * n * inner + i;
            T mx = av[base];
            for (std::size_t j = 1; j < n; ++j)
                mx = std::max(mx, av[base + j * inner]);
            T denom = T(0);
            for (std::size_t j = 0; j < n; ++j) {
                const T e = std::exp(av[base + j * inner] - mx);
                ov[base + j * inner] = e;
                denom += e;
            }
            for (std::size_t j = 0; j < n; ++j) ov[base + j * inner] /= denom;
        }
    if (track) {
        detail::record<T>([a = a, out, outer, n, inner]() mutable {
            const auto& g = out.grad();
            const auto& p = out.values();
            auto& ga = a.grad();
            for (std::size_t o = 0; o < outer; ++o)
                for (std::size_t i = 0; i < inner; ++i) {
                    const std::size_t base = o * n * inner + i;
                    T dot = T(0);
                    for (std::size_t j = 0; j < n; ++j)
                        dot += g[base + j * inner] * p[base + j * inner];
                    for (std::size_t j = 0; j < n; ++j)
                        ga[base + j * inner] +=
                            p[base + j * inner] * (g[base + j * inner] - dot);
                }
        });
    }
    return out;
}

// Row softmax over a [rows x cols] matrix with a keep-mask; masked entries get
// probability exactly 0. A fully masked row has no distribution and is an error.
template <typename T>
TensorT<T> masked_softmax(const TensorT<T>& a, const std::vector<std::uint8_t>& keep) {
    if (a.rank() != 2)
        throw std::invalid_argument("masked_softmax: need rank-2, got " +
                                    shape_str(a.shape()));
    const std::size_t rows = a.dim(0), cols = a.dim(1);
    if (keep.size() != rows * cols)
        throw std::invalid_argument("masked_softmax: mask size mismatch");
    const bool track = detail::tracked(a);
    TensorT<T> out = detail::make_output<T>(a.shape(), track);
    const auto& av = a.values();
    auto& ov = out.values();
    for (std::size_t r = 0; r < rows; ++r) {
        T mx = T(0);
        bool any = false;
        for (std::size_t c = 0; c < cols; ++c)
            if (keep[r * cols + c]) {
                mx = any ? std::max(mx, av[r * cols + c]) : av[r * cols + c];
                any = true;
            }
        if (!any)
            throw std::invalid_argument("masked_softmax: row " + std::to_string(r) +
                                        " is fully masked");
        T denom = T(0);
        for (std::size_t c = 0; c < cols; ++c) {
            if (keep[r * cols + c]) {
                const T e = std::exp(av[r * cols + c] - mx);
                ov[r * cols + c] = e;
                denom += e;
            } else {
                ov[r * cols + c] = T(0);
            }
        }
        for (std::size_t c = 0; c < cols; ++c) ov[r * cols + c] /= denom;
    }
    if (track) {
        detail::record<T>([a = a, out, rows, cols]() mutable {
            const auto& g = out.grad();
            const auto& p = out.values();
            auto& ga = a.grad();
            for (std::size_t r = 0; r < rows; ++r) {
                T dot = T(0);
                for (std::size_t c = 0; c < cols; ++c)
                    dot += g[r * cols + c] * p[r * cols + c];
                for (std::size_t c = 0; c < cols; ++c)
                    ga[r * cols + c] += p[r * cols + c] * (g[r * cols + c] - dot);
            }
        });
    }
    return out;
}

// ---- normalization ----

template <typename T>
TensorT<T> layer_norm(const TensorT<T>& x, const TensorT<T>& gain,
                      const TensorT<T>& bias, T eps) {
    if (x.rank() == 0 || gain.rank() != 1 || bias.rank() != 1)
        throw std::invalid_argument("layer_norm: need x [...xd], gain [d], bias [d]");
    const std::size_t d = x.shape().back();
    if (gain.dim(0) != d || bias.dim(0) != d)
        throw std::invalid_argument("layer_norm: gain/bias width " +
                                    shape_str(gain.shape()) +
                                    " does not match trailing dim of " +
                                    shape_str(x.shape()));
    const std::size_t rows = x.size() / d;
    const bool track = detail::tracked(x) || detail::tracked(gain) || detail::tracked(bias);
    TensorT<T> out = detail::make_output<T>(x.shape(), track);
    TensorT<T> xhat = TensorT<T>::zeros(x.shape());  // saved for backward
    std::vector<T> inv_std(rows);
    const auto& xv = x.values();
    const auto& gv = gain.values();
    const auto& bv = bias.values();
    auto& ov = out.values();
    auto& hv = xhat.values();
    for (std::size_t r = 0; r < rows; ++r) {
        const T* row = xv.data() + r * d;
        T m = T(0);
        for (std::size_t j = 0; j < d; ++j) m += row[j];
        m /= static_cast<T>(d);
        T var = T(0);
        for (std::size_t j = 0; j < d; ++j) {
            const T c = row[j] - m;
            var += c * c;
        }
        var /= static_cast<T>(d);
        const T inv = T(1) / std::sqrt(var + eps);
        inv_std[r] = inv;
        for (std::size_t j = 0; j < d; ++j) {
            const T h = (row[j] - m) * inv;
            hv[r * d + j] = h;
            ov[r * d + j] = gv[j] * h + bv[j];
        }
    }
    if (track) {
        detail::record<T>([x = x, gain = gain, bias = bias, out, xhat, inv_std, rows, d]() mutable {
            const auto& g = out.grad();
            const auto& hv2 = xhat.values();
            const auto& gv2 = gain.values();
            if (gain.requires_grad()) {
                auto& gg = gain.grad();
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < d; ++j)
                        gg[j] += g[r * d + j] * hv2[r * d + j];
            }
            if (bias.requires_grad()) {
                auto& gb = bias.grad();
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < d; ++j) gb[j] += g[r * d + j];
            }
            if (x.requires_grad()) {
                auto& gx = x.grad();
                for (std::size_t r = 0; r < rows; ++r) {
                    T sum_dh = T(0), sum_dh_h = T(0);
                    for (std::size_t j = 0; j < d; ++j) {
                        const T dh = g[r * d + j] * gv2[j];
                        sum_dh += dh;
                        sum_dh_h += dh * hv2[r * d + j];
                    }
                    const T invd = T(1) / static_cast<T>(d);
                    for (std::size_t j = 0; j < d; ++j) {
                        const T dh = g[r * d + j] * gv2[j];
                        gx[r * d + j] += inv_std[r] * (dh - sum_dh * invd -
                                                       hv2[r * d + j] * sum_dh_h * invd);
                    }
                }
            }
        });
    }
    return out;
}

// ---- lookup / scatter ----

template <typename T>
TensorT<T> embedding_lookup(const TensorT<T>& table, const std::vector<int>& ids) {
    if (table.rank() != 2)
        throw std::invalid_argument("embedding_lookup: table must be rank-2, got " +
                                    shape_str(table.shape()));
    const std::size_t v = table.dim(0), d = table.dim(1);
    for (std::size_t i = 0; i < ids.size(); ++i)
        if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= v)
            throw std::out_of_range("embedding_lookup: id " + std::to_string(ids[i]) +
                                    " at position " + std::to_string(i) +
                                    " outside table of " + std::to_string(v));
    const bool track = detail::tracked(table);
    TensorT<T> out = detail::make_output<T>({ids.size(), d}, track);
    const auto& tv = table.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < ids.size(); ++i)
        std::copy(tv.begin() + static_cast<std::ptrdiff_t>(ids[i] * d),
                  tv.begin() + static_cast<std::ptrdiff_t>((ids[i] + 1) * d),
                  ov.begin() + static_cast<std::ptrdiff_t>(i * d));
    if (track) {
        std::vector<int> held = ids;
        detail::record<T>([table = table, out, held, d]() mutable {
            const auto& g = out.grad();
            auto& gt = table.grad();
            for (std::size_t i = 0; i < held.size(); ++i)
                for (std::size_t j = 0; j < d; ++j)
                    gt[held[i] * d + j] += g[i * d + j];
        });
    }
    return out;
}

// rows [e x d] summed into an [n_out x d] result at dst positions
template <typename T>
TensorT<T> scatter_add_rows(const TensorT<T>& rows, const std::vector<int>& dst,
                            std::size_t n_out) {
    if (rows.rank() != 2)
        throw std::invalid_argument("scatter_add_rows: need rank-2 rows");
    if (dst.size() != rows.dim(0))
        throw std::invalid_argument("scatter_add_rows: " + std::to_string(dst.size()) +
                                    " indices for " + std::to_string(rows.dim(0)) +
                                    " rows");
    const std::size_t d = rows.dim(1);
    for (int id : dst)
        if (id < 0 || static_cast<std::size_t>(id) >= n_out)
            throw std::out_of_range("scatter_add_rows: destination " +
                                    std::to_string(id) + " outside " +
                                    std::to_string(n_out));
    const bool track = detail::tracked(rows);
    TensorT<T> out = detail::make_output<T>({n_out, d}, track);
    const auto& rv = rows.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < dst.size(); ++i)
        for (std::size_t j = 0; j < d; ++j) ov[dst[i] * d + j] += rv[i * d + j];
    if (track) {
        std::vector<int> held = dst;
        detail::record<T>([rows = rows, out, held, d]() mutable {
            const auto& g = out.grad();
            auto& gr = rows.grad();
            for (std::size_t i = 0; i < held.size(); ++i)
                for (std::size_t j = 0; j < d; ++j)
                    gr[i * d + j] += g[held[i] * d + j];
        });
    }
    return out;
}

// ---- loss ----

// Mean negative log-softmax over non-pad positions of [t x v] logits.
template <typename T>
TensorT<T> cross_entropy(const TensorT<T>& logits, const std::vector<int>& targets,
                         int pad_id) {
    if (logits.rank() != 2)
        throw std::invalid_argument("cross_entropy: logits must be [t x v], got " +
                                    shape_str(logits.shape()));
    const std::size_t t = logits.dim(0), v = logits.dim(1);
    if (targets.size() != t)
        throw std::invalid_argument("cross_entropy: " + std::to_string(targets.size()) +
                                    " targets for " + std::to_string(t) + " rows");
    std::size_t n_live = 0;
    for (std::size_t i = 0; i < t; ++i) {
        if (targets[i] == pad_id) continue;
        if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= v)
            throw std::out_of_range("cross_entropy: target " +
                                    std::to_string(targets[i]) + " at position " +
                                    std::to_string(i) + " outside vocab of " +
                                    std::to_string(v));
        ++n_live;
    }
    if (n_live == 0)
        throw std::invalid_argument("cross_entropy: every target is pad, nothing to supervise");
    const bool track = detail::tracked(logits);
    TensorT<T> out = detail::make_output<T>({}, track);
    TensorT<T> probs = TensorT<T>::zeros(logits.shape());  // saved for backward
    const auto& lv = logits.values();
    auto& pv = probs.values();
    T loss = T(0);
    for (std::size_t i = 0; i < t; ++i) {
        const T* row = lv.data() + i * v;
        T mx = row[0];
        for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
        T denom = T(0);
        for (std::size_t j = 0; j < v; ++j) {
            const T e = std::exp(row[j] - mx);
            pv[i * v + j] = e;
            denom += e;
        }
        for (std::size_t j = 0; j < v; ++j) pv[i * v + j] /= denom;
        if (targets[i] != pad_id)
            loss += std::log(denom) + mx - row[targets[i]];
    }
    out.values()[0] = loss / static_cast<T>(n_live);
    if (track) {
        std::vector<int> held = targets;
        detail::record<T>([logits = logits, out, probs, held, pad_id, t, v, n_live]() mutable {
            const T g = out.grad()[0] / static_cast<T>(n_live);
            const auto& pv2 = probs.values();
            auto& gl = logits.grad();
            for (std::size_t i = 0; i < t; ++i) {
                if (held[i] == pad_id) continue;
                for (std::size_t j = 0; j < v; ++j)
                    gl[i * v + j] += g * pv2[i * v + j];
                gl[i * v + static_cast<std::size_t>(held[i])] -= g;
            }
        });
    }
    return out;
}

// ---- dropout ----

template <typename T>
TensorT<T> dropout(const TensorT<T>& a, double rate, bool train, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0)
        throw std::invalid_argument("dropout: rate must be in [0,1), got " +
                                    std::to_string(rate));
    if (!train || rate == 0.0) return a;
    const bool track = detail::tracked(a);
    TensorT<T> out = detail::make_output<T>(a.shape(), track);
    std::vector<T> mask(a.size());
    const T keep_scale = T(1) / static_cast<T>(1.0 - rate);
    for (auto& m : mask) m = rng.uniform() >= rate ? keep_scale : T(0);
    const auto& av = a.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * mask[i];
    if (track) {
        detail::record<T>([a = a, out, mask]() mutable {
            const auto& g = out.grad();
            auto& ga = a.grad();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * mask[i];
        });
    }
    return out;
}

// ---- checks ----

template <typename T>
bool all_finite(const TensorT<T>& a) {
    for (T v : a.values())
        if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
}

template <typename T>
void check_finite(const TensorT<T>& a, const std::string& context) {
    if (!all_finite(a))
        throw std::runtime_error(context + ": non-finite value encountered");
}

// Max over coordinates of |analytic - central difference| relative error for a
// scalar-valued function of x. f must be deterministic in x.
template <typename T, typename Fn>
double grad_check(Fn&& f, TensorT<T> x, double h) {
    x.set_requires_grad(true);
    x.zero_grad();
    std::vector<double> analytic;
    {
        TapeT<T> tape;
        typename TapeT<T>::Scope scope(tape);
        TensorT<T> loss = f(x);
        if (loss.size() != 1)
            throw std::invalid_argument("grad_check: f must be scalar-valued");
        tape.backward(loss);
        analytic.assign(x.grad().begin(), x.grad().end());
    }
    double max_rel = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const T orig = x.values()[i];
        x.values()[i] = orig + static_cast<T>(h);
        const double fp = static_cast<double>(f(x).item());
        x.values()[i] = orig - static_cast<T>(h);
        const double fm = static_cast<double>(f(x).item());
        x.values()[i] = orig;
        const double numeric = (fp - fm) / (2.0 * h);
        const double denom =
            std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
        max_rel = std::max(max_rel, std::abs(analytic[i] - numeric) / denom);
    }
    return max_rel;
}

// Learnable matrix drawn from uniform(-1/sqrt(fan_in), +1/sqrt(fan_in));
// fan_in is the contracted width of the product the matrix participates in.
template <typename T>
TensorT<T> init_matrix(std::size_t rows, std::size_t cols, std::size_t fan_in,
                       Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<T> vals(rows * cols);
    for (auto& v : vals) v = static_cast<T>(rng.uniform(-bound, bound));
    auto m = TensorT<T>::from_values({rows, cols}, std::move(vals));
    m.set_requires_grad(true);
    return m;
}

using Tensor = TensorT<float>;
using Tape = TapeT<float>;

}  // namespace dgcn
