#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "dgcn/tensor.hpp"

namespace dgcn {

// ---- parameter bundles ----

// Scaled dot-product attention with one projection triple per head and a
// shared output map back to model width.
template <typename T>
struct AttentionParamsT {
    std::vector<TensorT<T>> w_q, w_k, w_v;  // each [d_model x d_head]
    TensorT<T> w_o;                         // [d_model x d_model]

    static AttentionParamsT init(std::size_t d_model, std::size_t n_heads, Rng& rng) {
        if (n_heads == 0 || d_model % n_heads != 0)
            throw std::invalid_argument("attention: d_model " + std::to_string(d_model) +
                                        " not divisible into " + std::to_string(n_heads) +
                                        " heads");
        AttentionParamsT p;
        const std::size_t d_head = d_model / n_heads;
        for (std::size_t h = 0; h < n_heads; ++h) {
            p.w_q.push_back(init_matrix<T>(d_model, d_head, d_model, rng));
            p.w_k.push_back(init_matrix<T>(d_model, d_head, d_model, rng));
            p.w_v.push_back(init_matrix<T>(d_model, d_head, d_model, rng));
        }
        p.w_o = init_matrix<T>(d_model, d_model, d_model, rng);
        return p;
    }

    std::size_t n_heads() const { return w_q.size(); }
    std::size_t d_head() const { return w_q.at(0).dim(1); }

    template <typename Visitor>
    void visit(const std::string& prefix, Visitor&& v) {
        for (std::size_t h = 0; h < w_q.size(); ++h) {
            const std::string hs = std::to_string(h);
            v(prefix + ".wq." + hs, w_q[h]);
            v(prefix + ".wk." + hs, w_k[h]);
            v(prefix + ".wv." + hs, w_v[h]);
        }
        v(prefix + ".wo", w_o);
    }
};

template <typename T>
struct LayerNormParamsT {
    TensorT<T> gain;
    TensorT<T> bias;

    static LayerNormParamsT init(std::size_t d) {
        LayerNormParamsT p;
        p.gain = TensorT<T>::full({d}, T(1));
        p.gain.set_requires_grad(true);
        p.bias = TensorT<T>::zeros({d}, /*requires_grad=*/true);
        return p;
    }

    template <typename Visitor>
    void visit(const std::string& prefix, Visitor&& v) {
        v(prefix + ".gain", gain);
        v(prefix + ".bias", bias);
    }
};

template <typename T>
struct FeedForwardParamsT {
    TensorT<T> w1;  // [d_model x d_ff]
    TensorT<T> b1;  // [d_ff]
    TensorT<T> w2;  // [d_ff x d_model]
    TensorT<T> b2;  // [d_model]

    static FeedForwardParamsT init(std::size_t d_model, std::size_t d_ff, Rng& rng) {
        FeedForwardParamsT p;
        p.w1 = init_matrix<T>(d_model, d_ff, d_model, rng);
        p.b1 = TensorT<T>::zeros({d_ff}, true);
        p.w2 = init_matrix<T>(d_ff, d_model, d_ff, rng);
        p.b2 = TensorT<T>::zeros({d_model}, true);
        return p;
    }

    template <typename Visitor>
    void visit(const std::string& prefix, Visitor&& v) {
        v(prefix + ".w1", w1);
        v(prefix + ".b1", b1);
        v(prefix + ".w2", w2);
        v(prefix + ".b2", b2);
    }
};

// ---- building blocks ----

constexpr double kLayerNormEps = 1e-5;

// keep != nullptr restricts each query row to the key columns whose mask byte
// is 1; the mask is laid out [n_queries x n_keys]. Keys and values must pair
// up row for row.
template <typename T>
TensorT<T> multi_head_attention(const TensorT<T>& queries, const TensorT<T>& keys,
                                const TensorT<T>& values,
                                const AttentionParamsT<T>& p,
                                const std::vector<std::uint8_t>* keep = nullptr) {
    if (queries.rank() != 2 || keys.rank() != 2 || values.rank() != 2)
        throw std::invalid_argument("attention: inputs must be rank-2");
    if (keys.dim(0) != values.dim(0))
        throw std::invalid_argument("attention: " + std::to_string(keys.dim(0)) +
                                    " keys for " + std::to_string(values.dim(0)) +
                                    " values");
    if (queries.dim(1) != keys.dim(1) || queries.dim(1) != values.dim(1))
        throw std::invalid_argument("attention: width mismatch " +
                                    shape_str(queries.shape()) + " vs " +
                                    shape_str(keys.shape()) + " vs " +
                                    shape_str(values.shape()));
    if (keep && keep->size() != queries.dim(0) * keys.dim(0))
        throw std::invalid_argument("attention: mask must be [n_queries x n_keys]");
    const T inv_sqrt_dh =
        static_cast<T>(1.0 / std::sqrt(static_cast<double>(p.d_head())));
    std::vector<TensorT<T>> heads;
    for (std::size_t h = 0; h < p.n_heads(); ++h) {
        auto q = matmul(queries, p.w_q[h]);
        auto k = matmul(keys, p.w_k[h]);
        auto v = matmul(values, p.w_v[h]);
        auto scores = scale(matmul(q, transpose(k)), inv_sqrt_dh);
        auto attn = keep ? masked_softmax(scores, *keep) : softmax(scores, 1);
        heads.push_back(matmul(attn, v));
    }
    auto merged = heads.size() == 1 ? heads[0] : concat(heads, 1);
    return matmul(merged, p.w_o);
}

// Residual connection followed by layer normalization.
template <typename T>
TensorT<T> add_norm(const TensorT<T>& x, const TensorT<T>& sublayer,
                    const LayerNormParamsT<T>& ln) {
    return layer_norm(add(x, sublayer), ln.gain, ln.bias,
                      static_cast<T>(kLayerNormEps));
}

template <typename T>
TensorT<T> feed_forward(const TensorT<T>& x, const FeedForwardParamsT<T>& p) {
    auto hidden = relu(add_bias(matmul(x, p.w1), p.b1));
    return add_bias(matmul(hidden, p.w2), p.b2);
}

template <typename T>
struct EncoderLayerParamsT {
    AttentionParamsT<T> self_attn;
    LayerNormParamsT<T> ln_attn;
    FeedForwardParamsT<T> ffn;
    LayerNormParamsT<T> ln_ffn;

    static EncoderLayerParamsT init(std::size_t d_model, std::size_t n_heads,
                                    std::size_t d_ff, Rng& rng) {
        return {AttentionParamsT<T>::init(d_model, n_heads, rng),
                LayerNormParamsT<T>::init(d_model),
                FeedForwardParamsT<T>::init(d_model, d_ff, rng),
                LayerNormParamsT<T>::init(d_model)};
    }

    template <typename Visitor>
    void visit(const std::string& prefix, Visitor&& v) {
        self_attn.visit(prefix + ".self", v);
        ln_attn.visit(prefix + ".ln_attn", v);
        ffn.visit(prefix + ".ffn", v);
        ln_ffn.visit(prefix + ".ln_ffn", v);
    }
};

template <typename T>
TensorT<T> encoder_layer_forward(const TensorT<T>& x, const EncoderLayerParamsT<T>& p) {
    auto attended = add_norm(x, multi_head_attention(x, x, x, p.self_attn), p.ln_attn);
    return add_norm(attended, feed_forward(attended, p.ffn), p.ln_ffn);
}

template <typename T>
struct DecoderLayerParamsT {
    AttentionParamsT<T> self_attn;
    LayerNormParamsT<T> ln_self;
    AttentionParamsT<T> cross_attn;
    LayerNormParamsT<T> ln_cross;
    FeedForwardParamsT<T> ffn;
    LayerNormParamsT<T> ln_ffn;

    static DecoderLayerParamsT init(std::size_t d_model, std::size_t n_heads,
                                    std::size_t d_ff, Rng& rng) {
        return {AttentionParamsT<T>::init(d_model, n_heads, rng),
                LayerNormParamsT<T>::init(d_model),
                AttentionParamsT<T>::init(d_model, n_heads, rng),
                LayerNormParamsT<T>::init(d_model),
                FeedForwardParamsT<T>::init(d_model, d_ff, rng),
                LayerNormParamsT<T>::init(d_model)};
    }

    template <typename Visitor>
    void visit(const std::string& prefix, Visitor&& v) {
        self_attn.visit(prefix + ".self", v);
        ln_self.visit(prefix + ".ln_self", v);
        cross_attn.visit(prefix + ".cross", v);
        ln_cross.visit(prefix + ".ln_cross", v);
        ffn.visit(prefix + ".ffn", v);
        ln_ffn.visit(prefix + ".ln_ffn", v);
    }
};

template <typename T>
TensorT<T> decoder_layer_forward(const TensorT<T>& x, const TensorT<T>& memory,
                                 const DecoderLayerParamsT<T>& p,
                                 const std::vector<std::uint8_t>& causal_keep) {
    auto self_att = add_norm(
        x, multi_head_attention(x, x, x, p.self_attn, &causal_keep), p.ln_self);
    auto cross_att = add_norm(
        self_att, multi_head_attention(self_att, memory, memory, p.cross_attn),
        p.ln_cross);
    return add_norm(cross_att, feed_forward(cross_att, p.ffn), p.ln_ffn);
}

// ---- positions and masks ----

// Interleaved sine/cosine position table: even columns sin, odd columns cos,
// wavelengths spaced geometrically from 2*pi up to 10000*2*pi.
template <typename T>
TensorT<T> sinusoidal_positions(std::size_t n, std::size_t d) {
    if (d == 0) throw std::invalid_argument("sinusoidal_positions: zero width");
    std::vector<T> vals(n * d);
    for (std::size_t pos = 0; pos < n; ++pos)
        for (std::size_t j = 0; j < d; ++j) {
            const double exponent =
                static_cast<double>(2 * (j / 2)) / static_cast<double>(d);
            const double angle =
                static_cast<double>(pos) / std::pow(10000.0, exponent);
            vals[pos * d + j] =
                static_cast<T>(j % 2 == 0 ? std::sin(angle) : std::cos(angle));
        }
    return TensorT<T>::from_values({n, d}, std::move(vals));
}

// Lower-triangular keep mask: position i may attend to positions 0..i.
inline std::vector<std::uint8_t> causal_keep_mask(std::size_t n) {
    std::vector<std::uint8_t> keep(n * n, 0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j <= i; ++j) keep[i * n + j] = 1;
    return keep;
}

}  // namespace dgcn
