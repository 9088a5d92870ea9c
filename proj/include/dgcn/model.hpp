#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "dgcn/beam.hpp"
#include "dgcn/gcn.hpp"
#include "dgcn/graph.hpp"
#include "dgcn/transformer.hpp"

namespace dgcn {

// Which visual representation feeds the encoder stack. Two ingredients can
// be switched independently: the object-level stream (raw region features or
// a relation-aware convolution over the region graph) and the image-level
// stream (a pooled image vector, optionally convolved with its nearest
// corpus neighbors). Fused modes concatenate the image vector onto every
// object row.
//   raw_regions             - region features projected directly (no graph work)
//   object_gcn              - convolved region features only
//   pooled_image            - single pooled image vector only
//   image_gcn               - single image vector convolved with neighbors
//   object_gcn_pooled_image - convolved regions fused with the raw pooled vector
//   raw_regions_image_gcn   - raw regions fused with the convolved image vector
//   dual_gcn                - both convolutions fused (full front end)
enum class EncoderMode {
    raw_regions,
    object_gcn,
    pooled_image,
    image_gcn,
    object_gcn_pooled_image,
    raw_regions_image_gcn,
    dual_gcn,
};

enum class DecoderKind { transformer, recurrent };

inline const char* encoder_mode_name(EncoderMode m) {
    switch (m) {
        case EncoderMode::raw_regions: return "raw_regions";
        case EncoderMode::object_gcn: return "object_gcn";
        case EncoderMode::pooled_image: return "pooled_image";
        case EncoderMode::image_gcn: return "image_gcn";
        case EncoderMode::object_gcn_pooled_image: return "object_gcn_pooled_image";
        case EncoderMode::raw_regions_image_gcn: return "raw_regions_image_gcn";
        case EncoderMode::dual_gcn: return "dual_gcn";
    }
    return "unknown";
}

inline EncoderMode encoder_mode_from_name(const std::string& s) {
    if (s == "raw_regions") return EncoderMode::raw_regions;
    if (s == "object_gcn") return EncoderMode::object_gcn;
    if (s == "pooled_image") return EncoderMode::pooled_image;
    if (s == "image_gcn") return EncoderMode::image_gcn;
    if (s == "object_gcn_pooled_image") return EncoderMode::object_gcn_pooled_image;
    if (s == "raw_regions_image_gcn") return EncoderMode::raw_regions_image_gcn;
    if (s == "dual_gcn") return EncoderMode::dual_gcn;
    throw std::invalid_argument("unknown encoder mode '" + s + "'");
}

inline const char* decoder_kind_name(DecoderKind k) {
    return k == DecoderKind::transformer ? "transformer" : "recurrent";
}

inline DecoderKind decoder_kind_from_name(const std::string& s) {
    if (s == "transformer") return DecoderKind::transformer;
    if (s == "recurrent") return DecoderKind::recurrent;
    throw std::invalid_argument("unknown decoder kind '" + s + "'");
}

struct ModelConfig {
    std::size_t vocab_size = 0;
    std::size_t feature_dim = 64;   // width of detector region features
    std::size_t gcn_dim = 32;       // width of graph-convolved embeddings
    std::size_t d_model = 64;
    std::size_t n_heads = 2;
    std::size_t n_layers = 2;
    std::size_t embed_dim = 64;     // word embedding width
    std::size_t knn_k = 6;          // similar images aggregated per image
    std::size_t max_len = 16;       // generation cap, end marker included
    EncoderMode encoder_mode = EncoderMode::dual_gcn;
    DecoderKind decoder_kind = DecoderKind::transformer;
    bool self_loops = true;
    double dropout = 0.0;

    std::size_t d_ff() const { return 4 * d_model; }

    bool uses_object_gcn() const {
        return encoder_mode == EncoderMode::object_gcn ||
               encoder_mode == EncoderMode::object_gcn_pooled_image ||
               encoder_mode == EncoderMode::dual_gcn;
    }

    bool uses_image_gcn() const {
        return encoder_mode == EncoderMode::image_gcn ||
               encoder_mode == EncoderMode::raw_regions_image_gcn ||
               encoder_mode == EncoderMode::dual_gcn;
    }

    // Width of the vectors the image-level convolution ingests: pooled
    // convolved regions in the full front end, pooled raw features otherwise.
    std::size_t image_gcn_input_dim() const {
        return encoder_mode == EncoderMode::dual_gcn ? gcn_dim : feature_dim;
    }

    std::size_t encoder_input_dim() const {
        switch (encoder_mode) {
            case EncoderMode::raw_regions: return feature_dim;
            case EncoderMode::object_gcn: return gcn_dim;
            case EncoderMode::pooled_image: return feature_dim;
            case EncoderMode::image_gcn: return gcn_dim;
            case EncoderMode::object_gcn_pooled_image:
                return gcn_dim + feature_dim;
            case EncoderMode::raw_regions_image_gcn:
                return feature_dim + gcn_dim;
            case EncoderMode::dual_gcn: return 2 * gcn_dim;
        }
        return 0;
    }

    void validate() const {
        if (vocab_size <= static_cast<std::size_t>(kUnkId))
            throw std::invalid_argument("model config: vocab_size " +
                                        std::to_string(vocab_size) +
                                        " cannot hold the reserved tokens");
        if (feature_dim == 0 || gcn_dim == 0 || d_model == 0 || embed_dim == 0)
            throw std::invalid_argument("model config: zero width");
        if (n_heads == 0 || d_model % n_heads != 0)
            throw std::invalid_argument("model config: d_model " +
                                        std::to_string(d_model) +
                                        " not divisible into " +
                                        std::to_string(n_heads) + " heads");
        if (max_len == 0)
            throw std::invalid_argument("model config: max_len must be positive");
        if (dropout < 0.0 || dropout >= 1.0)
            throw std::invalid_argument("model config: dropout must be in [0,1)");
    }
};

// Linear adapter from fused visual width to the encoder width.
template <typename T>
TensorT<T> input_project(const TensorT<T>& u, const TensorT<T>& w,
                         const TensorT<T>& b) {
    if (u.rank() != 2 || w.rank() != 2 || u.dim(1) != w.dim(0))
        throw std::invalid_argument("input_project: cannot map " +
                                    shape_str(u.shape()) + " through " +
                                    shape_str(w.shape()));
    return add_bias(matmul(u, w), b);
}

// Gated recurrent cell, used by the recurrent decoder baseline.
template <typename T>
struct GruParamsT {
    TensorT<T> wz, uz, bz;  // update gate
    TensorT<T> wr, ur, br;  // reset gate
    TensorT<T> wh, uh, bh;  // candidate state

    static GruParamsT init(std::size_t d, Rng& rng) {
        GruParamsT p;
        p.wz = init_matrix<T>(d, d, d, rng);
        p.uz = init_matrix<T>(d, d, d, rng);
        p.bz = TensorT<T>::zeros({d}, true);
        p.wr = init_matrix<T>(d, d, d, rng);
        p.ur = init_matrix<T>(d, d, d, rng);
        p.br = TensorT<T>::zeros({d}, true);
        p.wh = init_matrix<T>(d, d, d, rng);
        p.uh = init_matrix<T>(d, d, d, rng);
        p.bh = TensorT<T>::zeros({d}, true);
        return p;
    }

    // previous state h and input x are [1 x d]
    TensorT<T> step(const TensorT<T>& x, const TensorT<T>& h) const {
        auto z = sigmoid(add_bias(add(matmul(x, wz), matmul(h, uz)), bz));
        auto r = sigmoid(add_bias(add(matmul(x, wr), matmul(h, ur)), br));
        auto cand = tanh_op(add_bias(add(matmul(x, wh), matmul(mul(r, h), uh)), bh));
        // h' = (1 - z) * h + z * cand
        return add(add(h, scale(mul(z, h), T(-1))), mul(z, cand));
    }

    template <typename Visitor>
    void visit(const std::string& prefix, Visitor&& v) {
        v(prefix + ".wz", wz); v(prefix + ".uz", uz); v(prefix + ".bz", bz);
        v(prefix + ".wr", wr); v(prefix + ".ur", ur); v(prefix + ".br", br);
        v(prefix + ".wh", wh); v(prefix + ".uh", uh); v(prefix + ".bh", bh);
    }
};

// Generated caption: token ids starting with the begin marker (the end marker
// is kept when reached), one log probability per generated token, and a
// finished flag (end marker reached or length cap hit — always true for a
// completed search).
struct CaptionResult {
    std::vector<int> tokens;
    std::vector<double> step_log_probs;
    double log_prob = 0.0;
    bool finished = false;
};

// The captioning network: region features run through the configured visual
// front end into a transformer encoder; captions decode either through a
// causally masked transformer stack or a recurrent baseline cell.
template <typename T>
class CaptionModelT {
public:
    CaptionModelT(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
        cfg_.validate();
        if (cfg_.uses_object_gcn())
            object_gcn_ = ObjectGcnParamsT<T>::init(cfg_.feature_dim, cfg_.gcn_dim, rng);
        if (cfg_.uses_image_gcn())
            image_gcn_ = ImageGcnParamsT<T>::init(cfg_.image_gcn_input_dim(),
                                                  cfg_.gcn_dim, rng);
        enc_in_w_ = init_matrix<T>(cfg_.encoder_input_dim(), cfg_.d_model,
                                   cfg_.encoder_input_dim(), rng);
        enc_in_b_ = TensorT<T>::zeros({cfg_.d_model}, true);
        for (std::size_t l = 0; l < cfg_.n_layers; ++l)
            enc_layers_.push_back(EncoderLayerParamsT<T>::init(
                cfg_.d_model, cfg_.n_heads, cfg_.d_ff(), rng));
        embed_ = init_matrix<T>(cfg_.vocab_size, cfg_.embed_dim, cfg_.embed_dim, rng);
        text_in_w_ = init_matrix<T>(cfg_.embed_dim, cfg_.d_model, cfg_.embed_dim, rng);
        text_in_b_ = TensorT<T>::zeros({cfg_.d_model}, true);
        if (cfg_.decoder_kind == DecoderKind::transformer) {
            for (std::size_t l = 0; l < cfg_.n_layers; ++l)
                dec_layers_.push_back(DecoderLayerParamsT<T>::init(
                    cfg_.d_model, cfg_.n_heads, cfg_.d_ff(), rng));
        } else {
            gru_ = GruParamsT<T>::init(cfg_.d_model, rng);
        }
        out_w_ = init_matrix<T>(cfg_.d_model, cfg_.vocab_size, cfg_.d_model, rng);
        out_b_ = TensorT<T>::zeros({cfg_.vocab_size}, true);
    }

    const ModelConfig& config() const { return cfg_; }

    // Visual front end + encoder stack. neighbors are frozen pooled embeddings
    // of similar images; they only matter when the image-level convolution is
    // in play.
    TensorT<T> encode(const TensorT<T>& features, const SpatialGraph& graph,
                      const std::vector<std::vector<T>>& neighbors,
                      bool train = false, Rng* dropout_rng = nullptr) const {
        TensorT<T> visual;
        switch (cfg_.encoder_mode) {
            case EncoderMode::raw_regions:
                visual = features;
                break;
            case EncoderMode::object_gcn:
                visual = object_gcn_forward(features, graph, object_gcn_);
                break;
            case EncoderMode::pooled_image:
                visual = reshape(pool_image(features), {1, cfg_.feature_dim});
                break;
            case EncoderMode::image_gcn: {
                auto u = image_gcn_forward(pool_image(features), neighbors,
                                           image_gcn_);
                visual = reshape(u, {1, cfg_.gcn_dim});
                break;
            }
            case EncoderMode::object_gcn_pooled_image: {
                auto h = object_gcn_forward(features, graph, object_gcn_);
                visual = fuse(h, pool_image(features));
                break;
            }
            case EncoderMode::raw_regions_image_gcn: {
                auto u = image_gcn_forward(pool_image(features), neighbors,
                                           image_gcn_);
                visual = fuse(features, u);
                break;
            }
            case EncoderMode::dual_gcn: {
                auto h = object_gcn_forward(features, graph, object_gcn_);
                auto u = image_gcn_forward(pool_image(h), neighbors, image_gcn_);
                visual = fuse(h, u);
                break;
            }
        }
        auto x = input_project(visual, enc_in_w_, enc_in_b_);
        x = maybe_dropout(x, train, dropout_rng);
        for (const auto& layer : enc_layers_) {
            x = encoder_layer_forward(x, layer);
            x = maybe_dropout(x, train, dropout_rng);
        }
        return x;
    }

    // Pooled object-level embedding used to relate images to each other; it
    // is also what the image-level convolution ingests, so neighbor vectors
    // always live in the same space as the center image. Runs outside any
    // tape; call it only between training steps.
    std::vector<T> pooled_embedding(const TensorT<T>& features,
                                    const SpatialGraph& graph) const {
        TensorT<T> pooled;
        if (cfg_.uses_object_gcn())
            pooled = pool_image(object_gcn_forward(features, graph, object_gcn_));
        else
            pooled = pool_image(features);
        return pooled.values();
    }

    // Teacher-forcing logits [len(input_ids) x V]; input must begin with the
    // begin marker.
    TensorT<T> decode_logits(const TensorT<T>& memory,
                             const std::vector<int>& input_ids, bool train = false,
                             Rng* dropout_rng = nullptr) const {
        if (input_ids.empty() || input_ids.front() != kBosId)
            throw std::invalid_argument("decode: input must begin with the begin marker");
        auto emb = embedding_lookup(embed_, input_ids);
        if (cfg_.decoder_kind == DecoderKind::transformer)
            return transformer_decode(memory, emb, train, dropout_rng);
        return recurrent_decode(memory, emb, train, dropout_rng);
    }

    // Mean cross entropy of the caption given the image. caption_ids carry
    // neither begin nor end marker.
    TensorT<T> loss(const TensorT<T>& features, const SpatialGraph& graph,
                    const std::vector<std::vector<T>>& neighbors,
                    const std::vector<int>& caption_ids, bool train = false,
                    Rng* dropout_rng = nullptr) const {
        if (caption_ids.empty())
            throw std::invalid_argument("loss: empty caption");
        std::vector<int> input = {kBosId};
        input.insert(input.end(), caption_ids.begin(), caption_ids.end());
        std::vector<int> targets = caption_ids;
        targets.push_back(kEosId);
        auto memory = encode(features, graph, neighbors, train, dropout_rng);
        auto logits = decode_logits(memory, input, train, dropout_rng);
        return cross_entropy(logits, targets, kPadId);
    }

    CaptionResult generate(const TensorT<T>& features, const SpatialGraph& graph,
                           const std::vector<std::vector<T>>& neighbors,
                           const BeamConfig& beam) const {
        auto memory = encode(features, graph, neighbors);
        return generate_from_memory(memory, beam);
    }

    CaptionResult generate_from_memory(const TensorT<T>& memory,
                                       const BeamConfig& beam) const {
        auto step = [&](const std::vector<int>& prefix) {
            std::vector<int> input = {kBosId};
            input.insert(input.end(), prefix.begin(), prefix.end());
            auto logits = decode_logits(memory, input);
            return last_row_log_softmax(logits);
        };
        BeamHypothesis best = beam_search(step, kEosId, cfg_.vocab_size, beam);
        CaptionResult r;
        r.tokens = {kBosId};
        r.tokens.insert(r.tokens.end(), best.tokens.begin(), best.tokens.end());
        if (best.ended_by_eos) r.tokens.push_back(kEosId);
        r.step_log_probs = best.step_log_probs;
        r.log_prob = best.log_prob;
        r.finished = true;  // ended by the end marker or by the length cap
        return r;
    }

    template <typename Visitor>
    void visit_params(Visitor&& v) {
        if (cfg_.uses_object_gcn()) object_gcn_.visit("object_gcn", v);
        if (cfg_.uses_image_gcn()) image_gcn_.visit("image_gcn", v);
        v("enc_in.w", enc_in_w_);
        v("enc_in.b", enc_in_b_);
        for (std::size_t l = 0; l < enc_layers_.size(); ++l)
            enc_layers_[l].visit("enc." + std::to_string(l), v);
        v("embed.table", embed_);
        v("text_in.w", text_in_w_);
        v("text_in.b", text_in_b_);
        for (std::size_t l = 0; l < dec_layers_.size(); ++l)
            dec_layers_[l].visit("dec." + std::to_string(l), v);
        if (cfg_.decoder_kind == DecoderKind::recurrent) gru_.visit("gru", v);
        v("out.w", out_w_);
        v("out.b", out_b_);
    }

    std::vector<TensorT<T>> parameters() {
        std::vector<TensorT<T>> out;
        visit_params([&](const std::string&, TensorT<T>& t) { out.push_back(t); });
        return out;
    }

private:
    TensorT<T> maybe_dropout(const TensorT<T>& x, bool train, Rng* rng) const {
        if (!train || cfg_.dropout == 0.0) return x;
        if (!rng)
            throw std::invalid_argument("dropout requested without a random stream");
        return dropout(x, cfg_.dropout, true, *rng);
    }

    TensorT<T> transformer_decode(const TensorT<T>& memory, const TensorT<T>& emb,
                                  bool train, Rng* dropout_rng) const {
        const std::size_t t = emb.dim(0);
        auto x = add(emb, sinusoidal_positions<T>(t, cfg_.embed_dim));
        x = add_bias(matmul(x, text_in_w_), text_in_b_);
        x = maybe_dropout(x, train, dropout_rng);
        const auto keep = causal_keep_mask(t);
        for (const auto& layer : dec_layers_) {
            x = decoder_layer_forward(x, memory, layer, keep);
            x = maybe_dropout(x, train, dropout_rng);
        }
        return add_bias(matmul(x, out_w_), out_b_);
    }

    TensorT<T> recurrent_decode(const TensorT<T>& memory, const TensorT<T>& emb,
                                bool train, Rng* dropout_rng) const {
        const std::size_t t = emb.dim(0);
        auto projected = add_bias(matmul(emb, text_in_w_), text_in_b_);
        projected = maybe_dropout(projected, train, dropout_rng);
        auto ctx = reshape(mean(memory, 0), {1, cfg_.d_model});
        auto inputs = split(projected, 0, std::vector<std::size_t>(t, 1));
        TensorT<T> h = ctx;
        std::vector<TensorT<T>> rows;
        for (std::size_t i = 0; i < t; ++i) {
            h = gru_.step(add(inputs[i], ctx), h);
            rows.push_back(add_bias(matmul(h, out_w_), out_b_));
        }
        return rows.size() == 1 ? rows[0] : concat(rows, 0);
    }

    std::vector<double> last_row_log_softmax(const TensorT<T>& logits) const {
        const std::size_t v = logits.dim(1);
        const std::size_t t = logits.dim(0);
        std::vector<double> out(v);
        const auto& lv = logits.values();
        double mx = static_cast<double>(lv[(t - 1) * v]);
        for (std::size_t j = 1; j < v; ++j)
            mx = std::max(mx, static_cast<double>(lv[(t - 1) * v + j]));
        double denom = 0.0;
        for (std::size_t j = 0; j < v; ++j)
            denom += std::exp(static_cast<double>(lv[(t - 1) * v + j]) - mx);
        const double log_denom = std::log(denom);
        for (std::size_t j = 0; j < v; ++j)
            out[j] = static_cast<double>(lv[(t - 1) * v + j]) - mx - log_denom;
        return out;
    }

    ModelConfig cfg_;
    ObjectGcnParamsT<T> object_gcn_;
    ImageGcnParamsT<T> image_gcn_;
    TensorT<T> enc_in_w_, enc_in_b_;
    std::vector<EncoderLayerParamsT<T>> enc_layers_;
    TensorT<T> embed_;
    TensorT<T> text_in_w_, text_in_b_;
    std::vector<DecoderLayerParamsT<T>> dec_layers_;
    GruParamsT<T> gru_;
    TensorT<T> out_w_, out_b_;
};

using CaptionModel = CaptionModelT<float>;

}  // namespace dgcn
