#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "dgcn/graph.hpp"
#include "dgcn/tensor.hpp"

namespace dgcn {

// Relation-conditioned graph convolution over detected regions: every incoming
// edge contributes W[rel] * h_src + b to its destination, then ReLU.
template <typename T>
struct ObjectGcnParamsT {
    std::vector<TensorT<T>> w;  // one [d_out x d_in] matrix per relation class
    TensorT<T> b;               // [d_out], added once per edge

    static ObjectGcnParamsT init(std::size_t d_in, std::size_t d_out, Rng& rng) {
        ObjectGcnParamsT p;
        for (std::size_t r = 0; r < kRelationClassCount; ++r)
            p.w.push_back(init_matrix<T>(d_out, d_in, d_in, rng));
        p.b = TensorT<T>::zeros({d_out}, /*requires_grad=*/true);
        return p;
    }

    std::size_t d_in() const { return w.at(0).dim(1); }
    std::size_t d_out() const { return w.at(0).dim(0); }

    template <typename Visitor>
    void visit(const std::string& prefix, Visitor&& v) {
        for (std::size_t r = 0; r < w.size(); ++r)
            v(prefix + ".w." + relation_name(static_cast<Relation>(r)), w[r]);
        v(prefix + ".b", b);
    }
};

template <typename T>
TensorT<T> object_gcn_forward(const TensorT<T>& features, const SpatialGraph& graph,
                              const ObjectGcnParamsT<T>& params) {
    if (features.rank() != 2)
        throw std::invalid_argument("object_gcn: features must be [n x d], got " +
                                    shape_str(features.shape()));
    const std::size_t n = features.dim(0);
    if (graph.n_nodes != n)
        throw std::invalid_argument("object_gcn: graph has " +
                                    std::to_string(graph.n_nodes) +
                                    " nodes for " + std::to_string(n) + " feature rows");
    if (features.dim(1) != params.d_in())
        throw std::invalid_argument("object_gcn: feature width " +
                                    std::to_string(features.dim(1)) +
                                    " does not match weight width " +
                                    std::to_string(params.d_in()));

    std::vector<std::vector<int>> srcs(kRelationClassCount), dsts(kRelationClassCount);
    for (const auto& e : graph.edges) {
        const int r = static_cast<int>(e.rel);
        if (r < 0 || static_cast<std::size_t>(r) >= kRelationClassCount)
            throw std::invalid_argument("object_gcn: edge with relation class " +
                                        std::to_string(r));
        srcs[r].push_back(e.src);
        dsts[r].push_back(e.dst);
    }

    TensorT<T> acc = TensorT<T>::zeros({n, params.d_out()});
    for (std::size_t r = 0; r < kRelationClassCount; ++r) {
        if (srcs[r].empty()) continue;
        auto gathered = embedding_lookup(features, srcs[r]);
        auto messages = add_bias(matmul(gathered, transpose(params.w[r])), params.b);
        acc = add(acc, scatter_add_rows(messages, dsts[r], n));
    }
    return relu(acc);
}

// Mean of the region embeddings: one vector summarizing the whole image.
template <typename T>
TensorT<T> pool_image(const TensorT<T>& h) {
    if (h.rank() != 2 || h.dim(0) == 0)
        throw std::invalid_argument("pool_image: need a non-empty [n x d] matrix, got " +
                                    shape_str(h.shape()));
    return mean(h, 0);
}

// Graph convolution across images: the center node aggregates itself and its
// nearest-neighbor images under one shared linear map.
template <typename T>
struct ImageGcnParamsT {
    TensorT<T> w;  // [d_out x d_in]
    TensorT<T> b;  // [d_out]

    static ImageGcnParamsT init(std::size_t d_in, std::size_t d_out, Rng& rng) {
        ImageGcnParamsT p;
        p.w = init_matrix<T>(d_out, d_in, d_in, rng);
        p.b = TensorT<T>::zeros({d_out}, /*requires_grad=*/true);
        return p;
    }

    template <typename Visitor>
    void visit(const std::string& prefix, Visitor&& v) {
        v(prefix + ".w", w);
        v(prefix + ".b", b);
    }
};

// center: [d_in] live embedding of this image. neighbors: frozen pooled
// embeddings of the selected corpus images; they contribute to the sum but
// carry no gradient.
template <typename T>
TensorT<T> image_gcn_forward(const TensorT<T>& center,
                             const std::vector<std::vector<T>>& neighbors,
                             const ImageGcnParamsT<T>& params) {
    if (center.rank() != 1)
        throw std::invalid_argument("image_gcn: center must be [d], got " +
                                    shape_str(center.shape()));
    const std::size_t d = center.dim(0);
    std::vector<TensorT<T>> rows;
    rows.push_back(reshape(center, {1, d}));
    if (!neighbors.empty()) {
        std::vector<T> flat;
        flat.reserve(neighbors.size() * d);
        for (const auto& nb : neighbors) {
            if (nb.size() != d)
                throw std::invalid_argument("image_gcn: neighbor width " +
                                            std::to_string(nb.size()) +
                                            ", expected " + std::to_string(d));
            flat.insert(flat.end(), nb.begin(), nb.end());
        }
        rows.push_back(TensorT<T>::from_values({neighbors.size(), d}, std::move(flat)));
    }
    auto stack = rows.size() == 1 ? rows[0] : concat(rows, 0);
    auto messages = add_bias(matmul(stack, transpose(params.w)), params.b);
    const std::size_t count = neighbors.size() + 1;
    auto summed = scale(mean(messages, 0), static_cast<T>(count));
    return relu(summed);
}

// Rows [n x d_obj] each extended with the same image vector [d_img].
template <typename T>
TensorT<T> fuse(const TensorT<T>& object_rows, const TensorT<T>& image_vec) {
    if (object_rows.rank() != 2 || image_vec.rank() != 1)
        throw std::invalid_argument("fuse: need [n x d] rows and [d'] vector, got " +
                                    shape_str(object_rows.shape()) + " and " +
                                    shape_str(image_vec.shape()));
    return concat<T>({object_rows, broadcast_row(image_vec, object_rows.dim(0))}, 1);
}

}  // namespace dgcn
