#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "dgcn/geometry.hpp"

namespace dgcn {

// Directed labeled edge: src influences dst, labeled with the relation of src
// to dst ("src is <rel> dst").
struct SpatialEdge {
    int src = 0;
    int dst = 0;
    Relation rel = Relation::none;
};

struct SpatialGraph {
    std::size_t n_nodes = 0;
    std::vector<SpatialEdge> edges;
};

struct SpatialGraphOptions {
    RelationPolicy policy;
    bool self_loops = true;
};

// One directed edge per ordered related pair, plus identity self loops. The
// relation rules are dual (inside/cover, opposite direction sectors), so a
// related pair always contributes edges in both directions.
inline SpatialGraph build_spatial_graph(const std::vector<Box>& boxes,
                                        double image_w, double image_h,
                                        const SpatialGraphOptions& opt = {}) {
    SpatialGraph g;
    g.n_nodes = boxes.size();
    for (std::size_t i = 0; i < boxes.size(); ++i)
        check_box(boxes[i], "build_spatial_graph[" + std::to_string(i) + "]");
    for (std::size_t s = 0; s < boxes.size(); ++s) {
        if (opt.self_loops)
            g.edges.push_back({static_cast<int>(s), static_cast<int>(s),
                               Relation::identity});
        for (std::size_t d = 0; d < boxes.size(); ++d) {
            if (s == d) continue;
            const Relation r =
                classify_relation(boxes[s], boxes[d], image_w, image_h, opt.policy);
            if (r != Relation::none)
                g.edges.push_back({static_cast<int>(s), static_cast<int>(d), r});
        }
    }
    return g;
}

// Indices of the k nearest corpus rows to the query row under squared
// Euclidean distance. The query itself is excluded; ties break toward the
// lower index; k larger than the rest of the corpus is clamped.
template <typename T>
std::vector<std::size_t> knn_select(const std::vector<std::vector<T>>& corpus,
                                    std::size_t query, std::size_t k) {
    if (query >= corpus.size())
        throw std::out_of_range("knn_select: query " + std::to_string(query) +
                                " outside corpus of " +
                                std::to_string(corpus.size()));
    const std::size_t dim = corpus[query].size();
    for (std::size_t i = 0; i < corpus.size(); ++i)
        if (corpus[i].size() != dim)
            throw std::invalid_argument("knn_select: row " + std::to_string(i) +
                                        " has width " +
                                        std::to_string(corpus[i].size()) +
                                        ", expected " + std::to_string(dim));
    if (corpus.size() <= 1) return {};
    k = std::min(k, corpus.size() - 1);

    std::vector<std::pair<double, std::size_t>> scored;
    scored.reserve(corpus.size() - 1);
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        if (i == query) continue;
        double d = 0.0;
        for (std::size_t j = 0; j < dim; ++j) {
            const double diff = static_cast<double>(corpus[i][j]) -
                                static_cast<double>(corpus[query][j]);
            d += diff * diff;
        }
        scored.emplace_back(d, i);
    }
    std::sort(scored.begin(), scored.end());  // distance, then index
    std::vector<std::size_t> out(k);
    for (std::size_t i = 0; i < k; ++i) out[i] = scored[i].second;
    return out;
}

}  // namespace dgcn
