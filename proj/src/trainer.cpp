#include "dgcn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>

#include "dgcn/metrics.hpp"
#include "dgcn/optim.hpp"

namespace dgcn {

namespace {

// derived-stream ids: even for shuffles, odd for dropout, per epoch
std::uint64_t shuffle_stream(std::size_t epoch) { return 2 * epoch; }
std::uint64_t dropout_stream(std::size_t epoch) { return 2 * epoch + 1; }

bool wants_neighbors(const CaptionModel& model) {
    return model.config().uses_image_gcn() && model.config().knn_k > 0;
}

}  // namespace

// ==== Sample preparation ====

std::vector<TrainSample> prepare_samples(const std::vector<SceneSample>& corpus,
                                         const Vocabulary& vocab,
                                         const ModelConfig& cfg,
                                         bool require_captions) {
    SpatialGraphOptions graph_opts;
    graph_opts.self_loops = cfg.self_loops;
    std::vector<TrainSample> out;
    out.reserve(corpus.size());
    for (const auto& scene : corpus) {
        if (scene.regions.empty())
            throw std::invalid_argument("prepare_samples: image " +
                                        std::to_string(scene.id) +
                                        " has no regions");
        if (require_captions && scene.references.empty())
            throw std::invalid_argument("prepare_samples: image " +
                                        std::to_string(scene.id) +
                                        " has no captions");
        TrainSample s;
        s.id = scene.id;
        std::vector<Box> boxes;
        std::vector<float> flat;
        flat.reserve(scene.regions.size() * cfg.feature_dim);
        for (const auto& r : scene.regions) {
            if (r.feature.size() != cfg.feature_dim)
                throw std::invalid_argument(
                    "prepare_samples: image " + std::to_string(scene.id) +
                    " has feature width " + std::to_string(r.feature.size()) +
                    ", model expects " + std::to_string(cfg.feature_dim));
            boxes.push_back(r.box);
            flat.insert(flat.end(), r.feature.begin(), r.feature.end());
        }
        s.features = Tensor::from_values({scene.regions.size(), cfg.feature_dim},
                                         std::move(flat));
        s.graph = build_spatial_graph(boxes, 1.0, 1.0, graph_opts);
        for (const auto& ref : scene.references) {
            s.caption_ids.push_back(vocab.encode(ref));
            s.references.push_back(ref);
        }
        out.push_back(std::move(s));
    }
    return out;
}

// ==== Neighbor retrieval ====

std::vector<std::vector<float>> pooled_corpus(
    const CaptionModel& model, const std::vector<TrainSample>& samples) {
    std::vector<std::vector<float>> pool;
    pool.reserve(samples.size());
    for (const auto& s : samples)
        pool.push_back(model.pooled_embedding(s.features, s.graph));
    return pool;
}

std::vector<std::vector<float>> nearest_rows(
    const std::vector<std::vector<float>>& pool, const std::vector<float>& query,
    std::size_t k, std::size_t exclude) {
    std::vector<std::pair<double, std::size_t>> scored;
    scored.reserve(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) {
        if (i == exclude) continue;
        if (pool[i].size() != query.size())
            throw std::invalid_argument("nearest_rows: row " + std::to_string(i) +
                                        " has width " +
                                        std::to_string(pool[i].size()) +
                                        ", query has " +
                                        std::to_string(query.size()));
        double d = 0.0;
        for (std::size_t j = 0; j < query.size(); ++j) {
            const double diff = static_cast<double>(pool[i][j]) -
                                static_cast<double>(query[j]);
            d += diff * diff;
        }
        scored.emplace_back(d, i);
    }
    std::sort(scored.begin(), scored.end());  // distance, then index
    k = std::min(k, scored.size());
    std::vector<std::vector<float>> rows;
    rows.reserve(k);
    for (std::size_t i = 0; i < k; ++i) rows.push_back(pool[scored[i].second]);
    return rows;
}

// ==== Decoding and evaluation ====

Tokens caption_sample(const CaptionModel& model, const TrainSample& sample,
                      const std::vector<std::vector<float>>& pool,
                      const Vocabulary& vocab, std::size_t beam_width,
                      double length_alpha) {
    std::vector<std::vector<float>> neighbors;
    if (wants_neighbors(model) && !pool.empty())
        neighbors = nearest_rows(
            pool, model.pooled_embedding(sample.features, sample.graph),
            model.config().knn_k);
    BeamConfig beam;
    beam.beam_width = beam_width;
    beam.max_len = model.config().max_len;
    beam.length_alpha = length_alpha;
    const auto result = model.generate(sample.features, sample.graph, neighbors, beam);
    return vocab.decode_caption(result.tokens);
}

EvalScores evaluate_split(const CaptionModel& model,
                          const std::vector<TrainSample>& samples,
                          const std::vector<std::vector<float>>& pool,
                          const Vocabulary& vocab, std::size_t beam_width) {
    if (samples.empty())
        throw std::invalid_argument("evaluate_split: no samples");
    EvalScores scores;
    for (const auto& s : samples) {
        const Tokens caption = caption_sample(model, s, pool, vocab, beam_width);
        scores.bleu1 += bleu_n(caption, s.references, 1);
        scores.bleu4 += bleu_n(caption, s.references, 4, /*smooth=*/true);
    }
    scores.bleu1 /= static_cast<double>(samples.size());
    scores.bleu4 /= static_cast<double>(samples.size());
    return scores;
}

// ==== Training loop ====

TrainResult train_model(CaptionModel& model, const std::vector<TrainSample>& train,
                        const std::vector<TrainSample>& val,
                        const Vocabulary& vocab, const TrainConfig& cfg) {
    if (train.empty())
        throw std::invalid_argument("train_model: empty training set");
    if (cfg.lr <= 0.0)
        throw std::invalid_argument("train_model: learning rate must be positive");
    if (cfg.warmup_fraction < 0.0 || cfg.warmup_fraction > 1.0)
        throw std::invalid_argument("train_model: warmup fraction must be in [0,1]");

    const std::size_t total_steps = cfg.start_step + cfg.epochs * train.size();
    const auto warmup_steps = static_cast<std::size_t>(
        std::llround(cfg.warmup_fraction * static_cast<double>(total_steps)));

    Adam opt(model.parameters(), cfg.lr);
    opt.set_step_count(cfg.start_step);
    const Rng root(cfg.seed);
    const bool dual = wants_neighbors(model);
    const bool train_flag = model.config().dropout > 0.0;

    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    TrainResult result;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const std::vector<std::vector<float>> pool =
            dual ? pooled_corpus(model, train) : std::vector<std::vector<float>>{};
        if (cfg.shuffle) {
            Rng epoch_rng = root.derive(shuffle_stream(epoch));
            epoch_rng.shuffle(order);
        }
        Rng drop_rng = root.derive(dropout_stream(epoch));

        double loss_sum = 0.0;
        for (const std::size_t idx : order) {
            const TrainSample& s = train[idx];
            const auto neighbors =
                dual ? nearest_rows(pool, pool[idx], model.config().knn_k, idx)
                     : std::vector<std::vector<float>>{};
            const auto& caption =
                s.caption_ids[(epoch - 1) % s.caption_ids.size()];
            result.consumed_ids.push_back(s.id);

            Tape tape;
            Tensor loss;
            {
                Tape::Scope scope(tape);
                loss = model.loss(s.features, s.graph, neighbors, caption,
                                  train_flag, &drop_rng);
            }
            const double loss_value = loss.item();
            if (!std::isfinite(loss_value))
                throw std::runtime_error(
                    "training diverged: non-finite loss at optimizer step " +
                    std::to_string(opt.step_count() + 1) + " (epoch " +
                    std::to_string(epoch) + ")");
            loss_sum += loss_value;

            opt.zero_grad();
            tape.backward(loss);
            opt.set_lr(warmup_lr(cfg.lr, opt.step_count(), warmup_steps));
            opt.step();
        }

        EpochLog row;
        row.epoch = epoch;
        row.mean_loss = loss_sum / static_cast<double>(train.size());
        if (!val.empty()) {
            const auto eval_pool =
                dual ? pooled_corpus(model, train) : std::vector<std::vector<float>>{};
            const EvalScores scores =
                evaluate_split(model, val, eval_pool, vocab, cfg.eval_beam_width);
            row.val_bleu1 = scores.bleu1;
            row.val_bleu4 = scores.bleu4;
        }
        result.log.push_back(row);
    }
    result.steps = opt.step_count();
    return result;
}

}  // namespace dgcn
