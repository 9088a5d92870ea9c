#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#include "dgcn/data_io.hpp"
#include "dgcn/model.hpp"

namespace dgcn {

// A corpus sample lowered to model inputs: feature matrix, relation graph,
// encoded captions. References keep their token form for metric scoring.
struct TrainSample {
    std::uint64_t id = 0;
    Tensor features;                            // [n_regions x feature_dim]
    SpatialGraph graph;
    std::vector<std::vector<int>> caption_ids;  // encoded, no sequence markers
    std::vector<Tokens> references;
};

struct TrainConfig {
    double lr = 3e-4;
    double warmup_fraction = 0.05;  // of total planned optimizer steps
    std::size_t epochs = 4;
    std::uint64_t seed = 1;
    bool shuffle = true;            // reshuffle sample order every epoch
    std::size_t eval_beam_width = 1;  // validation decoding (1 = greedy)
    std::size_t start_step = 0;     // resumed optimizer step count
};

// One row per epoch. Validation fields stay at -1 when no samples were given.
struct EpochLog {
    std::size_t epoch = 0;  // 1-based
    double mean_loss = 0.0;
    double val_bleu1 = -1.0;
    double val_bleu4 = -1.0;  // smoothed; toy captions rarely share 4-grams early
};

struct TrainResult {
    std::vector<EpochLog> log;
    std::size_t steps = 0;  // optimizer step count after the run
    std::vector<std::uint64_t> consumed_ids;  // sample id per step, audit trail
};

struct EvalScores {
    double bleu1 = 0.0;
    double bleu4 = 0.0;
};

constexpr std::size_t kNoExclusion = std::numeric_limits<std::size_t>::max();

// Lower corpus samples into model inputs, checking feature widths against the
// model configuration and honoring its self-loop setting. Caption-less images
// are rejected unless require_captions is false (inference-only inputs).
std::vector<TrainSample> prepare_samples(const std::vector<SceneSample>& corpus,
                                         const Vocabulary& vocab,
                                         const ModelConfig& cfg,
                                         bool require_captions = true);

// Frozen pooled embeddings, one row per sample, computed outside any tape.
std::vector<std::vector<float>> pooled_corpus(
    const CaptionModel& model, const std::vector<TrainSample>& samples);

// The k nearest pool rows to the query under squared Euclidean distance,
// returned as vectors. `exclude` names one row index to skip (pass
// kNoExclusion for queries from outside the pool). Ties break toward the
// lower index; k is clamped to the available rows.
std::vector<std::vector<float>> nearest_rows(
    const std::vector<std::vector<float>>& pool, const std::vector<float>& query,
    std::size_t k, std::size_t exclude = kNoExclusion);

// Decode one sample into plain caption tokens (sequence markers dropped).
// `pool` supplies neighbor candidates for the dual encoder and should not
// contain the query's own row; other encoder modes ignore it. length_alpha
// ranks beam candidates by log_prob / length^alpha; 0 keeps raw log
// probability (width 1 then matches greedy argmax exactly).
Tokens caption_sample(const CaptionModel& model, const TrainSample& sample,
                      const std::vector<std::vector<float>>& pool,
                      const Vocabulary& vocab, std::size_t beam_width,
                      double length_alpha = 0.0);

// Mean per-sample BLEU-1 and smoothed BLEU-4 of decoded captions against the
// stored references. `pool` as in caption_sample.
EvalScores evaluate_split(const CaptionModel& model,
                          const std::vector<TrainSample>& samples,
                          const std::vector<std::vector<float>>& pool,
                          const Vocabulary& vocab, std::size_t beam_width);

// Teacher-forced training: Adam with linear warmup over the planned steps,
// one optimizer step per sample, references cycled across epochs. The dual
// encoder's neighbor pool is refrozen once per epoch. Throws on a non-finite
// loss with the offending step and epoch in the message.
TrainResult train_model(CaptionModel& model, const std::vector<TrainSample>& train,
                        const std::vector<TrainSample>& val,
                        const Vocabulary& vocab, const TrainConfig& cfg);

}  // namespace dgcn
