#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dgcn/metrics.hpp"
#include "dgcn/trainer.hpp"

namespace dgcn {

// ==== Sharding ====

// Even split of the dataset into m disjoint shards (sizes differ by at most
// one), assignment shuffled by seed.
struct ShardPlan {
    std::size_t m = 0;
    std::uint64_t seed = 0;
    std::vector<std::size_t> assignment;  // dataset index -> shard id in [0, m)

    // shard id -> sorted dataset indices
    std::vector<std::vector<std::size_t>> members() const;
};

ShardPlan make_shards(std::size_t n_samples, std::size_t m, std::uint64_t seed);

// One independently initialized model per shard, each trained only on its
// shard's samples. consumed_ids records every sample id each trainer touched,
// for isolation audits. When checkpoint_dir is non-empty, the models are also
// written there as shard_<k>.ckpt.
struct ShardTraining {
    std::vector<CaptionModel> models;
    std::vector<std::vector<std::uint64_t>> consumed_ids;
    std::vector<TrainResult> logs;
};

ShardTraining train_shard_models(const std::vector<TrainSample>& samples,
                                 const ShardPlan& plan,
                                 const ModelConfig& model_config,
                                 const TrainConfig& train_config,
                                 const Vocabulary& vocab,
                                 const std::string& checkpoint_dir = "",
                                 std::size_t workers = 1);

// ==== Cross-review difficulty ====

struct DifficultyEntry {
    std::size_t index = 0;        // position in the dataset vector
    std::uint64_t sample_id = 0;  // image id
    std::size_t home_shard = 0;
    double ds = 0.0;              // mean over scorers of (1 - metric)
    std::vector<std::pair<std::size_t, double>> scorer_metrics;  // (shard, metric)
};

struct DifficultyTable {
    std::size_t m = 0;
    DifficultySpec spec = DifficultySpec::mean_bleu1_bleu4;
    std::vector<DifficultyEntry> entries;  // dataset order
};

// Every sample is captioned greedily by the m-1 models that never saw it;
// each caption is scored against the sample's references and the difficulty
// is the mean shortfall. Dual-encoder scorers retrieve neighbors from their
// own shard's pooled embeddings.
DifficultyTable cross_review(const std::vector<TrainSample>& samples,
                             const ShardPlan& plan,
                             const std::vector<CaptionModel>& models,
                             const Vocabulary& vocab,
                             DifficultySpec spec = DifficultySpec::mean_bleu1_bleu4);

// ==== Scheduling ====

// literal: every stage takes an equal disjoint slice of every difficulty
// bucket, so stages 1..m partition the dataset with the same difficulty mix.
// cumulative: stage i draws only from buckets 1..i, so stage difficulty
// ramps up. Both append stage m+1 = the full dataset.
enum class ScheduleMode { literal, cumulative };

const char* schedule_mode_name(ScheduleMode mode);
ScheduleMode schedule_mode_from_name(const std::string& name);

struct CurriculumSchedule {
    ScheduleMode mode = ScheduleMode::literal;
    std::size_t m = 0;
    std::uint64_t seed = 0;
    std::vector<std::vector<std::size_t>> buckets;  // ascending difficulty
    std::vector<std::vector<std::size_t>> stages;   // m+1 entries, shuffled
};

CurriculumSchedule build_schedule(const DifficultyTable& table, std::size_t m,
                                  std::uint64_t seed,
                                  ScheduleMode mode = ScheduleMode::literal);

// ==== Staged training ====

struct StageLog {
    std::size_t stage = 0;      // 1-based, stage m+1 is the full-dataset pass
    std::size_t n_samples = 0;
    std::size_t steps = 0;      // cumulative optimizer steps after the stage
    double mean_loss = 0.0;     // final epoch of the stage; 0 for empty stages
    double val_bleu1 = -1.0;
    double val_bleu4 = -1.0;
};

// Trains the model through stages 1..m+1 in order, config.epochs per stage,
// shuffling within each stage. Learning-rate warmup applies within the first
// stage; the optimizer step counter threads through all stages. A non-finite
// loss aborts with the stage id in the message.
std::vector<StageLog> curriculum_train(CaptionModel& model,
                                       const std::vector<TrainSample>& samples,
                                       const CurriculumSchedule& schedule,
                                       const std::vector<TrainSample>& val,
                                       const Vocabulary& vocab,
                                       const TrainConfig& per_stage);

// ==== Persistence ====

// CSV columns: sample_id, shard_id, ds, then one metric per scorer in
// ascending scorer-shard order. Values survive a round trip exactly.
void write_difficulty_csv(const std::string& path, const DifficultyTable& table);
DifficultyTable load_difficulty_csv(const std::string& path);

// JSON object: mode, m, seed, buckets and stages as lists of sample ids.
// The dataset supplies the id <-> index mapping on both sides.
void write_schedule_json(const std::string& path,
                         const CurriculumSchedule& schedule,
                         const std::vector<TrainSample>& samples);
CurriculumSchedule load_schedule_json(const std::string& path,
                                      const std::vector<TrainSample>& samples);

}  // namespace dgcn
