#pragma once

// Layered run configuration for the command-line harness. Values resolve in
// order: built-in defaults, the toy profile (when requested), a JSON config
// file, explicit flag overrides, and finally the DGCN_SEED environment
// variable, which beats everything for the seed. Every command echoes its
// resolved configuration into the output directory as resolved_config.json.

#include <cstdint>
#include <optional>
#include <string>

#include "dgcn/data_io.hpp"
#include "dgcn/model.hpp"
#include "dgcn/trainer.hpp"

namespace dgcn::cli {

struct RunConfig {
    // ==== model dimensions (full-scale defaults) ====
    std::size_t feature_dim = 2048;  // region feature width
    std::size_t objects = 36;        // region budget per image; extras dropped
    std::size_t gcn_dim = 512;       // graph-convolution output width
    std::size_t d_model = 512;
    std::size_t n_heads = 8;
    std::size_t n_layers = 6;
    std::size_t embed_dim = 1000;    // word embedding width
    std::size_t knn_k = 6;           // similar images per image
    std::size_t max_len = 16;        // generation cap
    std::string encoder_mode = "dual_gcn";
    std::string decoder_kind = "transformer";
    bool self_loops = true;
    double dropout = 0.0;

    // ==== training ====
    double lr = 3e-4;
    double warmup_fraction = 0.05;
    std::size_t epochs = 4;            // plain training
    std::size_t epochs_per_stage = 1;  // staged training
    std::uint64_t seed = 1;
    std::size_t shards = 8;            // difficulty shards and stages
    std::string schedule_mode = "literal";
    std::string difficulty_spec = "mean_bleu1_bleu4";
    bool curriculum = false;
    std::size_t beam_width = 3;        // captioning and evaluation decoding
    double beam_alpha = 0.0;           // rank beams by log_prob / len^alpha
    std::size_t eval_beam_width = 1;   // validation decoding during training
    int min_count = 1;                 // vocabulary frequency threshold
    std::size_t workers = 1;           // bounded worker pool size

    // ==== synthetic data generation ====
    std::size_t n_samples = 2000;
    std::size_t grid_size = 8;
    double noise_sigma = 0.05;

    // ==== paths ====
    std::string data_dir = "data";
    std::string out_dir;  // empty picks runs/<command>

    ModelConfig model_config(std::size_t vocab_size) const;
    TrainConfig train_config() const;  // plain runs: `epochs` epochs
    TrainConfig stage_config() const;  // shard models and stages
    SyntheticSceneSpec scene_spec() const;
    void validate() const;
};

// Desk-scale widths, a faster learning rate, and a smaller synthetic corpus
// for experiments that must finish in CPU minutes. Seeds, shard counts, and
// schedule settings are untouched.
void apply_toy_profile(RunConfig& cfg);

// Flag values captured by the CLI; only set fields override the config.
struct ConfigOverrides {
    std::optional<std::size_t> feature_dim, objects, gcn_dim, d_model, n_heads,
        n_layers, embed_dim, knn_k, max_len, epochs, epochs_per_stage, shards,
        beam_width, eval_beam_width, workers, n_samples, grid_size;
    std::optional<std::string> encoder_mode, decoder_kind, schedule_mode,
        difficulty_spec, data_dir, out_dir;
    std::optional<double> dropout, lr, warmup_fraction, noise_sigma, beam_alpha;
    std::optional<std::uint64_t> seed;
    std::optional<bool> self_loops, curriculum;
    std::optional<int> min_count;
};

// Strict JSON application: unknown fields and wrong types are named errors.
void apply_config_file(RunConfig& cfg, const std::string& path);
void apply_overrides(RunConfig& cfg, const ConfigOverrides& o);
// DGCN_SEED, when set, replaces the seed; a non-numeric value is an error.
void apply_env_seed(RunConfig& cfg);

// defaults -> toy -> file -> flags -> environment
RunConfig resolve_config(bool toy, const std::string& config_path,
                         const ConfigOverrides& overrides);

std::string config_to_json(const RunConfig& cfg);
void write_resolved_config(const RunConfig& cfg, const std::string& dir);

}  // namespace dgcn::cli
