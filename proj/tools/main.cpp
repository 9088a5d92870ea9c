// Command-line entry point. Every subcommand shares the layered
// configuration flags; anything the user does not pass falls through to the
// config file, the toy profile, or the built-in defaults.

#include <cstdint>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "harness.hpp"
#include "run_config.hpp"

namespace {

using dgcn::cli::ConfigOverrides;
using dgcn::cli::RunConfig;

// Staging area for the shared flags of one subcommand. CLI11 parses into the
// plain members; transfer() moves only the flags the user actually passed
// into the overrides, so unset flags never shadow file or profile values.
class CommonFlags {
  public:
    void attach(CLI::App* cmd) {
        cmd->add_flag("--toy", toy_, "desk-scale widths and corpus");
        cmd->add_option("--config", config_path_,
                        "JSON config file applied over the defaults");
        opt(cmd, "--feature-dim", feature_dim_, &ConfigOverrides::feature_dim,
            "region feature width");
        opt(cmd, "--objects", objects_, &ConfigOverrides::objects,
            "region budget per image; lowest-confidence extras are dropped");
        opt(cmd, "--gcn-dim", gcn_dim_, &ConfigOverrides::gcn_dim,
            "graph-convolution output width");
        opt(cmd, "--d-model", d_model_, &ConfigOverrides::d_model,
            "encoder/decoder width");
        opt(cmd, "--heads", n_heads_, &ConfigOverrides::n_heads,
            "attention heads");
        opt(cmd, "--layers", n_layers_, &ConfigOverrides::n_layers,
            "encoder and decoder depth");
        opt(cmd, "--embed-dim", embed_dim_, &ConfigOverrides::embed_dim,
            "word embedding width");
        opt(cmd, "--knn-k", knn_k_, &ConfigOverrides::knn_k,
            "similar images aggregated per image");
        opt(cmd, "--max-len", max_len_, &ConfigOverrides::max_len,
            "generation length cap");
        opt(cmd, "--encoder", encoder_mode_, &ConfigOverrides::encoder_mode,
            "visual front end (raw_regions|object_gcn|pooled_image|image_gcn|"
            "object_gcn_pooled_image|raw_regions_image_gcn|dual_gcn)");
        opt(cmd, "--decoder", decoder_kind_, &ConfigOverrides::decoder_kind,
            "caption decoder (transformer|recurrent)");
        opt(cmd, "--dropout", dropout_, &ConfigOverrides::dropout,
            "dropout rate");
        opt(cmd, "--lr", lr_, &ConfigOverrides::lr, "peak learning rate");
        opt(cmd, "--warmup", warmup_fraction_, &ConfigOverrides::warmup_fraction,
            "warmup fraction of planned optimizer steps");
        opt(cmd, "--epochs", epochs_, &ConfigOverrides::epochs,
            "epochs for plain and shard training");
        opt(cmd, "--epochs-per-stage", epochs_per_stage_,
            &ConfigOverrides::epochs_per_stage, "epochs per curriculum stage");
        opt(cmd, "--seed", seed_, &ConfigOverrides::seed,
            "root random seed (DGCN_SEED overrides)");
        opt(cmd, "--shards", shards_, &ConfigOverrides::shards,
            "difficulty shards, also the stage count");
        opt(cmd, "--schedule-mode", schedule_mode_,
            &ConfigOverrides::schedule_mode,
            "stage composition (literal|cumulative)");
        opt(cmd, "--difficulty-metric", difficulty_spec_,
            &ConfigOverrides::difficulty_spec,
            "scorer metric (bleu1|bleu4|mean_bleu1_bleu4)");
        opt(cmd, "--beam", beam_width_, &ConfigOverrides::beam_width,
            "beam width for captioning and evaluation");
        opt(cmd, "--beam-alpha", beam_alpha_, &ConfigOverrides::beam_alpha,
            "beam length normalization exponent");
        opt(cmd, "--eval-beam", eval_beam_width_,
            &ConfigOverrides::eval_beam_width,
            "beam width for validation during training");
        opt(cmd, "--min-count", min_count_, &ConfigOverrides::min_count,
            "vocabulary frequency threshold");
        opt(cmd, "--workers", workers_, &ConfigOverrides::workers,
            "worker pool size for shard training and sweeps");
        opt(cmd, "--samples", n_samples_, &ConfigOverrides::n_samples,
            "synthetic corpus size");
        opt(cmd, "--grid", grid_size_, &ConfigOverrides::grid_size,
            "synthetic scene grid size");
        opt(cmd, "--noise", noise_sigma_, &ConfigOverrides::noise_sigma,
            "synthetic feature noise");
        opt(cmd, "--data", data_dir_, &ConfigOverrides::data_dir,
            "dataset directory");
        opt(cmd, "--out", out_dir_, &ConfigOverrides::out_dir,
            "output directory (default runs/<command>)");
        flag(cmd, "--curriculum,!--no-curriculum", curriculum_,
             &ConfigOverrides::curriculum, "staged training on/off");
        flag(cmd, "--self-loops,!--no-self-loops", self_loops_,
             &ConfigOverrides::self_loops, "self edges in the region graph");
    }

    RunConfig resolve(const std::string& command) {
        ConfigOverrides overrides;
        for (const auto& transfer : transfers_) transfer(overrides);
        RunConfig cfg = dgcn::cli::resolve_config(toy_, config_path_, overrides);
        if (cfg.out_dir.empty()) cfg.out_dir = "runs/" + command;
        return cfg;
    }

  private:
    template <typename T>
    void opt(CLI::App* cmd, const std::string& name, T& staging,
             std::optional<T> ConfigOverrides::* field, const std::string& help) {
        CLI::Option* o = cmd->add_option(name, staging, help);
        transfers_.push_back([o, &staging, field](ConfigOverrides& ov) {
            if (o->count()) ov.*field = staging;
        });
    }

    void flag(CLI::App* cmd, const std::string& name, bool& staging,
              std::optional<bool> ConfigOverrides::* field,
              const std::string& help) {
        CLI::Option* o = cmd->add_flag(name, staging, help);
        transfers_.push_back([o, &staging, field](ConfigOverrides& ov) {
            if (o->count()) ov.*field = staging;
        });
    }

    bool toy_ = false;
    std::string config_path_;
    std::size_t feature_dim_ = 0, objects_ = 0, gcn_dim_ = 0, d_model_ = 0,
                n_heads_ = 0, n_layers_ = 0, embed_dim_ = 0, knn_k_ = 0,
                max_len_ = 0, epochs_ = 0, epochs_per_stage_ = 0, shards_ = 0,
                beam_width_ = 0, eval_beam_width_ = 0, workers_ = 0,
                n_samples_ = 0, grid_size_ = 0;
    std::string encoder_mode_, decoder_kind_, schedule_mode_, difficulty_spec_,
                data_dir_, out_dir_;
    double dropout_ = 0.0, lr_ = 0.0, warmup_fraction_ = 0.0,
           noise_sigma_ = 0.0, beam_alpha_ = 0.0;
    std::uint64_t seed_ = 0;
    int min_count_ = 0;
    bool curriculum_ = false, self_loops_ = true;
    std::vector<std::function<void(ConfigOverrides&)>> transfers_;
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"graph-augmented transformer captioning workbench"};
    app.require_subcommand(1);

    CommonFlags gen_flags, train_flags, caption_flags, eval_flags, cross_flags,
        schedule_flags, ablate_flags, sweep_flags;

    CLI::App* gen = app.add_subcommand("gen-data",
                                       "generate a synthetic scene corpus");
    gen_flags.attach(gen);

    CLI::App* train = app.add_subcommand("train", "train a captioning model");
    train_flags.attach(train);
    std::string resume_path;
    train->add_option("--resume", resume_path,
                      "checkpoint to continue from (plain training only)");

    CLI::App* caption = app.add_subcommand(
        "caption", "caption a region-feature file with a trained model");
    caption_flags.attach(caption);
    std::string caption_checkpoint, caption_features, caption_pool;
    caption->add_option("--checkpoint", caption_checkpoint, "trained model")
        ->required();
    caption->add_option("--features", caption_features, "region-feature file")
        ->required();
    caption->add_option("--pool-data", caption_pool,
                        "dataset directory supplying neighbor candidates");

    CLI::App* eval = app.add_subcommand("eval",
                                        "score a checkpoint on a dataset split");
    eval_flags.attach(eval);
    std::string eval_checkpoint, eval_split;
    eval->add_option("--checkpoint", eval_checkpoint, "trained model")
        ->required();
    eval->add_option("--split", eval_split,
                     "train|val|test (default: test, then val, then train)");

    CLI::App* cross = app.add_subcommand(
        "cross-review",
        "estimate per-sample difficulty with held-out shard models");
    cross_flags.attach(cross);

    CLI::App* schedule = app.add_subcommand(
        "schedule", "bucket difficulty scores into training stages");
    schedule_flags.attach(schedule);
    std::string difficulty_path;
    schedule->add_option("--difficulty", difficulty_path,
                         "difficulty table from cross-review")
        ->required();

    CLI::App* ablate = app.add_subcommand(
        "ablate", "train encoder/decoder variants with matched budgets");
    ablate_flags.attach(ablate);
    std::vector<std::string> variant_labels;
    std::vector<std::uint64_t> ablate_seeds;
    ablate->add_option("--variants", variant_labels,
                       "labels like dual_gcn+transformer+cl")
        ->delimiter(',');
    ablate->add_option("--seeds", ablate_seeds,
                       "one run per seed (default: seed, seed+1, seed+2)")
        ->delimiter(',');

    CLI::App* sweep = app.add_subcommand(
        "sweep", "rerun the staged pipeline across K or M values");
    sweep_flags.attach(sweep);
    std::string sweep_param;
    std::vector<std::size_t> sweep_values;
    sweep->add_option("--param", sweep_param, "K (similar images) or M (shards)")
        ->required();
    sweep->add_option("--values", sweep_values, "values to sweep")
        ->required()
        ->delimiter(',');

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed())
            return dgcn::cli::cmd_gen_data(gen_flags.resolve("gen-data"));
        if (train->parsed())
            return dgcn::cli::cmd_train(train_flags.resolve("train"),
                                        resume_path);
        if (caption->parsed())
            return dgcn::cli::cmd_caption(caption_flags.resolve("caption"),
                                          caption_checkpoint, caption_features,
                                          caption_pool);
        if (eval->parsed())
            return dgcn::cli::cmd_eval(eval_flags.resolve("eval"),
                                       eval_checkpoint, eval_split);
        if (cross->parsed())
            return dgcn::cli::cmd_cross_review(
                cross_flags.resolve("cross-review"));
        if (schedule->parsed())
            return dgcn::cli::cmd_schedule(schedule_flags.resolve("schedule"),
                                           difficulty_path);
        if (ablate->parsed())
            return dgcn::cli::cmd_ablate(ablate_flags.resolve("ablate"),
                                         variant_labels, ablate_seeds);
        if (sweep->parsed())
            return dgcn::cli::cmd_sweep(sweep_flags.resolve("sweep"),
                                        sweep_param, sweep_values);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
