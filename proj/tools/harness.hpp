#pragma once

// Command implementations behind the command-line tool. Every command writes
// its artifacts under an output directory (plus resolved_config.json for
// provenance) and throws std::exception subclasses on failure; the entry
// point maps those to a diagnostic on stderr and a nonzero exit code.

#include <cstdint>
#include <string>
#include <vector>

#include "dgcn/curriculum.hpp"
#include "dgcn/data_io.hpp"
#include "dgcn/model.hpp"
#include "dgcn/trainer.hpp"
#include "run_config.hpp"

namespace dgcn::cli {

// ==== artifact names ====

inline constexpr const char* kRegionsFile = "regions.dgrf";
inline constexpr const char* kCaptionsFile = "captions.jsonl";
inline constexpr const char* kModelFile = "model.ckpt";
inline constexpr const char* kTrainingLogFile = "training_log.csv";
inline constexpr const char* kStageLogFile = "stage_log.csv";
inline constexpr const char* kDifficultyFile = "difficulty.csv";
inline constexpr const char* kScheduleFile = "schedule.json";
inline constexpr const char* kMetricsFile = "metrics.csv";
inline constexpr const char* kGeneratedFile = "generated.jsonl";
inline constexpr const char* kAblationFile = "ablation.csv";
inline constexpr const char* kSweepFile = "sweep.csv";

// ==== dataset plumbing ====

// load_corpus from <data_dir>/regions.dgrf + captions.jsonl, then keep at
// most cfg.objects regions per image (highest confidence first, original
// order preserved among the kept).
std::vector<SceneSample> load_dataset(const RunConfig& cfg);
void cap_regions(std::vector<SceneSample>& corpus, std::size_t objects);

struct PreparedSplits {
    std::vector<TrainSample> train, val, test;
};
PreparedSplits prepare_splits(const std::vector<SceneSample>& corpus,
                              const Vocabulary& vocab, const ModelConfig& mcfg);

// The split metrics are reported on: test when present, else val, else train.
const std::vector<TrainSample>& eval_split(const PreparedSplits& splits,
                                           const char** name);

// ==== CSV plumbing ====

// Round-trip-exact decimal form, identical across reruns.
std::string format_double(double v);
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);
// All records including the header row; no quoting, comma-separated.
std::vector<std::vector<std::string>> read_csv(const std::string& path);

// ==== scoring ====

struct SplitScores {
    std::size_t n = 0;
    double bleu1 = 0.0;
    double bleu2 = 0.0;  // orders 2..4 use add-one smoothing
    double bleu3 = 0.0;
    double bleu4 = 0.0;
    double rouge_l = 0.0;
    double cider = 0.0;
};

// Decode every sample (neighbor pool drawn from pool_samples when the model
// retrieves similar images) and average sentence metrics; CIDEr is corpus
// level over the decoded set.
SplitScores score_split(const CaptionModel& model,
                        const std::vector<TrainSample>& eval_samples,
                        const std::vector<TrainSample>& pool_samples,
                        const Vocabulary& vocab, std::size_t beam_width,
                        double length_alpha = 0.0);

inline const std::vector<std::string>& metric_columns() {
    static const std::vector<std::string> cols = {
        "bleu1", "bleu2", "bleu3", "bleu4", "rouge_l", "cider"};
    return cols;
}
std::vector<std::string> metric_values(const SplitScores& s);

// ==== ablation variants ====

struct VariantSpec {
    EncoderMode encoder = EncoderMode::dual_gcn;
    DecoderKind decoder = DecoderKind::transformer;
    bool curriculum = false;
};

// Labels look like "dual_gcn+transformer+cl": an encoder mode, a decoder
// kind, and an optional trailing "cl" joined by '+'.
VariantSpec parse_variant(const std::string& label);
std::string variant_label(const VariantSpec& v);

// ==== shared pipeline ====

struct PipelineResult {
    std::size_t steps = 0;         // main-model optimizer steps
    const char* scored_split = "";
    SplitScores scores;
};

// One full training run into out_dir: plain or staged per cfg.curriculum,
// checkpoint + logs + metrics.csv emitted. resume_path (plain mode only)
// restores the model and continues its optimizer step counter.
PipelineResult run_training_pipeline(const RunConfig& cfg,
                                     const std::string& out_dir,
                                     const std::string& resume_path = "");

// ==== commands ====

int cmd_gen_data(const RunConfig& cfg);
int cmd_train(const RunConfig& cfg, const std::string& resume_path);
int cmd_caption(const RunConfig& cfg, const std::string& checkpoint_path,
                const std::string& features_path, const std::string& pool_dir);
int cmd_eval(const RunConfig& cfg, const std::string& checkpoint_path,
             const std::string& split_name);
int cmd_cross_review(const RunConfig& cfg);
int cmd_schedule(const RunConfig& cfg, const std::string& difficulty_path);
int cmd_ablate(const RunConfig& cfg, std::vector<std::string> variant_labels,
               std::vector<std::uint64_t> seeds);
int cmd_sweep(const RunConfig& cfg, const std::string& param,
              const std::vector<std::size_t>& values);

}  // namespace dgcn::cli
