#include "harness.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "dgcn/checkpoint.hpp"
#include "dgcn/metrics.hpp"
#include "dgcn/parallel.hpp"

namespace dgcn::cli {

namespace fs = std::filesystem;

// ==== dataset plumbing ====

void cap_regions(std::vector<SceneSample>& corpus, std::size_t objects) {
    if (objects == 0)
        throw std::invalid_argument("region budget must be positive");
    for (auto& sample : corpus) {
        if (sample.regions.size() <= objects) continue;
        std::vector<std::size_t> order(sample.regions.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) {
                             return sample.regions[a].confidence >
                                    sample.regions[b].confidence;
                         });
        order.resize(objects);
        std::sort(order.begin(), order.end());  // keep the original ordering
        std::vector<Region> kept;
        kept.reserve(objects);
        for (const std::size_t i : order) kept.push_back(std::move(sample.regions[i]));
        sample.regions = std::move(kept);
    }
}

std::vector<SceneSample> load_dataset(const RunConfig& cfg) {
    auto corpus = load_corpus(cfg.data_dir + "/" + kRegionsFile,
                              cfg.data_dir + "/" + kCaptionsFile);
    cap_regions(corpus, cfg.objects);
    return corpus;
}

PreparedSplits prepare_splits(const std::vector<SceneSample>& corpus,
                              const Vocabulary& vocab, const ModelConfig& mcfg) {
    std::vector<SceneSample> train, val, test;
    for (const auto& sample : corpus) {
        switch (sample.split) {
            case Split::train: train.push_back(sample); break;
            case Split::val: val.push_back(sample); break;
            case Split::test: test.push_back(sample); break;
        }
    }
    PreparedSplits out;
    out.train = prepare_samples(train, vocab, mcfg);
    out.val = prepare_samples(val, vocab, mcfg);
    out.test = prepare_samples(test, vocab, mcfg);
    return out;
}

const std::vector<TrainSample>& eval_split(const PreparedSplits& splits,
                                           const char** name) {
    if (!splits.test.empty()) {
        *name = "test";
        return splits.test;
    }
    if (!splits.val.empty()) {
        *name = "val";
        return splits.val;
    }
    *name = "train";
    return splits.train;
}

namespace {

Vocabulary build_train_vocab(const std::vector<SceneSample>& corpus,
                             int min_count) {
    std::vector<SceneSample> train;
    for (const auto& sample : corpus)
        if (sample.split == Split::train) train.push_back(sample);
    return Vocabulary::build(train, min_count);
}

std::string join_tokens(const Tokens& words) {
    std::string text;
    for (const auto& w : words) {
        if (!text.empty()) text += ' ';
        text += w;
    }
    return text;
}

double median_of(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 == 1 ? values[n / 2]
                      : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace

// ==== CSV plumbing ====

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    auto emit = [&](const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) out << ',';
            out << fields[i];
        }
        out << '\n';
    };
    emit(header);
    for (const auto& row : rows) {
        if (row.size() != header.size())
            throw std::invalid_argument(path + ": row with " +
                                        std::to_string(row.size()) +
                                        " fields under " +
                                        std::to_string(header.size()) +
                                        " columns");
        emit(row);
    }
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<std::vector<std::string>> records;
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> fields;
        std::stringstream row(line);
        std::string field;
        while (std::getline(row, field, ',')) fields.push_back(field);
        if (!line.empty() && line.back() == ',') fields.emplace_back();
        records.push_back(std::move(fields));
    }
    return records;
}

// ==== scoring ====

SplitScores score_split(const CaptionModel& model,
                        const std::vector<TrainSample>& eval_samples,
                        const std::vector<TrainSample>& pool_samples,
                        const Vocabulary& vocab, std::size_t beam_width,
                        double length_alpha) {
    if (eval_samples.empty())
        throw std::invalid_argument("score: no samples to score");
    std::vector<std::vector<float>> pool;
    if (model.config().uses_image_gcn() && model.config().knn_k > 0)
        pool = pooled_corpus(model, pool_samples);
    std::vector<Tokens> candidates;
    std::vector<std::vector<Tokens>> references;
    candidates.reserve(eval_samples.size());
    references.reserve(eval_samples.size());
    SplitScores s;
    for (const auto& sample : eval_samples) {
        Tokens cand = caption_sample(model, sample, pool, vocab, beam_width,
                                     length_alpha);
        s.bleu1 += bleu_n(cand, sample.references, 1);
        s.bleu2 += bleu_n(cand, sample.references, 2, true);
        s.bleu3 += bleu_n(cand, sample.references, 3, true);
        s.bleu4 += bleu_n(cand, sample.references, 4, true);
        s.rouge_l += rouge_l(cand, sample.references);
        candidates.push_back(std::move(cand));
        references.push_back(sample.references);
    }
    const auto n = static_cast<double>(eval_samples.size());
    s.n = eval_samples.size();
    s.bleu1 /= n;
    s.bleu2 /= n;
    s.bleu3 /= n;
    s.bleu4 /= n;
    s.rouge_l /= n;
    s.cider = cider(candidates, references).mean;
    return s;
}

std::vector<std::string> metric_values(const SplitScores& s) {
    return {format_double(s.bleu1),   format_double(s.bleu2),
            format_double(s.bleu3),   format_double(s.bleu4),
            format_double(s.rouge_l), format_double(s.cider)};
}

// ==== ablation variants ====

VariantSpec parse_variant(const std::string& label) {
    std::vector<std::string> parts;
    std::string part;
    std::stringstream in(label);
    while (std::getline(in, part, '+')) parts.push_back(part);
    if (parts.size() < 2 || parts.size() > 3)
        throw std::invalid_argument(
            "variant '" + label +
            "': expected encoder+decoder with an optional trailing cl");
    VariantSpec v;
    v.encoder = encoder_mode_from_name(parts[0]);
    v.decoder = decoder_kind_from_name(parts[1]);
    if (parts.size() == 3) {
        if (parts[2] != "cl")
            throw std::invalid_argument("variant '" + label +
                                        "': trailing part must be 'cl'");
        v.curriculum = true;
    }
    return v;
}

std::string variant_label(const VariantSpec& v) {
    std::string label = encoder_mode_name(v.encoder);
    label += '+';
    label += decoder_kind_name(v.decoder);
    if (v.curriculum) label += "+cl";
    return label;
}

// ==== shared pipeline ====

namespace {

// Shard training plus held-out scoring; writes the shard checkpoints and the
// difficulty table under out_dir and returns the table.
DifficultyTable estimate_difficulty(const RunConfig& cfg, const ModelConfig& mcfg,
                                    const std::vector<TrainSample>& train,
                                    const Vocabulary& vocab,
                                    const std::string& out_dir) {
    const ShardPlan plan = make_shards(train.size(), cfg.shards, cfg.seed);
    const std::string shard_dir = out_dir + "/shards";
    fs::create_directories(shard_dir);
    ShardTraining shards = train_shard_models(train, plan, mcfg,
                                              cfg.train_config(), vocab,
                                              shard_dir, cfg.workers);
    DifficultyTable table =
        cross_review(train, plan, shards.models, vocab,
                     difficulty_spec_from_name(cfg.difficulty_spec));
    write_difficulty_csv(out_dir + "/" + kDifficultyFile, table);
    return table;
}

void write_metrics_csv(const std::string& path, const char* split,
                       std::size_t beam_width, std::size_t steps,
                       const SplitScores& scores) {
    std::vector<std::string> header = {"split", "n", "beam", "steps"};
    for (const auto& col : metric_columns()) header.push_back(col);
    std::vector<std::string> row = {split, std::to_string(scores.n),
                                    std::to_string(beam_width),
                                    std::to_string(steps)};
    for (auto& value : metric_values(scores)) row.push_back(std::move(value));
    write_csv(path, header, {row});
}

}  // namespace

PipelineResult run_training_pipeline(const RunConfig& cfg,
                                     const std::string& out_dir,
                                     const std::string& resume_path) {
    fs::create_directories(out_dir);
    write_resolved_config(cfg, out_dir);
    const auto corpus = load_dataset(cfg);

    Vocabulary vocab;
    ModelConfig mcfg;
    std::optional<ModelCheckpoint> restored;
    if (!resume_path.empty()) {
        if (cfg.curriculum)
            throw std::invalid_argument(
                "resume supports plain training only; staged runs restart");
        restored.emplace(load_model_checkpoint(resume_path));
        vocab = restored->vocab;
        mcfg = restored->config;
    } else {
        vocab = build_train_vocab(corpus, cfg.min_count);
        mcfg = cfg.model_config(vocab.size());
        mcfg.validate();
    }

    PreparedSplits splits = prepare_splits(corpus, vocab, mcfg);
    if (splits.train.empty())
        throw std::invalid_argument("dataset has no training samples");

    Rng init_rng(cfg.seed);
    CaptionModel model = restored ? std::move(restored->model)
                                  : CaptionModel(mcfg, init_rng);

    std::size_t final_steps = 0;
    if (cfg.curriculum) {
        const DifficultyTable table =
            estimate_difficulty(cfg, mcfg, splits.train, vocab, out_dir);
        const CurriculumSchedule schedule =
            build_schedule(table, cfg.shards, cfg.seed,
                           schedule_mode_from_name(cfg.schedule_mode));
        write_schedule_json(out_dir + "/" + kScheduleFile, schedule, splits.train);
        const auto stages = curriculum_train(model, splits.train, schedule,
                                             splits.val, vocab, cfg.stage_config());
        std::vector<std::vector<std::string>> rows;
        for (const auto& st : stages)
            rows.push_back({std::to_string(st.stage), std::to_string(st.n_samples),
                            std::to_string(st.steps), format_double(st.mean_loss),
                            format_double(st.val_bleu1),
                            format_double(st.val_bleu4)});
        write_csv(out_dir + "/" + kStageLogFile,
                  {"stage", "n_samples", "steps", "mean_loss", "val_bleu1",
                   "val_bleu4"},
                  rows);
        final_steps = stages.empty() ? 0 : stages.back().steps;
    } else {
        TrainConfig tc = cfg.train_config();
        if (restored) tc.start_step = restored->optimizer_step;
        const TrainResult result =
            train_model(model, splits.train, splits.val, vocab, tc);
        std::vector<std::vector<std::string>> rows;
        for (const auto& e : result.log)
            rows.push_back({std::to_string(e.epoch), format_double(e.mean_loss),
                            format_double(e.val_bleu1),
                            format_double(e.val_bleu4)});
        write_csv(out_dir + "/" + kTrainingLogFile,
                  {"epoch", "mean_loss", "val_bleu1", "val_bleu4"}, rows);
        final_steps = result.steps;
    }

    save_model_checkpoint(out_dir + "/" + kModelFile, model, mcfg, vocab,
                          final_steps);

    PipelineResult out;
    out.steps = final_steps;
    const auto& scored = eval_split(splits, &out.scored_split);
    out.scores = score_split(model, scored, splits.train, vocab,
                             cfg.beam_width, cfg.beam_alpha);
    write_metrics_csv(out_dir + "/" + kMetricsFile, out.scored_split,
                      cfg.beam_width, out.steps, out.scores);
    return out;
}

// ==== commands ====

int cmd_gen_data(const RunConfig& cfg) {
    const auto corpus = generate_corpus(cfg.scene_spec(), cfg.n_samples);
    fs::create_directories(cfg.data_dir);
    save_corpus(corpus, cfg.data_dir + "/" + kRegionsFile,
                cfg.data_dir + "/" + kCaptionsFile);
    write_resolved_config(cfg, cfg.data_dir);
    std::size_t n_train = 0, n_val = 0, n_test = 0;
    for (const auto& sample : corpus) {
        if (sample.split == Split::train) ++n_train;
        else if (sample.split == Split::val) ++n_val;
        else ++n_test;
    }
    std::cout << "gen-data: " << corpus.size() << " scenes (" << n_train
              << " train / " << n_val << " val / " << n_test << " test) -> "
              << cfg.data_dir << "\n";
    return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& resume_path) {
    const PipelineResult r = run_training_pipeline(cfg, cfg.out_dir, resume_path);
    std::cout << "train: " << r.steps << " optimizer steps, " << r.scored_split
              << " bleu1 " << format_double(r.scores.bleu1) << ", cider "
              << format_double(r.scores.cider) << " -> " << cfg.out_dir << "\n";
    return 0;
}

int cmd_caption(const RunConfig& cfg, const std::string& checkpoint_path,
                const std::string& features_path, const std::string& pool_dir) {
    fs::create_directories(cfg.out_dir);
    write_resolved_config(cfg, cfg.out_dir);
    const std::string out_path = cfg.out_dir + "/" + kGeneratedFile;
    if (!fs::exists(features_path))
        throw std::runtime_error("cannot open region file " + features_path);
    if (fs::file_size(features_path) == 0) {
        // a zero-byte region file names zero images
        std::ofstream out(out_path);
        if (!out) throw std::runtime_error("cannot write " + out_path);
        std::cout << "caption: 0 captions -> " << out_path << "\n";
        return 0;
    }

    ModelCheckpoint ckpt = load_model_checkpoint(checkpoint_path);
    auto corpus = load_region_file(features_path);
    cap_regions(corpus, cfg.objects);
    const auto samples =
        prepare_samples(corpus, ckpt.vocab, ckpt.config, false);

    // Neighbor candidates come from --pool-data when given; otherwise the
    // input batch doubles as the pool and each image excludes itself.
    const bool wants_pool = ckpt.config.uses_image_gcn() && ckpt.config.knn_k > 0;
    std::vector<std::vector<float>> pool;
    bool self_pool = false;
    if (wants_pool) {
        if (!pool_dir.empty()) {
            auto pool_corpus = load_region_file(pool_dir + "/" + kRegionsFile);
            cap_regions(pool_corpus, cfg.objects);
            const auto pool_samples =
                prepare_samples(pool_corpus, ckpt.vocab, ckpt.config, false);
            pool = pooled_corpus(ckpt.model, pool_samples);
        } else {
            pool = pooled_corpus(ckpt.model, samples);
            self_pool = true;
        }
    }

    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot write " + out_path);
    BeamConfig beam;
    beam.beam_width = cfg.beam_width;
    beam.max_len = ckpt.config.max_len;
    beam.length_alpha = cfg.beam_alpha;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        std::vector<std::vector<float>> neighbors;
        if (wants_pool && !pool.empty()) {
            const auto query =
                ckpt.model.pooled_embedding(samples[i].features, samples[i].graph);
            neighbors = nearest_rows(pool, query, ckpt.config.knn_k,
                                     self_pool ? i : kNoExclusion);
        }
        const CaptionResult r =
            ckpt.model.generate(samples[i].features, samples[i].graph, neighbors,
                                beam);
        const Tokens words = ckpt.vocab.decode_caption(r.tokens);
        nlohmann::json line;
        line["id"] = samples[i].id;
        line["caption"] = join_tokens(words);
        line["tokens"] = words;
        line["log_probs"] = r.step_log_probs;  // end-marker step included
        line["log_prob"] = r.log_prob;
        out << line.dump() << "\n";
    }
    std::cout << "caption: " << samples.size() << " captions -> " << out_path
              << "\n";
    return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& checkpoint_path,
             const std::string& split_name) {
    fs::create_directories(cfg.out_dir);
    write_resolved_config(cfg, cfg.out_dir);
    ModelCheckpoint ckpt = load_model_checkpoint(checkpoint_path);
    const auto corpus = load_dataset(cfg);
    const PreparedSplits splits = prepare_splits(corpus, ckpt.vocab, ckpt.config);

    const std::vector<TrainSample>* samples = nullptr;
    const char* name = "";
    if (split_name.empty()) {
        samples = &eval_split(splits, &name);
    } else {
        const Split which = split_from_name(split_name);
        samples = which == Split::train ? &splits.train
                  : which == Split::val ? &splits.val
                                        : &splits.test;
        name = split_name.c_str();
        if (samples->empty())
            throw std::invalid_argument("split '" + split_name + "' is empty");
    }

    const SplitScores scores =
        score_split(ckpt.model, *samples, splits.train, ckpt.vocab,
                    cfg.beam_width, cfg.beam_alpha);
    write_metrics_csv(cfg.out_dir + "/" + kMetricsFile, name, cfg.beam_width,
                      ckpt.optimizer_step, scores);
    std::cout << "eval: " << name << " n=" << scores.n << " bleu1 "
              << format_double(scores.bleu1) << ", bleu4 "
              << format_double(scores.bleu4) << ", cider "
              << format_double(scores.cider) << " -> " << cfg.out_dir << "\n";
    return 0;
}

int cmd_cross_review(const RunConfig& cfg) {
    fs::create_directories(cfg.out_dir);
    write_resolved_config(cfg, cfg.out_dir);
    const auto corpus = load_dataset(cfg);
    const Vocabulary vocab = build_train_vocab(corpus, cfg.min_count);
    ModelConfig mcfg = cfg.model_config(vocab.size());
    mcfg.validate();
    const PreparedSplits splits = prepare_splits(corpus, vocab, mcfg);
    if (splits.train.empty())
        throw std::invalid_argument("dataset has no training samples");

    const DifficultyTable table =
        estimate_difficulty(cfg, mcfg, splits.train, vocab, cfg.out_dir);
    double mean_ds = 0.0;
    for (const auto& entry : table.entries) mean_ds += entry.ds;
    if (!table.entries.empty()) mean_ds /= static_cast<double>(table.entries.size());
    std::cout << "cross-review: " << table.m << " shards, "
              << table.entries.size() << " samples, mean difficulty "
              << format_double(mean_ds) << " -> " << cfg.out_dir << "/"
              << kDifficultyFile << "\n";
    return 0;
}

int cmd_schedule(const RunConfig& cfg, const std::string& difficulty_path) {
    fs::create_directories(cfg.out_dir);
    write_resolved_config(cfg, cfg.out_dir);
    const auto corpus = load_dataset(cfg);
    const Vocabulary vocab = build_train_vocab(corpus, cfg.min_count);
    const ModelConfig mcfg = cfg.model_config(vocab.size());
    const PreparedSplits splits = prepare_splits(corpus, vocab, mcfg);

    const DifficultyTable table = load_difficulty_csv(difficulty_path);
    if (table.entries.size() != splits.train.size())
        throw std::invalid_argument(
            "difficulty table covers " + std::to_string(table.entries.size()) +
            " samples but the training split holds " +
            std::to_string(splits.train.size()));

    const CurriculumSchedule schedule =
        build_schedule(table, cfg.shards, cfg.seed,
                       schedule_mode_from_name(cfg.schedule_mode));
    write_schedule_json(cfg.out_dir + "/" + kScheduleFile, schedule,
                        splits.train);
    std::cout << "schedule: " << schedule_mode_name(schedule.mode)
              << ", stage sizes [";
    for (std::size_t i = 0; i < schedule.stages.size(); ++i) {
        if (i) std::cout << ", ";
        std::cout << schedule.stages[i].size();
    }
    std::cout << "] -> " << cfg.out_dir << "/" << kScheduleFile << "\n";
    return 0;
}

int cmd_ablate(const RunConfig& cfg, std::vector<std::string> variant_labels,
               std::vector<std::uint64_t> seeds) {
    if (variant_labels.empty())
        variant_labels = {"dual_gcn+transformer+cl", "object_gcn+transformer+cl",
                          "raw_regions+transformer+cl"};
    if (seeds.empty()) seeds = {cfg.seed, cfg.seed + 1, cfg.seed + 2};
    std::vector<VariantSpec> variants;
    variants.reserve(variant_labels.size());
    for (const auto& label : variant_labels)
        variants.push_back(parse_variant(label));

    fs::create_directories(cfg.out_dir);
    write_resolved_config(cfg, cfg.out_dir);

    struct Row {
        std::string label;
        std::uint64_t seed = 0;
        PipelineResult result;
    };
    const std::size_t n_rows = variants.size() * seeds.size();
    std::vector<Row> rows(n_rows);
    run_indexed_tasks(n_rows, cfg.workers, [&](std::size_t idx) {
        const std::size_t vi = idx / seeds.size();
        const std::size_t si = idx % seeds.size();
        RunConfig row_cfg = cfg;
        row_cfg.encoder_mode = encoder_mode_name(variants[vi].encoder);
        row_cfg.decoder_kind = decoder_kind_name(variants[vi].decoder);
        row_cfg.curriculum = variants[vi].curriculum;
        row_cfg.seed = seeds[si];
        // Matched budgets: a staged run walks stages 1..m (the dataset once)
        // plus the full pass (the dataset again) per stage epoch, so a plain
        // run gets twice the stage epochs. Shard models are difficulty
        // scaffolding and keep cfg.epochs.
        if (!variants[vi].curriculum)
            row_cfg.epochs = 2 * cfg.epochs_per_stage;
        row_cfg.workers = 1;  // the fan-out happens per row
        const std::string row_dir = cfg.out_dir + "/" + variant_labels[vi] +
                                    "_seed" + std::to_string(seeds[si]);
        row_cfg.out_dir = row_dir;
        rows[idx] = Row{variant_labels[vi], seeds[si],
                        run_training_pipeline(row_cfg, row_dir)};
    });

    for (const auto& row : rows)
        if (row.result.steps != rows.front().result.steps)
            throw std::runtime_error(
                "ablation budget mismatch: " + row.label + " seed " +
                std::to_string(row.seed) + " logged " +
                std::to_string(row.result.steps) + " steps, expected " +
                std::to_string(rows.front().result.steps));

    std::vector<std::string> header = {"variant", "seed", "steps"};
    for (const auto& col : metric_columns()) header.push_back(col);
    std::vector<std::vector<std::string>> csv_rows;
    for (std::size_t vi = 0; vi < variants.size(); ++vi) {
        std::vector<SplitScores> per_seed;
        for (std::size_t si = 0; si < seeds.size(); ++si) {
            const Row& row = rows[vi * seeds.size() + si];
            std::vector<std::string> fields = {row.label,
                                               std::to_string(row.seed),
                                               std::to_string(row.result.steps)};
            for (auto& value : metric_values(row.result.scores))
                fields.push_back(std::move(value));
            csv_rows.push_back(std::move(fields));
            per_seed.push_back(row.result.scores);
        }
        auto median_metric = [&](double SplitScores::* field) {
            std::vector<double> values;
            values.reserve(per_seed.size());
            for (const auto& s : per_seed) values.push_back(s.*field);
            return median_of(std::move(values));
        };
        SplitScores med;
        med.bleu1 = median_metric(&SplitScores::bleu1);
        med.bleu2 = median_metric(&SplitScores::bleu2);
        med.bleu3 = median_metric(&SplitScores::bleu3);
        med.bleu4 = median_metric(&SplitScores::bleu4);
        med.rouge_l = median_metric(&SplitScores::rouge_l);
        med.cider = median_metric(&SplitScores::cider);
        std::vector<std::string> fields = {
            variant_labels[vi], "median",
            std::to_string(rows[vi * seeds.size()].result.steps)};
        for (auto& value : metric_values(med)) fields.push_back(std::move(value));
        csv_rows.push_back(std::move(fields));
        std::cout << "ablate: " << variant_labels[vi] << " median bleu1 "
                  << format_double(med.bleu1) << ", cider "
                  << format_double(med.cider) << "\n";
    }
    write_csv(cfg.out_dir + "/" + kAblationFile, header, csv_rows);
    std::cout << "ablate: " << n_rows << " runs -> " << cfg.out_dir << "/"
              << kAblationFile << "\n";
    return 0;
}

int cmd_sweep(const RunConfig& cfg, const std::string& param,
              const std::vector<std::size_t>& values) {
    const bool is_k = param == "K" || param == "k";
    const bool is_m = param == "M" || param == "m";
    if (!is_k && !is_m)
        throw std::invalid_argument("sweep: param must be K or M, got '" +
                                    param + "'");
    if (values.empty()) throw std::invalid_argument("sweep: no values given");
    for (const std::size_t v : values) {
        if (is_k && v < 1)
            throw std::invalid_argument("sweep: K values must be >= 1");
        if (is_m && v < 2)
            throw std::invalid_argument("sweep: M values must be >= 2");
    }

    fs::create_directories(cfg.out_dir);
    write_resolved_config(cfg, cfg.out_dir);
    const std::string tag = is_k ? "K" : "M";

    std::vector<PipelineResult> results(values.size());
    run_indexed_tasks(values.size(), cfg.workers, [&](std::size_t i) {
        RunConfig row_cfg = cfg;
        row_cfg.curriculum = true;  // the sweep exercises the staged pipeline
        if (is_k) row_cfg.knn_k = values[i];
        else row_cfg.shards = values[i];
        row_cfg.workers = 1;
        const std::string row_dir =
            cfg.out_dir + "/" + tag + "_" + std::to_string(values[i]);
        row_cfg.out_dir = row_dir;
        results[i] = run_training_pipeline(row_cfg, row_dir);
    });

    std::vector<std::string> header = {"param", "value", "steps"};
    for (const auto& col : metric_columns()) header.push_back(col);
    std::vector<std::vector<std::string>> csv_rows;
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::vector<std::string> fields = {tag, std::to_string(values[i]),
                                           std::to_string(results[i].steps)};
        for (auto& value : metric_values(results[i].scores))
            fields.push_back(std::move(value));
        csv_rows.push_back(std::move(fields));
        std::cout << "sweep: " << tag << "=" << values[i] << " bleu1 "
                  << format_double(results[i].scores.bleu1) << ", cider "
                  << format_double(results[i].scores.cider) << "\n";
    }
    write_csv(cfg.out_dir + "/" + kSweepFile, header, csv_rows);
    std::cout << "sweep: " << values.size() << " values -> " << cfg.out_dir
              << "/" << kSweepFile << "\n";
    return 0;
}

}  // namespace dgcn::cli
