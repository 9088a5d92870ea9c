#include "dgcn/curriculum.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

#include "dgcn/checkpoint.hpp"
#include "dgcn/parallel.hpp"

namespace dgcn {

namespace {

// derived-stream bases within one seed: shard inits, shard trainer seeds,
// stage trainer seeds (shard/stage counts stay far below the spacing)
constexpr std::uint64_t kShardInitBase = 1u << 20;
constexpr std::uint64_t kShardSeedBase = 2u << 20;
constexpr std::uint64_t kStageSeedBase = 3u << 20;

bool needs_pool(const CaptionModel& model) {
    return model.config().uses_image_gcn() && model.config().knn_k > 0;
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_double(const std::string& cell, std::size_t line,
                    const std::string& column) {
    try {
        std::size_t used = 0;
        const double v = std::stod(cell, &used);
        if (used != cell.size()) throw std::invalid_argument("trailing text");
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error("difficulty csv line " + std::to_string(line) +
                                 ": cannot parse " + column + " from '" + cell +
                                 "'");
    }
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

}  // namespace

// ==== Sharding ====

std::vector<std::vector<std::size_t>> ShardPlan::members() const {
    std::vector<std::vector<std::size_t>> out(m);
    for (std::size_t i = 0; i < assignment.size(); ++i)
        out[assignment[i]].push_back(i);
    return out;
}

ShardPlan make_shards(std::size_t n_samples, std::size_t m, std::uint64_t seed) {
    if (m == 0)
        throw std::invalid_argument("make_shards: need at least one shard");
    if (m > n_samples)
        throw std::invalid_argument("make_shards: " + std::to_string(m) +
                                    " shards for " + std::to_string(n_samples) +
                                    " samples would leave shards empty");
    ShardPlan plan;
    plan.m = m;
    plan.seed = seed;
    std::vector<std::size_t> order(n_samples);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(order);
    plan.assignment.resize(n_samples);
    for (std::size_t j = 0; j < n_samples; ++j)
        plan.assignment[order[j]] = j % m;
    return plan;
}

ShardTraining train_shard_models(const std::vector<TrainSample>& samples,
                                 const ShardPlan& plan,
                                 const ModelConfig& model_config,
                                 const TrainConfig& train_config,
                                 const Vocabulary& vocab,
                                 const std::string& checkpoint_dir,
                                 std::size_t workers) {
    if (plan.assignment.size() != samples.size())
        throw std::invalid_argument("train_shard_models: plan covers " +
                                    std::to_string(plan.assignment.size()) +
                                    " samples, dataset has " +
                                    std::to_string(samples.size()));
    if (model_config.vocab_size != vocab.size())
        throw std::invalid_argument("train_shard_models: model vocab size " +
                                    std::to_string(model_config.vocab_size) +
                                    " != vocabulary size " +
                                    std::to_string(vocab.size()));
    const auto members = plan.members();
    for (std::size_t k = 0; k < plan.m; ++k)
        if (members[k].empty())
            throw std::invalid_argument("train_shard_models: shard " +
                                        std::to_string(k) + " is empty");

    const Rng root(train_config.seed);
    ShardTraining out;
    out.models.reserve(plan.m);
    for (std::size_t k = 0; k < plan.m; ++k) {
        Rng init_rng = root.derive(kShardInitBase + k);
        out.models.emplace_back(model_config, init_rng);
    }
    out.logs.resize(plan.m);

    // every shard's seeds derive from its own index, so results do not
    // depend on how tasks land on workers
    run_indexed_tasks(plan.m, workers, [&](std::size_t k) {
        std::vector<TrainSample> shard;
        shard.reserve(members[k].size());
        for (const std::size_t idx : members[k]) shard.push_back(samples[idx]);

        TrainConfig tc = train_config;
        tc.seed = root.derive(kShardSeedBase + k).seed();
        out.logs[k] = train_model(out.models[k], shard, {}, vocab, tc);
    });

    for (std::size_t k = 0; k < plan.m; ++k) {
        if (!checkpoint_dir.empty())
            save_model_checkpoint(
                checkpoint_dir + "/shard_" + std::to_string(k) + ".ckpt",
                out.models[k], model_config, vocab, out.logs[k].steps);
        out.consumed_ids.push_back(out.logs[k].consumed_ids);
    }
    return out;
}

// ==== Cross-review difficulty ====

DifficultyTable cross_review(const std::vector<TrainSample>& samples,
                             const ShardPlan& plan,
                             const std::vector<CaptionModel>& models,
                             const Vocabulary& vocab, DifficultySpec spec) {
    if (plan.m < 2)
        throw std::invalid_argument("cross_review: need at least 2 shards");
    if (models.size() != plan.m)
        throw std::invalid_argument("cross_review: " +
                                    std::to_string(models.size()) +
                                    " models for " + std::to_string(plan.m) +
                                    " shards");
    if (plan.assignment.size() != samples.size())
        throw std::invalid_argument("cross_review: plan covers " +
                                    std::to_string(plan.assignment.size()) +
                                    " samples, dataset has " +
                                    std::to_string(samples.size()));

    // each scorer retrieves neighbors from its own shard's pooled embeddings
    const auto members = plan.members();
    std::vector<std::vector<std::vector<float>>> pools(plan.m);
    for (std::size_t k = 0; k < plan.m; ++k) {
        if (!needs_pool(models[k])) continue;
        std::vector<TrainSample> shard;
        shard.reserve(members[k].size());
        for (const std::size_t idx : members[k]) shard.push_back(samples[idx]);
        pools[k] = pooled_corpus(models[k], shard);
    }

    DifficultyTable table;
    table.m = plan.m;
    table.spec = spec;
    table.entries.reserve(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        DifficultyEntry entry;
        entry.index = i;
        entry.sample_id = samples[i].id;
        entry.home_shard = plan.assignment[i];
        double shortfall = 0.0;
        for (std::size_t k = 0; k < plan.m; ++k) {
            if (k == entry.home_shard) continue;
            const Tokens caption =
                caption_sample(models[k], samples[i], pools[k], vocab, 1);
            const double metric =
                difficulty_metric(caption, samples[i].references, spec);
            entry.scorer_metrics.emplace_back(k, metric);
            shortfall += 1.0 - metric;
        }
        entry.ds = shortfall / static_cast<double>(plan.m - 1);
        table.entries.push_back(std::move(entry));
    }
    return table;
}

// ==== Scheduling ====

const char* schedule_mode_name(ScheduleMode mode) {
    return mode == ScheduleMode::literal ? "literal" : "cumulative";
}

ScheduleMode schedule_mode_from_name(const std::string& name) {
    if (name == "literal") return ScheduleMode::literal;
    if (name == "cumulative") return ScheduleMode::cumulative;
    throw std::invalid_argument("unknown schedule mode '" + name + "'");
}

CurriculumSchedule build_schedule(const DifficultyTable& table, std::size_t m,
                                  std::uint64_t seed, ScheduleMode mode) {
    const std::size_t n = table.entries.size();
    if (m == 0)
        throw std::invalid_argument("build_schedule: need at least one bucket");
    if (m > n)
        throw std::invalid_argument("build_schedule: " + std::to_string(m) +
                                    " buckets for " + std::to_string(n) +
                                    " samples would leave buckets empty");
    for (const auto& e : table.entries)
        if (!(e.ds >= 0.0 && e.ds <= 1.0))
            throw std::invalid_argument("build_schedule: difficulty " +
                                        fmt_double(e.ds) + " of sample " +
                                        std::to_string(e.sample_id) +
                                        " outside [0,1]");

    // easy-to-hard order; ties resolved by sample id
    std::vector<std::size_t> rank(n);
    std::iota(rank.begin(), rank.end(), std::size_t{0});
    std::sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) {
        const auto& ea = table.entries[a];
        const auto& eb = table.entries[b];
        if (ea.ds != eb.ds) return ea.ds < eb.ds;
        return ea.sample_id < eb.sample_id;
    });

    CurriculumSchedule schedule;
    schedule.mode = mode;
    schedule.m = m;
    schedule.seed = seed;

    // balanced contiguous buckets over the sorted order
    const std::size_t base = n / m, extra = n % m;
    std::size_t cursor = 0;
    for (std::size_t b = 0; b < m; ++b) {
        const std::size_t len = base + (b < extra ? 1 : 0);
        std::vector<std::size_t> bucket;
        bucket.reserve(len);
        for (std::size_t j = 0; j < len; ++j)
            bucket.push_back(table.entries[rank[cursor + j]].index);
        cursor += len;
        schedule.buckets.push_back(std::move(bucket));
    }

    schedule.stages.assign(m + 1, {});
    for (std::size_t b = 0; b < m; ++b) {
        const auto& bucket = schedule.buckets[b];
        if (mode == ScheduleMode::literal) {
            // every stage takes a contiguous slice; the remainder rows go to
            // the last stage
            const std::size_t chunk = bucket.size() / m;
            for (std::size_t j = 0; j < m; ++j) {
                const std::size_t lo = j * chunk;
                const std::size_t hi =
                    j + 1 == m ? bucket.size() : (j + 1) * chunk;
                auto& stage = schedule.stages[j];
                stage.insert(stage.end(), bucket.begin() + lo,
                             bucket.begin() + hi);
            }
        } else {
            // cumulative: bucket b is split across the stages that have
            // unlocked it (b..m-1).  Rows are dealt round-robin in ascending
            // difficulty so each eligible stage receives an even spread of
            // the bucket; contiguous slicing would let a short bucket dump
            // wholesale into one stage and break the easy-to-hard ordering
            // of stage means.
            const std::size_t eligible = m - b;
            for (std::size_t r = 0; r < bucket.size(); ++r)
                schedule.stages[b + (r % eligible)].push_back(bucket[r]);
        }
    }
    for (const auto& e : table.entries)
        schedule.stages[m].push_back(e.index);

    const Rng root(seed);
    for (std::size_t s = 0; s <= m; ++s) {
        Rng stage_rng = root.derive(s);
        stage_rng.shuffle(schedule.stages[s]);
    }
    return schedule;
}

// ==== Staged training ====

std::vector<StageLog> curriculum_train(CaptionModel& model,
                                       const std::vector<TrainSample>& samples,
                                       const CurriculumSchedule& schedule,
                                       const std::vector<TrainSample>& val,
                                       const Vocabulary& vocab,
                                       const TrainConfig& per_stage) {
    if (schedule.stages.size() != schedule.m + 1)
        throw std::invalid_argument("curriculum_train: schedule has " +
                                    std::to_string(schedule.stages.size()) +
                                    " stages, expected " +
                                    std::to_string(schedule.m + 1));
    for (const auto& stage : schedule.stages)
        for (const std::size_t idx : stage)
            if (idx >= samples.size())
                throw std::invalid_argument(
                    "curriculum_train: stage index " + std::to_string(idx) +
                    " outside dataset of " + std::to_string(samples.size()));

    const Rng root(per_stage.seed);
    std::vector<StageLog> logs;
    std::size_t running_steps = per_stage.start_step;
    for (std::size_t s = 0; s < schedule.stages.size(); ++s) {
        const auto& stage_indices = schedule.stages[s];
        StageLog row;
        row.stage = s + 1;
        row.n_samples = stage_indices.size();
        row.steps = running_steps;
        if (!stage_indices.empty()) {
            std::vector<TrainSample> stage_samples;
            stage_samples.reserve(stage_indices.size());
            for (const std::size_t idx : stage_indices)
                stage_samples.push_back(samples[idx]);

            TrainConfig tc = per_stage;
            tc.start_step = running_steps;
            if (s > 0) tc.warmup_fraction = 0.0;
            tc.seed = root.derive(kStageSeedBase + s).seed();
            TrainResult result;
            try {
                result = train_model(model, stage_samples, val, vocab, tc);
            } catch (const std::runtime_error& e) {
                throw std::runtime_error("stage " + std::to_string(s + 1) +
                                         ": " + e.what());
            }
            running_steps = result.steps;
            row.steps = running_steps;
            row.mean_loss = result.log.back().mean_loss;
            row.val_bleu1 = result.log.back().val_bleu1;
            row.val_bleu4 = result.log.back().val_bleu4;
        }
        logs.push_back(row);
    }
    return logs;
}

// ==== Persistence ====

void write_difficulty_csv(const std::string& path, const DifficultyTable& table) {
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw std::runtime_error("cannot open " + path + " for writing");
    out << "sample_id,shard_id,ds";
    for (std::size_t k = 1; k < table.m; ++k) out << ",metric_" << k;
    out << "\n";
    for (const auto& e : table.entries) {
        if (e.scorer_metrics.size() + 1 != table.m)
            throw std::invalid_argument(
                "difficulty csv: sample " + std::to_string(e.sample_id) +
                " has " + std::to_string(e.scorer_metrics.size()) +
                " scorer metrics, expected " + std::to_string(table.m - 1));
        out << e.sample_id << ',' << e.home_shard << ',' << fmt_double(e.ds);
        for (const auto& [scorer, metric] : e.scorer_metrics) {
            (void)scorer;
            out << ',' << fmt_double(metric);
        }
        out << "\n";
    }
    if (!out)
        throw std::runtime_error("write failed for " + path);
}

DifficultyTable load_difficulty_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error("difficulty csv: " + path + " is empty");
    const auto header = split_csv_line(line);
    if (header.size() < 3 || header[0] != "sample_id" ||
        header[1] != "shard_id" || header[2] != "ds")
        throw std::runtime_error(
            "difficulty csv: bad header, expected sample_id,shard_id,ds,...");

    DifficultyTable table;
    table.m = header.size() - 2;  // ds column plus m-1 metric columns
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size())
            throw std::runtime_error("difficulty csv line " +
                                     std::to_string(line_no) + ": has " +
                                     std::to_string(cells.size()) +
                                     " cells, expected " +
                                     std::to_string(header.size()));
        DifficultyEntry e;
        e.index = table.entries.size();
        e.sample_id = static_cast<std::uint64_t>(
            parse_double(cells[0], line_no, "sample_id"));
        const double shard = parse_double(cells[1], line_no, "shard_id");
        e.home_shard = static_cast<std::size_t>(shard);
        if (e.home_shard >= table.m)
            throw std::runtime_error("difficulty csv line " +
                                     std::to_string(line_no) + ": shard " +
                                     cells[1] + " outside [0," +
                                     std::to_string(table.m) + ")");
        e.ds = parse_double(cells[2], line_no, "ds");
        if (!(e.ds >= 0.0 && e.ds <= 1.0))
            throw std::runtime_error("difficulty csv line " +
                                     std::to_string(line_no) + ": ds " +
                                     cells[2] + " outside [0,1]");
        double shortfall = 0.0;
        std::size_t scorer = 0;
        for (std::size_t c = 3; c < cells.size(); ++c) {
            if (scorer == e.home_shard) ++scorer;  // home shard never scores
            const double metric =
                parse_double(cells[c], line_no, "metric_" + std::to_string(c - 2));
            e.scorer_metrics.emplace_back(scorer, metric);
            shortfall += 1.0 - metric;
            ++scorer;
        }
        if (!e.scorer_metrics.empty() &&
            std::abs(e.ds - shortfall / static_cast<double>(
                                            e.scorer_metrics.size())) > 1e-9)
            throw std::runtime_error("difficulty csv line " +
                                     std::to_string(line_no) +
                                     ": ds does not match its scorer metrics");
        table.entries.push_back(std::move(e));
    }
    return table;
}

void write_schedule_json(const std::string& path,
                         const CurriculumSchedule& schedule,
                         const std::vector<TrainSample>& samples) {
    auto to_ids = [&](const std::vector<std::size_t>& indices) {
        std::vector<std::uint64_t> ids;
        ids.reserve(indices.size());
        for (const std::size_t idx : indices) {
            if (idx >= samples.size())
                throw std::invalid_argument(
                    "schedule json: index " + std::to_string(idx) +
                    " outside dataset of " + std::to_string(samples.size()));
            ids.push_back(samples[idx].id);
        }
        return ids;
    };
    nlohmann::json j;
    j["mode"] = schedule_mode_name(schedule.mode);
    j["m"] = schedule.m;
    j["seed"] = schedule.seed;
    j["buckets"] = nlohmann::json::array();
    for (const auto& bucket : schedule.buckets)
        j["buckets"].push_back(to_ids(bucket));
    j["stages"] = nlohmann::json::array();
    for (const auto& stage : schedule.stages)
        j["stages"].push_back(to_ids(stage));

    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw std::runtime_error("cannot open " + path + " for writing");
    out << j.dump(2) << "\n";
    if (!out)
        throw std::runtime_error("write failed for " + path);
}

CurriculumSchedule load_schedule_json(const std::string& path,
                                      const std::vector<TrainSample>& samples) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("schedule json: " + path + ": " + e.what());
    }

    std::unordered_map<std::uint64_t, std::size_t> index_of;
    for (std::size_t i = 0; i < samples.size(); ++i)
        if (!index_of.emplace(samples[i].id, i).second)
            throw std::invalid_argument("schedule json: duplicate sample id " +
                                        std::to_string(samples[i].id) +
                                        " in dataset");
    auto to_indices = [&](const nlohmann::json& ids) {
        std::vector<std::size_t> indices;
        indices.reserve(ids.size());
        for (const auto& id : ids) {
            const auto it = index_of.find(id.get<std::uint64_t>());
            if (it == index_of.end())
                throw std::runtime_error("schedule json: unknown sample id " +
                                         id.dump());
            indices.push_back(it->second);
        }
        return indices;
    };

    CurriculumSchedule schedule;
    try {
        schedule.mode = schedule_mode_from_name(j.at("mode").get<std::string>());
        schedule.m = j.at("m").get<std::size_t>();
        schedule.seed = j.at("seed").get<std::uint64_t>();
        for (const auto& bucket : j.at("buckets"))
            schedule.buckets.push_back(to_indices(bucket));
        for (const auto& stage : j.at("stages"))
            schedule.stages.push_back(to_indices(stage));
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("schedule json: " + path + ": " + e.what());
    }
    if (schedule.buckets.size() != schedule.m)
        throw std::runtime_error("schedule json: " +
                                 std::to_string(schedule.buckets.size()) +
                                 " buckets for m=" + std::to_string(schedule.m));
    if (schedule.stages.size() != schedule.m + 1)
        throw std::runtime_error("schedule json: " +
                                 std::to_string(schedule.stages.size()) +
                                 " stages for m=" + std::to_string(schedule.m));
    return schedule;
}

}  // namespace dgcn
