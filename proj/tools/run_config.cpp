#include "run_config.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <type_traits>

#include <json.hpp>

#include "dgcn/curriculum.hpp"

namespace dgcn::cli {

// ==== derived configs ====

ModelConfig RunConfig::model_config(std::size_t vocab_size) const {
    ModelConfig m;
    m.vocab_size = vocab_size;
    m.feature_dim = feature_dim;
    m.gcn_dim = gcn_dim;
    m.d_model = d_model;
    m.n_heads = n_heads;
    m.n_layers = n_layers;
    m.embed_dim = embed_dim;
    m.knn_k = knn_k;
    m.max_len = max_len;
    m.encoder_mode = encoder_mode_from_name(encoder_mode);
    m.decoder_kind = decoder_kind_from_name(decoder_kind);
    m.self_loops = self_loops;
    m.dropout = dropout;
    return m;
}

TrainConfig RunConfig::train_config() const {
    TrainConfig t;
    t.lr = lr;
    t.warmup_fraction = warmup_fraction;
    t.epochs = epochs;
    t.seed = seed;
    t.eval_beam_width = eval_beam_width;
    return t;
}

TrainConfig RunConfig::stage_config() const {
    TrainConfig t = train_config();
    t.epochs = epochs_per_stage;
    return t;
}

SyntheticSceneSpec RunConfig::scene_spec() const {
    SyntheticSceneSpec s;
    s.grid_size = grid_size;
    s.feature_dim = feature_dim;
    s.noise_sigma = noise_sigma;
    s.seed = seed;
    return s;
}

void RunConfig::validate() const {
    if (objects == 0)
        throw std::invalid_argument("config: objects must be positive");
    if (epochs == 0 || epochs_per_stage == 0)
        throw std::invalid_argument("config: epochs must be positive");
    if (shards == 0)
        throw std::invalid_argument("config: shards must be positive");
    if (beam_width == 0 || eval_beam_width == 0)
        throw std::invalid_argument("config: beam widths must be positive");
    if (n_samples == 0)
        throw std::invalid_argument("config: n_samples must be positive");
    if (grid_size < 2)
        throw std::invalid_argument("config: grid_size must be at least 2");
    if (noise_sigma < 0.0)
        throw std::invalid_argument("config: noise_sigma must be non-negative");
    if (beam_alpha < 0.0)
        throw std::invalid_argument("config: beam_alpha must be non-negative");
    if (min_count < 1)
        throw std::invalid_argument("config: min_count must be at least 1");
    // these throw invalid_argument with the offending name on bad input
    encoder_mode_from_name(encoder_mode);
    decoder_kind_from_name(decoder_kind);
    schedule_mode_from_name(schedule_mode);
    difficulty_spec_from_name(difficulty_spec);
    // remaining width/rate checks live with the model configuration
    model_config(8).validate();
}

void apply_toy_profile(RunConfig& cfg) {
    cfg.feature_dim = 16;
    cfg.objects = 8;
    cfg.gcn_dim = 32;
    cfg.d_model = 64;
    cfg.n_heads = 2;
    cfg.n_layers = 2;
    cfg.embed_dim = 64;
    cfg.max_len = 12;
    cfg.lr = 3e-3;
    cfg.n_samples = 300;
}

// ==== JSON layering ====

namespace {

template <typename T>
void read_field(const nlohmann::json& j, const std::string& key, T& into,
                const char* type_name) {
    if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
        // nlohmann stores negative literals as signed; reject before the
        // get<> below silently wraps them around
        if (j.is_number_integer() && !j.is_number_unsigned())
            throw std::invalid_argument("config: field '" + key + "' must be " +
                                        type_name);
    }
    try {
        into = j.get<T>();
    } catch (const nlohmann::json::exception&) {
        throw std::invalid_argument("config: field '" + key + "' must be " +
                                    type_name);
    }
}

void apply_json(RunConfig& cfg, const nlohmann::json& j) {
    if (!j.is_object())
        throw std::invalid_argument("config: top level must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (key == "feature_dim") read_field(value, key, cfg.feature_dim, "an integer");
        else if (key == "objects") read_field(value, key, cfg.objects, "an integer");
        else if (key == "gcn_dim") read_field(value, key, cfg.gcn_dim, "an integer");
        else if (key == "d_model") read_field(value, key, cfg.d_model, "an integer");
        else if (key == "n_heads") read_field(value, key, cfg.n_heads, "an integer");
        else if (key == "n_layers") read_field(value, key, cfg.n_layers, "an integer");
        else if (key == "embed_dim") read_field(value, key, cfg.embed_dim, "an integer");
        else if (key == "knn_k") read_field(value, key, cfg.knn_k, "an integer");
        else if (key == "max_len") read_field(value, key, cfg.max_len, "an integer");
        else if (key == "encoder_mode") read_field(value, key, cfg.encoder_mode, "a string");
        else if (key == "decoder_kind") read_field(value, key, cfg.decoder_kind, "a string");
        else if (key == "self_loops") read_field(value, key, cfg.self_loops, "a boolean");
        else if (key == "dropout") read_field(value, key, cfg.dropout, "a number");
        else if (key == "lr") read_field(value, key, cfg.lr, "a number");
        else if (key == "warmup_fraction") read_field(value, key, cfg.warmup_fraction, "a number");
        else if (key == "epochs") read_field(value, key, cfg.epochs, "an integer");
        else if (key == "epochs_per_stage") read_field(value, key, cfg.epochs_per_stage, "an integer");
        else if (key == "seed") read_field(value, key, cfg.seed, "an integer");
        else if (key == "shards") read_field(value, key, cfg.shards, "an integer");
        else if (key == "schedule_mode") read_field(value, key, cfg.schedule_mode, "a string");
        else if (key == "difficulty_spec") read_field(value, key, cfg.difficulty_spec, "a string");
        else if (key == "curriculum") read_field(value, key, cfg.curriculum, "a boolean");
        else if (key == "beam_width") read_field(value, key, cfg.beam_width, "an integer");
        else if (key == "beam_alpha") read_field(value, key, cfg.beam_alpha, "a number");
        else if (key == "eval_beam_width") read_field(value, key, cfg.eval_beam_width, "an integer");
        else if (key == "min_count") read_field(value, key, cfg.min_count, "an integer");
        else if (key == "workers") read_field(value, key, cfg.workers, "an integer");
        else if (key == "n_samples") read_field(value, key, cfg.n_samples, "an integer");
        else if (key == "grid_size") read_field(value, key, cfg.grid_size, "an integer");
        else if (key == "noise_sigma") read_field(value, key, cfg.noise_sigma, "a number");
        else if (key == "data_dir") read_field(value, key, cfg.data_dir, "a string");
        else if (key == "out_dir") read_field(value, key, cfg.out_dir, "a string");
        else
            throw std::invalid_argument("config: unknown field '" + key + "'");
    }
}

}  // namespace

void apply_config_file(RunConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(path + ": bad JSON: " + e.what());
    }
    apply_json(cfg, j);
}

void apply_overrides(RunConfig& cfg, const ConfigOverrides& o) {
    if (o.feature_dim) cfg.feature_dim = *o.feature_dim;
    if (o.objects) cfg.objects = *o.objects;
    if (o.gcn_dim) cfg.gcn_dim = *o.gcn_dim;
    if (o.d_model) cfg.d_model = *o.d_model;
    if (o.n_heads) cfg.n_heads = *o.n_heads;
    if (o.n_layers) cfg.n_layers = *o.n_layers;
    if (o.embed_dim) cfg.embed_dim = *o.embed_dim;
    if (o.knn_k) cfg.knn_k = *o.knn_k;
    if (o.max_len) cfg.max_len = *o.max_len;
    if (o.encoder_mode) cfg.encoder_mode = *o.encoder_mode;
    if (o.decoder_kind) cfg.decoder_kind = *o.decoder_kind;
    if (o.self_loops) cfg.self_loops = *o.self_loops;
    if (o.dropout) cfg.dropout = *o.dropout;
    if (o.lr) cfg.lr = *o.lr;
    if (o.warmup_fraction) cfg.warmup_fraction = *o.warmup_fraction;
    if (o.epochs) cfg.epochs = *o.epochs;
    if (o.epochs_per_stage) cfg.epochs_per_stage = *o.epochs_per_stage;
    if (o.seed) cfg.seed = *o.seed;
    if (o.shards) cfg.shards = *o.shards;
    if (o.schedule_mode) cfg.schedule_mode = *o.schedule_mode;
    if (o.difficulty_spec) cfg.difficulty_spec = *o.difficulty_spec;
    if (o.curriculum) cfg.curriculum = *o.curriculum;
    if (o.beam_width) cfg.beam_width = *o.beam_width;
    if (o.beam_alpha) cfg.beam_alpha = *o.beam_alpha;
    if (o.eval_beam_width) cfg.eval_beam_width = *o.eval_beam_width;
    if (o.min_count) cfg.min_count = *o.min_count;
    if (o.workers) cfg.workers = *o.workers;
    if (o.n_samples) cfg.n_samples = *o.n_samples;
    if (o.grid_size) cfg.grid_size = *o.grid_size;
    if (o.noise_sigma) cfg.noise_sigma = *o.noise_sigma;
    if (o.data_dir) cfg.data_dir = *o.data_dir;
    if (o.out_dir) cfg.out_dir = *o.out_dir;
}

void apply_env_seed(RunConfig& cfg) {
    const char* raw = std::getenv("DGCN_SEED");
    if (!raw) return;
    const std::string text(raw);
    std::size_t used = 0;
    std::uint64_t value = 0;
    try {
        value = std::stoull(text, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != text.size() || text.empty())
        throw std::invalid_argument("DGCN_SEED must be an unsigned integer, got '" +
                                    text + "'");
    cfg.seed = value;
}

RunConfig resolve_config(bool toy, const std::string& config_path,
                         const ConfigOverrides& overrides) {
    RunConfig cfg;
    if (toy) apply_toy_profile(cfg);
    if (!config_path.empty()) apply_config_file(cfg, config_path);
    apply_overrides(cfg, overrides);
    apply_env_seed(cfg);
    cfg.validate();
    return cfg;
}

// ==== echo ====

std::string config_to_json(const RunConfig& cfg) {
    nlohmann::json j;
    j["feature_dim"] = cfg.feature_dim;
    j["objects"] = cfg.objects;
    j["gcn_dim"] = cfg.gcn_dim;
    j["d_model"] = cfg.d_model;
    j["n_heads"] = cfg.n_heads;
    j["n_layers"] = cfg.n_layers;
    j["embed_dim"] = cfg.embed_dim;
    j["knn_k"] = cfg.knn_k;
    j["max_len"] = cfg.max_len;
    j["encoder_mode"] = cfg.encoder_mode;
    j["decoder_kind"] = cfg.decoder_kind;
    j["self_loops"] = cfg.self_loops;
    j["dropout"] = cfg.dropout;
    j["lr"] = cfg.lr;
    j["warmup_fraction"] = cfg.warmup_fraction;
    j["epochs"] = cfg.epochs;
    j["epochs_per_stage"] = cfg.epochs_per_stage;
    j["seed"] = cfg.seed;
    j["shards"] = cfg.shards;
    j["schedule_mode"] = cfg.schedule_mode;
    j["difficulty_spec"] = cfg.difficulty_spec;
    j["curriculum"] = cfg.curriculum;
    j["beam_width"] = cfg.beam_width;
    j["beam_alpha"] = cfg.beam_alpha;
    j["eval_beam_width"] = cfg.eval_beam_width;
    j["min_count"] = cfg.min_count;
    j["workers"] = cfg.workers;
    j["n_samples"] = cfg.n_samples;
    j["grid_size"] = cfg.grid_size;
    j["noise_sigma"] = cfg.noise_sigma;
    j["data_dir"] = cfg.data_dir;
    j["out_dir"] = cfg.out_dir;
    return j.dump(2) + "\n";
}

void write_resolved_config(const RunConfig& cfg, const std::string& dir) {
    std::filesystem::create_directories(dir);
    const std::string path = dir + "/resolved_config.json";
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << config_to_json(cfg);
}

}  // namespace dgcn::cli
