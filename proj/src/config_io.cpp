#include "dgcn/config_io.hpp"

namespace dgcn {

nlohmann::json model_config_to_json(const ModelConfig& cfg) {
    nlohmann::json j;
    j["vocab_size"] = cfg.vocab_size;
    j["feature_dim"] = cfg.feature_dim;
    j["gcn_dim"] = cfg.gcn_dim;
    j["d_model"] = cfg.d_model;
    j["n_heads"] = cfg.n_heads;
    j["n_layers"] = cfg.n_layers;
    j["embed_dim"] = cfg.embed_dim;
    j["knn_k"] = cfg.knn_k;
    j["max_len"] = cfg.max_len;
    j["encoder_mode"] = encoder_mode_name(cfg.encoder_mode);
    j["decoder_kind"] = decoder_kind_name(cfg.decoder_kind);
    j["self_loops"] = cfg.self_loops;
    j["dropout"] = cfg.dropout;
    return j;
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig cfg;
    cfg.vocab_size = j.at("vocab_size").get<std::size_t>();
    cfg.feature_dim = j.at("feature_dim").get<std::size_t>();
    cfg.gcn_dim = j.at("gcn_dim").get<std::size_t>();
    cfg.d_model = j.at("d_model").get<std::size_t>();
    cfg.n_heads = j.at("n_heads").get<std::size_t>();
    cfg.n_layers = j.at("n_layers").get<std::size_t>();
    cfg.embed_dim = j.at("embed_dim").get<std::size_t>();
    cfg.knn_k = j.at("knn_k").get<std::size_t>();
    cfg.max_len = j.at("max_len").get<std::size_t>();
    cfg.encoder_mode = encoder_mode_from_name(j.at("encoder_mode").get<std::string>());
    cfg.decoder_kind = decoder_kind_from_name(j.at("decoder_kind").get<std::string>());
    cfg.self_loops = j.at("self_loops").get<bool>();
    cfg.dropout = j.at("dropout").get<double>();
    return cfg;
}

}  // namespace dgcn
