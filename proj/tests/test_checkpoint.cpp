#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <fstream>
#include <sstream>

#include "dgcn/checkpoint.hpp"
#include "dgcn/common.hpp"
#include "dgcn/config_io.hpp"

using namespace dgcn;

namespace {

std::string read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(bool(in));
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_bytes(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    REQUIRE(bool(out));
}

ModelConfig small_config(std::size_t vocab_size) {
    ModelConfig cfg;
    cfg.vocab_size = vocab_size;
    cfg.feature_dim = 16;
    cfg.gcn_dim = 8;
    cfg.d_model = 8;
    cfg.n_heads = 2;
    cfg.n_layers = 1;
    cfg.embed_dim = 8;
    cfg.max_len = 12;
    return cfg;
}

struct Fixture {
    std::vector<SceneSample> corpus;
    Vocabulary vocab;
    ModelConfig config;

    Fixture() {
        SyntheticSceneSpec spec;
        spec.seed = 77;
        corpus = generate_corpus(spec, 8);
        vocab = Vocabulary::build(corpus, 1);
        config = small_config(vocab.size());
    }

    Tensor features(std::size_t i) const {
        const auto& regions = corpus[i].regions;
        std::vector<float> v;
        for (const auto& r : regions) v.insert(v.end(), r.feature.begin(), r.feature.end());
        return Tensor::from_values({regions.size(), regions.front().feature.size()},
                                   std::move(v));
    }

    SpatialGraph graph(std::size_t i) const {
        std::vector<Box> boxes;
        for (const auto& r : corpus[i].regions) boxes.push_back(r.box);
        return build_spatial_graph(boxes, 1.0, 1.0);
    }
};

}  // namespace

TEST_CASE("raw checkpoints round-trip blocks bit-exactly") {
    Checkpoint cp;
    cp.config_json = "{\"note\":\"anything\"}";
    cp.blocks.emplace_back("alpha", Tensor::from_values({2, 3}, {1, 2, 3, 4, 5, 6}));
    cp.blocks.emplace_back("beta.bias", Tensor::from_values({4}, {0.5f, -0.25f, 0, 9}));
    save_checkpoint("raw.ckpt", cp);

    const auto loaded = load_checkpoint("raw.ckpt");
    CHECK(loaded.config_json == cp.config_json);
    REQUIRE(loaded.blocks.size() == 2);
    CHECK(loaded.blocks[0].first == "alpha");
    CHECK(loaded.blocks[0].second.shape() == Shape{2, 3});
    CHECK(loaded.blocks[0].second.values() == cp.blocks[0].second.values());
    CHECK(loaded.blocks[1].first == "beta.bias");
    CHECK(loaded.blocks[1].second.values() == cp.blocks[1].second.values());

    save_checkpoint("raw2.ckpt", loaded);
    CHECK(read_bytes("raw2.ckpt") == read_bytes("raw.ckpt"));
}

TEST_CASE("malformed checkpoints fail with byte offsets") {
    Checkpoint cp;
    cp.config_json = "{}";
    cp.blocks.emplace_back("w", Tensor::from_values({2}, {1, 2}));
    save_checkpoint("m.ckpt", cp);
    const std::string good = read_bytes("m.ckpt");

    SUBCASE("bad magic") {
        std::string bad = good;
        bad[0] = 'x';
        write_bytes("mbad.ckpt", bad);
        CHECK_THROWS_WITH_AS(load_checkpoint("mbad.ckpt"),
                             doctest::Contains("bad magic"), std::runtime_error);
    }
    SUBCASE("truncation") {
        write_bytes("mbad.ckpt", good.substr(0, good.size() - 3));
        CHECK_THROWS_WITH_AS(load_checkpoint("mbad.ckpt"),
                             doctest::Contains("truncated"), std::runtime_error);
    }
    SUBCASE("trailing bytes") {
        write_bytes("mbad.ckpt", good + "!");
        CHECK_THROWS_WITH_AS(load_checkpoint("mbad.ckpt"),
                             doctest::Contains("trailing"), std::runtime_error);
    }
    SUBCASE("non-finite parameter") {
        std::string bad = good;
        const std::size_t value_at = bad.size() - 8;  // first of two floats
        bad[value_at + 0] = '\x00';
        bad[value_at + 1] = '\x00';
        bad[value_at + 2] = '\x80';
        bad[value_at + 3] = '\x7f';  // +inf
        write_bytes("mbad.ckpt", bad);
        CHECK_THROWS_WITH_AS(load_checkpoint("mbad.ckpt"),
                             doctest::Contains("non-finite"), std::runtime_error);
    }
}

TEST_CASE("model checkpoints restore every parameter bit-exactly") {
    Fixture fx;
    for (auto mode : {EncoderMode::dual_gcn, EncoderMode::raw_regions}) {
        ModelConfig cfg = fx.config;
        cfg.encoder_mode = mode;
        Rng rng(5);
        CaptionModel model(cfg, rng);
        save_model_checkpoint("model.ckpt", model, cfg, fx.vocab, 123);

        auto restored = load_model_checkpoint("model.ckpt");
        CHECK(restored.optimizer_step == 123);
        CHECK(restored.config.encoder_mode == cfg.encoder_mode);
        CHECK(restored.config.vocab_size == cfg.vocab_size);
        CHECK(restored.vocab.size() == fx.vocab.size());
        CHECK(restored.vocab.token_of(4) == fx.vocab.token_of(4));

        auto original_params = model.parameters();
        auto restored_params = restored.model.parameters();
        REQUIRE(original_params.size() == restored_params.size());
        for (std::size_t i = 0; i < original_params.size(); ++i) {
            REQUIRE(original_params[i].size() == restored_params[i].size());
            CHECK(std::memcmp(original_params[i].values().data(),
                              restored_params[i].values().data(),
                              original_params[i].size() * sizeof(float)) == 0);
        }

        // a fresh save of the restored model reproduces identical bytes
        save_model_checkpoint("model2.ckpt", restored.model, restored.config,
                              restored.vocab, restored.optimizer_step);
        CHECK(read_bytes("model2.ckpt") == read_bytes("model.ckpt"));
    }
}

TEST_CASE("restored models behave identically to the originals") {
    Fixture fx;
    ModelConfig cfg = fx.config;
    cfg.decoder_kind = DecoderKind::recurrent;  // exercise the GRU block set too
    Rng rng(6);
    CaptionModel model(cfg, rng);
    save_model_checkpoint("beh.ckpt", model, cfg, fx.vocab, 0);
    auto restored = load_model_checkpoint("beh.ckpt");

    const auto feats = fx.features(0);
    const auto graph = fx.graph(0);
    const std::vector<std::vector<float>> neighbors(
        2, std::vector<float>(cfg.gcn_dim, 0.25f));
    const auto caption = fx.vocab.encode(fx.corpus[0].references[0]);

    const float l1 = model.loss(feats, graph, neighbors, caption).item();
    const float l2 = restored.model.loss(feats, graph, neighbors, caption).item();
    CHECK(l1 == l2);

    BeamConfig beam;
    beam.beam_width = 2;
    beam.max_len = cfg.max_len;
    const auto c1 = model.generate(feats, graph, neighbors, beam);
    const auto c2 = restored.model.generate(feats, graph, neighbors, beam);
    CHECK(c1.tokens == c2.tokens);
    CHECK(c1.log_prob == c2.log_prob);
}

TEST_CASE("model checkpoint cross-checks blocks against the configuration") {
    Fixture fx;
    Rng rng(7);
    CaptionModel model(fx.config, rng);
    save_model_checkpoint("x.ckpt", model, fx.config, fx.vocab, 1);
    auto raw = load_checkpoint("x.ckpt");

    SUBCASE("missing block") {
        raw.blocks.pop_back();
        save_checkpoint("xbad.ckpt", raw);
        CHECK_THROWS_WITH_AS(load_model_checkpoint("xbad.ckpt"),
                             doctest::Contains("missing block"),
                             std::runtime_error);
    }
    SUBCASE("unexpected extra block") {
        raw.blocks.emplace_back("stray", Tensor::from_values({1}, {0.0f}));
        save_checkpoint("xbad.ckpt", raw);
        CHECK_THROWS_WITH_AS(load_model_checkpoint("xbad.ckpt"),
                             doctest::Contains("blocks"), std::runtime_error);
    }
    SUBCASE("duplicate block") {
        raw.blocks.push_back(raw.blocks.front());
        save_checkpoint("xbad.ckpt", raw);
        CHECK_THROWS_WITH_AS(load_model_checkpoint("xbad.ckpt"),
                             doctest::Contains("duplicate"), std::runtime_error);
    }
    SUBCASE("shape mismatch") {
        auto& victim = raw.blocks.front().second;
        victim = Tensor::zeros({1, victim.size()});
        save_checkpoint("xbad.ckpt", raw);
        CHECK_THROWS_WITH_AS(load_model_checkpoint("xbad.ckpt"),
                             doctest::Contains("shape"), std::runtime_error);
    }
    SUBCASE("vocabulary size disagreement") {
        nlohmann::json echo = nlohmann::json::parse(raw.config_json);
        echo["vocab"].push_back("extra_token");
        raw.config_json = echo.dump();
        save_checkpoint("xbad.ckpt", raw);
        CHECK_THROWS_WITH_AS(load_model_checkpoint("xbad.ckpt"),
                             doctest::Contains("vocab"), std::runtime_error);
    }
}

TEST_CASE("model config json conversions invert each other") {
    ModelConfig cfg = small_config(32);
    cfg.encoder_mode = EncoderMode::object_gcn;
    cfg.decoder_kind = DecoderKind::recurrent;
    cfg.dropout = 0.25;
    cfg.self_loops = false;
    const auto j = model_config_to_json(cfg);
    const auto back = model_config_from_json(j);
    CHECK(back.vocab_size == cfg.vocab_size);
    CHECK(back.feature_dim == cfg.feature_dim);
    CHECK(back.gcn_dim == cfg.gcn_dim);
    CHECK(back.d_model == cfg.d_model);
    CHECK(back.n_heads == cfg.n_heads);
    CHECK(back.n_layers == cfg.n_layers);
    CHECK(back.embed_dim == cfg.embed_dim);
    CHECK(back.knn_k == cfg.knn_k);
    CHECK(back.max_len == cfg.max_len);
    CHECK(back.encoder_mode == cfg.encoder_mode);
    CHECK(back.decoder_kind == cfg.decoder_kind);
    CHECK(back.self_loops == cfg.self_loops);
    CHECK(back.dropout == cfg.dropout);
    CHECK_THROWS_AS(model_config_from_json(nlohmann::json::object()),
                    nlohmann::json::exception);
}
