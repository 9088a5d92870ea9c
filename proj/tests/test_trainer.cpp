#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>

#include "dgcn/graph.hpp"
#include "dgcn/metrics.hpp"
#include "dgcn/trainer.hpp"

using namespace dgcn;

namespace {

ModelConfig tiny_config(std::size_t vocab_size, EncoderMode mode) {
    ModelConfig cfg;
    cfg.vocab_size = vocab_size;
    cfg.feature_dim = 16;
    cfg.gcn_dim = 8;
    cfg.d_model = 16;
    cfg.n_heads = 2;
    cfg.n_layers = 1;
    cfg.embed_dim = 16;
    cfg.knn_k = 3;
    cfg.max_len = 12;
    cfg.encoder_mode = mode;
    return cfg;
}

struct Fixture {
    std::vector<SceneSample> scenes;
    Vocabulary vocab;

    explicit Fixture(std::size_t n, std::uint64_t seed = 21) {
        SyntheticSceneSpec spec;
        spec.seed = seed;
        scenes = generate_corpus(spec, n);
        vocab = Vocabulary::build(scenes, 1);
    }
};

// brute-force k-nearest oracle over squared distance, ties by index
std::vector<std::size_t> o_nearest(const std::vector<std::vector<float>>& pool,
                                   const std::vector<float>& q, std::size_t k,
                                   std::size_t exclude) {
    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < pool.size(); ++i)
        if (i != exclude) ids.push_back(i);
    std::stable_sort(ids.begin(), ids.end(), [&](std::size_t a, std::size_t b) {
        double da = 0.0, db = 0.0;
        for (std::size_t j = 0; j < q.size(); ++j) {
            da += (pool[a][j] - q[j]) * (double)(pool[a][j] - q[j]);
            db += (pool[b][j] - q[j]) * (double)(pool[b][j] - q[j]);
        }
        return da < db;
    });
    ids.resize(std::min(k, ids.size()));
    return ids;
}

}  // namespace

TEST_CASE("prepare_samples lowers scenes into model inputs") {
    Fixture fx(6);
    const auto cfg = tiny_config(fx.vocab.size(), EncoderMode::dual_gcn);
    const auto samples = prepare_samples(fx.scenes, fx.vocab, cfg);
    REQUIRE(samples.size() == 6);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        CHECK(s.id == fx.scenes[i].id);
        CHECK(s.features.shape() ==
              Shape{fx.scenes[i].regions.size(), cfg.feature_dim});
        CHECK(s.graph.n_nodes == fx.scenes[i].regions.size());
        REQUIRE(s.caption_ids.size() == fx.scenes[i].references.size());
        for (std::size_t r = 0; r < s.caption_ids.size(); ++r) {
            CHECK(s.caption_ids[r] == fx.vocab.encode(fx.scenes[i].references[r]));
            CHECK(s.references[r] == fx.scenes[i].references[r]);
        }
    }

    SUBCASE("feature width mismatch is rejected") {
        auto wide = cfg;
        wide.feature_dim = 32;
        CHECK_THROWS_WITH_AS(prepare_samples(fx.scenes, fx.vocab, wide),
                             doctest::Contains("feature width"),
                             std::invalid_argument);
    }
    SUBCASE("self-loop setting flows into the graph") {
        auto bare = cfg;
        bare.self_loops = false;
        const auto no_loops = prepare_samples(fx.scenes, fx.vocab, bare);
        for (const auto& e : no_loops[0].graph.edges) CHECK(e.src != e.dst);
        bool has_loop = false;
        for (const auto& e : samples[0].graph.edges)
            if (e.src == e.dst) has_loop = true;
        CHECK(has_loop);
    }
}

TEST_CASE("nearest_rows matches knn_select and the brute-force oracle") {
    Rng rng(33);
    std::vector<std::vector<float>> pool(20, std::vector<float>(5));
    for (auto& row : pool)
        for (auto& x : row) x = static_cast<float>(rng.uniform(-1, 1));

    SUBCASE("member queries agree with knn_select") {
        for (std::size_t q = 0; q < pool.size(); ++q) {
            const auto ids = knn_select(pool, q, 4);
            const auto rows = nearest_rows(pool, pool[q], 4, q);
            REQUIRE(rows.size() == ids.size());
            for (std::size_t i = 0; i < ids.size(); ++i)
                CHECK(rows[i] == pool[ids[i]]);
        }
    }
    SUBCASE("outside queries agree with the oracle") {
        for (int t = 0; t < 10; ++t) {
            std::vector<float> q(5);
            for (auto& x : q) x = static_cast<float>(rng.uniform(-1, 1));
            const auto ids = o_nearest(pool, q, 6, kNoExclusion);
            const auto rows = nearest_rows(pool, q, 6);
            REQUIRE(rows.size() == ids.size());
            for (std::size_t i = 0; i < ids.size(); ++i)
                CHECK(rows[i] == pool[ids[i]]);
        }
    }
    SUBCASE("k beyond the pool clamps") {
        CHECK(nearest_rows(pool, pool[0], 99, 0).size() == 19);
        CHECK(nearest_rows(pool, pool[0], 99).size() == 20);
    }
    SUBCASE("distance ties break toward the lower index") {
        std::vector<std::vector<float>> flat = {{1.f}, {-1.f}, {1.f}, {0.5f}};
        const auto rows = nearest_rows(flat, {0.0f}, 3);
        REQUIRE(rows.size() == 3);
        CHECK(rows[0] == std::vector<float>{0.5f});
        CHECK(rows[1] == std::vector<float>{1.f});   // index 0 before 1 and 2
        CHECK(rows[2] == std::vector<float>{-1.f});  // index 1 before 2
    }
    SUBCASE("width mismatch is rejected") {
        CHECK_THROWS_AS(nearest_rows(pool, {1.f, 2.f}, 2), std::invalid_argument);
    }
}

TEST_CASE("training reduces loss, logs validation, and is deterministic") {
    Fixture fx(20);
    const auto cfg = tiny_config(fx.vocab.size(), EncoderMode::raw_regions);
    const auto all = prepare_samples(fx.scenes, fx.vocab, cfg);
    const std::vector<TrainSample> train(all.begin(), all.begin() + 16);
    const std::vector<TrainSample> val(all.begin() + 16, all.end());

    TrainConfig tc;
    tc.lr = 1e-2;
    tc.epochs = 3;
    tc.seed = 5;

    Rng init1(9);
    CaptionModel m1(cfg, init1);
    const auto r1 = train_model(m1, train, val, fx.vocab, tc);

    REQUIRE(r1.log.size() == 3);
    CHECK(r1.steps == 3 * 16);
    for (const auto& row : r1.log) {
        CHECK(std::isfinite(row.mean_loss));
        CHECK(row.val_bleu1 >= 0.0);
        CHECK(row.val_bleu1 <= 1.0);
        CHECK(row.val_bleu4 >= 0.0);
        CHECK(row.val_bleu4 <= 1.0);
    }
    CHECK(r1.log.back().mean_loss < r1.log.front().mean_loss);

    SUBCASE("same seed reproduces the run bit-for-bit") {
        Rng init2(9);
        CaptionModel m2(cfg, init2);
        const auto r2 = train_model(m2, train, val, fx.vocab, tc);
        REQUIRE(r2.log.size() == r1.log.size());
        for (std::size_t i = 0; i < r1.log.size(); ++i) {
            CHECK(r2.log[i].mean_loss == r1.log[i].mean_loss);
            CHECK(r2.log[i].val_bleu1 == r1.log[i].val_bleu1);
            CHECK(r2.log[i].val_bleu4 == r1.log[i].val_bleu4);
        }
        auto p1 = m1.parameters();
        auto p2 = m2.parameters();
        REQUIRE(p1.size() == p2.size());
        for (std::size_t i = 0; i < p1.size(); ++i)
            CHECK(std::memcmp(p1[i].values().data(), p2[i].values().data(),
                              p1[i].size() * sizeof(float)) == 0);
    }
    SUBCASE("no validation set leaves the sentinel") {
        Rng init3(9);
        CaptionModel m3(cfg, init3);
        const auto r3 = train_model(m3, train, {}, fx.vocab, tc);
        CHECK(r3.log.back().val_bleu1 == -1.0);
        CHECK(r3.log.back().val_bleu4 == -1.0);
    }
}

TEST_CASE("dual-mode training refreshes the neighbor pool and trains") {
    Fixture fx(12, 34);
    auto cfg = tiny_config(fx.vocab.size(), EncoderMode::dual_gcn);
    cfg.knn_k = 20;  // clamps to the 11 other images
    const auto train = prepare_samples(fx.scenes, fx.vocab, cfg);

    TrainConfig tc;
    tc.lr = 1e-2;
    tc.epochs = 2;
    Rng init(11);
    CaptionModel model(cfg, init);
    const auto result = train_model(model, train, {}, fx.vocab, tc);
    CHECK(result.steps == 2 * 12);
    CHECK(result.log.back().mean_loss < result.log.front().mean_loss);

    const auto pool = pooled_corpus(model, train);
    CHECK(pool.size() == 12);
    const auto caption = caption_sample(model, train[0], pool, fx.vocab, 1);
    for (const auto& tok : caption) {
        CHECK(tok != "<pad>");
        CHECK(tok != "<bos>");
        CHECK(tok != "<eos>");
    }
}

TEST_CASE("non-finite loss aborts with step and epoch diagnostics") {
    Fixture fx(4);
    const auto cfg = tiny_config(fx.vocab.size(), EncoderMode::raw_regions);
    auto train = prepare_samples(fx.scenes, fx.vocab, cfg);
    for (auto& s : train)
        s.features.values()[0] = std::numeric_limits<float>::quiet_NaN();

    TrainConfig tc;
    tc.epochs = 1;
    tc.shuffle = false;
    Rng init(3);
    CaptionModel model(cfg, init);
    CHECK_THROWS_WITH_AS(train_model(model, train, {}, fx.vocab, tc),
                         doctest::Contains("diverged"), std::runtime_error);
    try {
        Rng init2(3);
        CaptionModel m2(cfg, init2);
        train_model(m2, train, {}, fx.vocab, tc);
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("step 1") != std::string::npos);
        CHECK(std::string(e.what()).find("epoch 1") != std::string::npos);
    }
}

TEST_CASE("resumed step counts extend the schedule") {
    Fixture fx(5);
    const auto cfg = tiny_config(fx.vocab.size(), EncoderMode::raw_regions);
    const auto train = prepare_samples(fx.scenes, fx.vocab, cfg);
    TrainConfig tc;
    tc.epochs = 1;
    tc.start_step = 10;
    Rng init(2);
    CaptionModel model(cfg, init);
    const auto result = train_model(model, train, {}, fx.vocab, tc);
    CHECK(result.steps == 15);
    CHECK_THROWS_AS(train_model(model, {}, {}, fx.vocab, tc),
                    std::invalid_argument);
    CHECK_THROWS_AS(evaluate_split(model, {}, {}, fx.vocab, 1),
                    std::invalid_argument);
}
