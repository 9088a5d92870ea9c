#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dgcn/common.hpp"
#include "dgcn/data_io.hpp"

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

SceneSample refs_only_sample(std::uint64_t id, std::vector<Tokens> refs) {
    SceneSample s;
    s.id = id;
    s.references = std::move(refs);
    return s;
}

SceneSample tiny_sample(std::uint64_t id, std::size_t n_regions,
                        std::size_t width) {
    SceneSample s;
    s.id = id;
    for (std::size_t r = 0; r < n_regions; ++r) {
        Region region;
        const double base = 0.01 * static_cast<double>(r + 1);
        region.box = {base, base, base + 0.25, base + 0.125};
        region.confidence = 0.5f + 0.01f * static_cast<float>(r);
        for (std::size_t c = 0; c < width; ++c)
            region.feature.push_back(static_cast<float>(id) +
                                     0.125f * static_cast<float>(r * width + c));
        s.regions.push_back(std::move(region));
    }
    s.references = {{"a", "red", "circle", "above", "a", "blue", "square"}};
    return s;
}

}  // namespace

// ==== synthetic corpus ====

TEST_CASE("corpus generation is deterministic per seed") {
    SyntheticSceneSpec spec;
    spec.seed = 42;
    const auto a = generate_corpus(spec, 30);
    const auto b = generate_corpus(spec, 30);
    REQUIRE(a.size() == 30);
    save_corpus(a, "det_a.dgrf", "det_a.jsonl");
    save_corpus(b, "det_b.dgrf", "det_b.jsonl");
    CHECK(read_bytes("det_a.dgrf") == read_bytes("det_b.dgrf"));
    CHECK(read_bytes("det_a.jsonl") == read_bytes("det_b.jsonl"));

    SyntheticSceneSpec other = spec;
    other.seed = 43;
    const auto c = generate_corpus(other, 30);
    save_corpus(c, "det_c.dgrf", "det_c.jsonl");
    CHECK(read_bytes("det_a.dgrf") != read_bytes("det_c.dgrf"));
}

TEST_CASE("scene shapes respect the documented bounds") {
    SyntheticSceneSpec spec;
    spec.seed = 7;
    const auto corpus = generate_corpus(spec, 60);
    std::set<std::size_t> object_counts;
    for (const auto& sample : corpus) {
        CHECK(sample.regions.size() >= 2);
        CHECK(sample.regions.size() <= 6);
        object_counts.insert(sample.regions.size());
        CHECK(sample.references.size() >= 1);
        CHECK(sample.references.size() <= 5);
        for (const auto& region : sample.regions) {
            CHECK(region.feature.size() == spec.feature_dim);
            CHECK(region.box.x_min >= 0.0);
            CHECK(region.box.y_min >= 0.0);
            CHECK(region.box.x_max <= 1.0);
            CHECK(region.box.y_max <= 1.0);
            CHECK(region.box.width() > 0.0);
            CHECK(region.box.height() > 0.0);
            CHECK(region.confidence >= 0.5f);
            CHECK(region.confidence <= 1.0f);
        }
    }
    CHECK(object_counts.size() >= 3);  // the 2..6 range is actually sampled
    CHECK_THROWS_AS(generate_corpus(spec, 0), std::invalid_argument);
    SyntheticSceneSpec narrow = spec;
    narrow.feature_dim = 5;
    CHECK_THROWS_AS(generate_corpus(narrow, 1), std::invalid_argument);
}

TEST_CASE("attribute embedding is deterministic and injective at zero noise") {
    SyntheticSceneSpec spec;
    const Box box = {0.25, 0.25, 0.5, 0.5};
    CHECK(region_feature(1, 2, box, spec) == region_feature(1, 2, box, spec));
    std::set<std::vector<float>> seen;
    for (std::size_t s = 0; s < synthetic_shapes().size(); ++s)
        for (std::size_t c = 0; c < synthetic_colors().size(); ++c)
            seen.insert(region_feature(s, c, box, spec));
    CHECK(seen.size() == synthetic_shapes().size() * synthetic_colors().size());
    CHECK_THROWS_AS(region_feature(99, 0, box, spec), std::invalid_argument);

    SyntheticSceneSpec quiet;
    quiet.noise_sigma = 0.0;
    quiet.seed = 5;
    const auto a = generate_corpus(quiet, 10);
    const auto b = generate_corpus(quiet, 10);
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t r = 0; r < a[i].regions.size(); ++r)
            CHECK(a[i].regions[r].feature == b[i].regions[r].feature);
}

TEST_CASE("every generated reference parses back to its scene") {
    SyntheticSceneSpec spec;
    spec.seed = 11;
    const auto corpus = generate_corpus(spec, 50);
    std::size_t checked = 0;
    for (const auto& sample : corpus) {
        for (const auto& ref : sample.references) {
            const auto parsed = parse_template_caption(ref);
            REQUIRE(parsed.has_value());
            CHECK(caption_matches_scene(*parsed, sample, spec));
            ++checked;
        }
    }
    CHECK(checked >= 100);
}

TEST_CASE("the template parser rejects malformed captions") {
    CHECK(!parse_template_caption(tokenize("a red circle above a")).has_value());
    CHECK(!parse_template_caption(tokenize("the red circle above a blue square"))
               .has_value());
    CHECK(!parse_template_caption(tokenize("a pink circle above a blue square"))
               .has_value());
    CHECK(!parse_template_caption(tokenize("a red circle near a blue square"))
               .has_value());
    CHECK(!parse_template_caption({}).has_value());
    // well-formed but wrong scene
    const auto parsed =
        parse_template_caption(tokenize("a red circle above a blue square"));
    REQUIRE(parsed.has_value());
    SyntheticSceneSpec spec;
    SceneSample sample;
    Region region;
    region.box = {0.1, 0.1, 0.2, 0.2};
    region.feature = region_feature(0, 0, region.box, spec);
    sample.regions = {region};
    CHECK(!caption_matches_scene(*parsed, sample, spec));
}

// ==== vocabulary ====

TEST_CASE("vocabulary reserves the special ids and sorts by frequency") {
    const std::vector<SceneSample> corpus = {
        refs_only_sample(0, {{"b", "b", "a"}, {"b", "a", "c"}}),
        refs_only_sample(1, {{"y", "x"}}),
    };
    const auto vocab = Vocabulary::build(corpus, 1);
    CHECK(vocab.id_of("<pad>") == kPadId);
    CHECK(vocab.id_of("<bos>") == kBosId);
    CHECK(vocab.id_of("<eos>") == kEosId);
    CHECK(vocab.id_of("<unk>") == kUnkId);
    CHECK(vocab.id_of("b") == 4);   // three occurrences
    CHECK(vocab.id_of("a") == 5);   // two
    CHECK(vocab.id_of("c") == 6);   // singles tie, lexicographic
    CHECK(vocab.id_of("x") == 7);
    CHECK(vocab.id_of("y") == 8);
    CHECK(vocab.size() == 9);
    CHECK(vocab.id_of("missing") == kUnkId);
    CHECK(vocab.token_of(4) == "b");
    CHECK_THROWS_AS(vocab.token_of(9), std::out_of_range);
    CHECK_THROWS_AS(vocab.token_of(-1), std::out_of_range);
    CHECK_THROWS_AS(Vocabulary::build({}, 1), std::invalid_argument);
}

TEST_CASE("rare tokens collapse to the unknown marker") {
    const std::vector<SceneSample> corpus = {
        refs_only_sample(0, {{"common", "common", "rare"}}),
    };
    const auto vocab = Vocabulary::build(corpus, 2);
    CHECK(vocab.id_of("common") == 4);
    CHECK(vocab.id_of("rare") == kUnkId);
    CHECK(vocab.decode({kUnkId}) == Tokens{"<unk>"});
    CHECK(vocab.size() == 5);
}

TEST_CASE("encode and decode invert each other on in-vocab text") {
    SyntheticSceneSpec spec;
    spec.seed = 3;
    const auto corpus = generate_corpus(spec, 20);
    const auto vocab = Vocabulary::build(corpus, 1);
    for (const auto& sample : corpus)
        for (const auto& ref : sample.references) {
            const auto ids = vocab.encode(ref);
            CHECK(vocab.decode(ids) == ref);
            for (int id : ids) CHECK(id >= 4);
        }
    // caption decoding strips markers but keeps words
    const auto ids = vocab.encode(corpus[0].references[0]);
    std::vector<int> wrapped = {kBosId};
    wrapped.insert(wrapped.end(), ids.begin(), ids.end());
    wrapped.push_back(kEosId);
    CHECK(vocab.decode_caption(wrapped) == corpus[0].references[0]);
}

TEST_CASE("vocabulary payload round-trips through plain tokens") {
    SyntheticSceneSpec spec;
    const auto corpus = generate_corpus(spec, 10);
    const auto vocab = Vocabulary::build(corpus, 1);
    const auto clone = Vocabulary::from_tokens(vocab.payload_tokens());
    CHECK(clone.size() == vocab.size());
    for (std::size_t id = 0; id < vocab.size(); ++id)
        CHECK(clone.token_of(static_cast<int>(id)) ==
              vocab.token_of(static_cast<int>(id)));
    CHECK_THROWS_AS(Vocabulary::from_tokens({"dup", "dup"}), std::invalid_argument);
}

// ==== splits ====

TEST_CASE("split assignment partitions the corpus stably") {
    SyntheticSceneSpec spec;
    spec.seed = 9;
    const auto corpus = generate_corpus(spec, 100);
    std::map<Split, std::size_t> counts;
    std::map<std::uint64_t, Split> assignment;
    for (const auto& sample : corpus) {
        ++counts[sample.split];
        assignment[sample.id] = sample.split;
    }
    CHECK(counts[Split::val] == 10);
    CHECK(counts[Split::test] == 10);
    CHECK(counts[Split::train] == 80);
    const auto again = generate_corpus(spec, 100);
    for (const auto& sample : again) CHECK(assignment.at(sample.id) == sample.split);

    for (auto split : {Split::train, Split::val, Split::test})
        CHECK(split_from_name(split_name(split)) == split);
    CHECK_THROWS_AS(split_from_name("dev"), std::invalid_argument);
}

// ==== binary files ====

TEST_CASE("region files round-trip bit-exactly") {
    SyntheticSceneSpec spec;
    spec.seed = 21;
    const auto corpus = generate_corpus(spec, 12);
    save_corpus(corpus, "rt.dgrf", "rt.jsonl");
    const auto loaded = load_corpus("rt.dgrf", "rt.jsonl");
    REQUIRE(loaded.size() == corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        CHECK(loaded[i].id == corpus[i].id);
        CHECK(loaded[i].split == corpus[i].split);
        CHECK(loaded[i].references == corpus[i].references);
        REQUIRE(loaded[i].regions.size() == corpus[i].regions.size());
        for (std::size_t r = 0; r < corpus[i].regions.size(); ++r) {
            const auto& a = corpus[i].regions[r];
            const auto& b = loaded[i].regions[r];
            CHECK(b.confidence == a.confidence);
            CHECK(b.feature == a.feature);
            CHECK(b.box.x_min == static_cast<double>(static_cast<float>(a.box.x_min)));
            CHECK(b.box.y_max == static_cast<double>(static_cast<float>(a.box.y_max)));
        }
    }
    // writing the loaded corpus again reproduces identical bytes
    save_corpus(loaded, "rt2.dgrf", "rt2.jsonl");
    CHECK(read_bytes("rt2.dgrf") == read_bytes("rt.dgrf"));
    CHECK(read_bytes("rt2.jsonl") == read_bytes("rt.jsonl"));
}

TEST_CASE("region files load without their caption sidecar") {
    SyntheticSceneSpec spec;
    spec.seed = 22;
    const auto corpus = generate_corpus(spec, 6);
    write_region_file("solo.dgrf", corpus);
    const auto loaded = load_region_file("solo.dgrf");
    REQUIRE(loaded.size() == corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        CHECK(loaded[i].id == corpus[i].id);
        CHECK(loaded[i].references.empty());
        REQUIRE(loaded[i].regions.size() == corpus[i].regions.size());
        for (std::size_t r = 0; r < corpus[i].regions.size(); ++r)
            CHECK(loaded[i].regions[r].feature == corpus[i].regions[r].feature);
    }
}

TEST_CASE("a detector-scale sample of 36 regions by 2048 channels parses") {
    const std::vector<SceneSample> corpus = {tiny_sample(5, 36, 2048),
                                             tiny_sample(6, 2, 2048)};
    save_corpus(corpus, "big.dgrf", "big.jsonl");
    const auto loaded = load_corpus("big.dgrf", "big.jsonl");
    REQUIRE(loaded[0].regions.size() == 36);
    for (const auto& region : loaded[0].regions)
        CHECK(region.feature.size() == 2048);
}

TEST_CASE("malformed region files fail with byte offsets") {
    const std::vector<SceneSample> corpus = {tiny_sample(1, 1, 2)};
    save_corpus(corpus, "ok.dgrf", "ok.jsonl");
    const std::string good = read_bytes("ok.dgrf");

    SUBCASE("bad magic") {
        std::string bad = good;
        bad[0] = 'X';
        write_bytes("bad.dgrf", bad);
        CHECK_THROWS_WITH_AS(load_corpus("bad.dgrf", "ok.jsonl"),
                             doctest::Contains("bad magic"), std::runtime_error);
    }
    SUBCASE("unsupported version") {
        std::string bad = good;
        bad[4] = 9;
        write_bytes("bad.dgrf", bad);
        CHECK_THROWS_WITH_AS(load_corpus("bad.dgrf", "ok.jsonl"),
                             doctest::Contains("version"), std::runtime_error);
    }
    SUBCASE("truncation reports expected and actual lengths") {
        write_bytes("bad.dgrf", good.substr(0, good.size() - 2));
        try {
            load_corpus("bad.dgrf", "ok.jsonl");
            FAIL("expected a format error");
        } catch (const std::runtime_error& e) {
            const std::string msg = e.what();
            CHECK(msg.find("truncated") != std::string::npos);
            CHECK(msg.find("need 4 bytes") != std::string::npos);
            CHECK(msg.find(std::to_string(good.size() - 2)) != std::string::npos);
        }
    }
    SUBCASE("trailing bytes are rejected") {
        write_bytes("bad.dgrf", good + "zz");
        CHECK_THROWS_WITH_AS(load_corpus("bad.dgrf", "ok.jsonl"),
                             doctest::Contains("trailing"), std::runtime_error);
    }
    SUBCASE("non-finite values are rejected with their offset") {
        // layout: 12 header + 8 id + 4 O + 4 C + 16 box + 4 confidence = 48
        std::string bad = good;
        bad[48] = '\x00';
        bad[49] = '\x00';
        bad[50] = '\xc0';
        bad[51] = '\x7f';
        write_bytes("bad.dgrf", bad);
        try {
            load_corpus("bad.dgrf", "ok.jsonl");
            FAIL("expected a format error");
        } catch (const std::runtime_error& e) {
            const std::string msg = e.what();
            CHECK(msg.find("non-finite") != std::string::npos);
            CHECK(msg.find("offset 48") != std::string::npos);
        }
    }
    SUBCASE("oversize region counts are rejected") {
        std::string bad = good.substr(0, 20);
        // patch O to 5000 and keep the rest of the image payload absent
        bad += std::string(1, static_cast<char>(5000 & 0xff));
        bad += std::string(1, static_cast<char>((5000 >> 8) & 0xff));
        bad += std::string(2, '\0');
        write_bytes("bad.dgrf", bad + good.substr(24));
        CHECK_THROWS_WITH_AS(load_corpus("bad.dgrf", "ok.jsonl"),
                             doctest::Contains("exceeds"), std::runtime_error);
    }
}

TEST_CASE("caption sidecar validation") {
    const std::vector<SceneSample> corpus = {tiny_sample(1, 1, 2),
                                             tiny_sample(2, 1, 2)};
    save_corpus(corpus, "cap.dgrf", "cap.jsonl");

    SUBCASE("unknown image id") {
        write_bytes("cap_bad.jsonl",
                    "{\"id\": 99, \"refs\": [\"a b\"], \"split\": \"train\"}\n");
        CHECK_THROWS_WITH_AS(load_corpus("cap.dgrf", "cap_bad.jsonl"),
                             doctest::Contains("unknown image id"),
                             std::runtime_error);
    }
    SUBCASE("missing captions") {
        write_bytes("cap_bad.jsonl",
                    "{\"id\": 1, \"refs\": [\"a b\"], \"split\": \"train\"}\n");
        CHECK_THROWS_WITH_AS(load_corpus("cap.dgrf", "cap_bad.jsonl"),
                             doctest::Contains("no captions for image id 2"),
                             std::runtime_error);
    }
    SUBCASE("duplicate captions") {
        write_bytes("cap_bad.jsonl",
                    "{\"id\": 1, \"refs\": [\"a b\"], \"split\": \"train\"}\n"
                    "{\"id\": 1, \"refs\": [\"a b\"], \"split\": \"train\"}\n"
                    "{\"id\": 2, \"refs\": [\"a b\"], \"split\": \"val\"}\n");
        CHECK_THROWS_WITH_AS(load_corpus("cap.dgrf", "cap_bad.jsonl"),
                             doctest::Contains("duplicate"), std::runtime_error);
    }
    SUBCASE("bad JSON names the line") {
        write_bytes("cap_bad.jsonl",
                    "{\"id\": 1, \"refs\": [\"a b\"], \"split\": \"train\"}\n"
                    "not json\n");
        CHECK_THROWS_WITH_AS(load_corpus("cap.dgrf", "cap_bad.jsonl"),
                             doctest::Contains(":2:"), std::runtime_error);
    }
    SUBCASE("too many references") {
        write_bytes(
            "cap_bad.jsonl",
            "{\"id\": 1, \"refs\": [\"a\",\"b\",\"c\",\"d\",\"e\",\"f\"], "
            "\"split\": \"train\"}\n"
            "{\"id\": 2, \"refs\": [\"a b\"], \"split\": \"val\"}\n");
        CHECK_THROWS_WITH_AS(load_corpus("cap.dgrf", "cap_bad.jsonl"),
                             doctest::Contains("1 to 5"), std::runtime_error);
    }
    SUBCASE("unknown split") {
        write_bytes("cap_bad.jsonl",
                    "{\"id\": 1, \"refs\": [\"a b\"], \"split\": \"dev\"}\n"
                    "{\"id\": 2, \"refs\": [\"a b\"], \"split\": \"val\"}\n");
        CHECK_THROWS_WITH_AS(load_corpus("cap.dgrf", "cap_bad.jsonl"),
                             doctest::Contains("unknown split"),
                             std::invalid_argument);
    }
}
