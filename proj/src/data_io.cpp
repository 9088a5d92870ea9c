#include "dgcn/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "dgcn/binary_io.hpp"
#include "dgcn/common.hpp"

namespace dgcn {

namespace {

constexpr std::size_t kMinObjects = 2;
constexpr std::size_t kMaxObjects = 6;
constexpr std::size_t kMinReferences = 1;
constexpr std::size_t kMaxReferences = 5;
constexpr std::uint32_t kMaxRegionsPerImage = 4096;
constexpr std::uint32_t kMaxFeatureWidth = 65536;
constexpr std::uint32_t kMaxImages = 10'000'000;

const char* kReservedTokens[] = {"<pad>", "<bos>", "<eos>", "<unk>"};
constexpr int kReservedCount = 4;

}  // namespace

// ==== splits ====

const char* split_name(Split split) {
    switch (split) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    throw std::invalid_argument("split_name: unknown split");
}

Split split_from_name(const std::string& name) {
    if (name == "train") return Split::train;
    if (name == "val") return Split::val;
    if (name == "test") return Split::test;
    throw std::invalid_argument("unknown split: " + name);
}

// ==== synthetic scenes ====

const std::vector<std::string>& synthetic_shapes() {
    static const std::vector<std::string> shapes = {"circle", "square", "triangle",
                                                    "star", "diamond"};
    return shapes;
}

const std::vector<std::string>& synthetic_colors() {
    static const std::vector<std::string> colors = {"red",    "blue",   "green",
                                                    "yellow", "purple", "orange"};
    return colors;
}

const std::vector<std::string>& synthetic_relations() {
    static const std::vector<std::string> relations = {"above", "below", "left of",
                                                       "right of"};
    return relations;
}

namespace {

std::size_t min_feature_width() {
    return synthetic_shapes().size() + synthetic_colors().size() + 4;
}

void check_scene_spec(const SyntheticSceneSpec& spec) {
    if (spec.grid_size < 3)
        throw std::invalid_argument("scene spec: grid must be at least 3x3");
    if (spec.feature_dim < min_feature_width())
        throw std::invalid_argument(
            "scene spec: feature_dim must be at least " +
            std::to_string(min_feature_width()));
    if (spec.noise_sigma < 0.0)
        throw std::invalid_argument("scene spec: noise sigma must be >= 0");
}

// caption predicate between object centers, y growing downward
std::size_t spatial_relation(const Box& a, const Box& b) {
    const double dx = a.center_x() - b.center_x();
    const double dy = a.center_y() - b.center_y();
    if (std::abs(dy) >= std::abs(dx)) return dy < 0.0 ? 0 : 1;  // above : below
    return dx < 0.0 ? 2 : 3;                                    // left of : right of
}

Tokens render_caption(std::size_t shape_a, std::size_t color_a,
                      std::size_t relation, std::size_t shape_b,
                      std::size_t color_b) {
    Tokens out = {"a", synthetic_colors()[color_a], synthetic_shapes()[shape_a]};
    for (const auto& word : tokenize(synthetic_relations()[relation]))
        out.push_back(word);
    out.push_back("a");
    out.push_back(synthetic_colors()[color_b]);
    out.push_back(synthetic_shapes()[shape_b]);
    return out;
}

}  // namespace

std::vector<float> region_feature(std::size_t shape, std::size_t color,
                                  const Box& box,
                                  const SyntheticSceneSpec& spec) {
    check_scene_spec(spec);
    if (shape >= synthetic_shapes().size())
        throw std::invalid_argument("region_feature: shape outside inventory");
    if (color >= synthetic_colors().size())
        throw std::invalid_argument("region_feature: color outside inventory");
    std::vector<float> f(spec.feature_dim, 0.0f);
    f[shape] = 1.0f;
    f[synthetic_shapes().size() + color] = 1.0f;
    const std::size_t base = synthetic_shapes().size() + synthetic_colors().size();
    f[base + 0] = static_cast<float>(box.x_min);
    f[base + 1] = static_cast<float>(box.y_min);
    f[base + 2] = static_cast<float>(box.x_max);
    f[base + 3] = static_cast<float>(box.y_max);
    return f;
}

std::vector<SceneSample> generate_corpus(const SyntheticSceneSpec& spec,
                                         std::size_t n_samples) {
    check_scene_spec(spec);
    if (n_samples == 0)
        throw std::invalid_argument("generate_corpus: need at least one sample");

    Rng root(spec.seed);
    const auto n_shapes = synthetic_shapes().size();
    const auto n_colors = synthetic_colors().size();
    const double cell = 1.0 / static_cast<double>(spec.grid_size);

    std::vector<SceneSample> corpus;
    corpus.reserve(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) {
        Rng rng = root.derive(i);
        SceneSample sample;
        sample.id = i;

        const auto n_obj = static_cast<std::size_t>(
            rng.uniform_int(static_cast<std::int64_t>(kMinObjects),
                            static_cast<std::int64_t>(kMaxObjects)));
        std::vector<std::size_t> cells(spec.grid_size * spec.grid_size);
        for (std::size_t c = 0; c < cells.size(); ++c) cells[c] = c;
        rng.shuffle(cells);

        std::vector<std::size_t> shapes, colors;
        for (std::size_t o = 0; o < n_obj; ++o) {
            const std::size_t gx = cells[o] % spec.grid_size;
            const std::size_t gy = cells[o] / spec.grid_size;
            Box box;
            box.x_min = (gx + 0.05 + 0.15 * rng.uniform()) * cell;
            box.y_min = (gy + 0.05 + 0.15 * rng.uniform()) * cell;
            box.x_max = (gx + 0.95 - 0.15 * rng.uniform()) * cell;
            box.y_max = (gy + 0.95 - 0.15 * rng.uniform()) * cell;

            const auto shape = static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<std::int64_t>(n_shapes) - 1));
            const auto color = static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<std::int64_t>(n_colors) - 1));
            shapes.push_back(shape);
            colors.push_back(color);

            Region region;
            region.box = box;
            region.confidence = static_cast<float>(0.5 + 0.5 * rng.uniform());
            region.feature = region_feature(shape, color, box, spec);
            if (spec.noise_sigma > 0.0)
                for (auto& v : region.feature)
                    v += static_cast<float>(rng.normal(0.0, spec.noise_sigma));
            sample.regions.push_back(std::move(region));
        }

        const auto n_refs = static_cast<std::size_t>(rng.uniform_int(
            2, static_cast<std::int64_t>(kMaxReferences)));
        for (std::size_t r = 0; r < n_refs; ++r) {
            const auto a = static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<std::int64_t>(n_obj) - 1));
            auto b = static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<std::int64_t>(n_obj) - 2));
            if (b >= a) ++b;
            const auto rel =
                spatial_relation(sample.regions[a].box, sample.regions[b].box);
            sample.references.push_back(
                render_caption(shapes[a], colors[a], rel, shapes[b], colors[b]));
        }
        corpus.push_back(std::move(sample));
    }

    // seeded 80/10/10 split assignment, disjoint by construction
    std::vector<std::size_t> order(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) order[i] = i;
    Rng split_rng = root.derive(n_samples);  // sample streams use 0..n-1
    split_rng.shuffle(order);
    const std::size_t n_val = n_samples / 10;
    const std::size_t n_test = n_samples / 10;
    for (std::size_t pos = 0; pos < n_samples; ++pos) {
        if (pos < n_val)
            corpus[order[pos]].split = Split::val;
        else if (pos < n_val + n_test)
            corpus[order[pos]].split = Split::test;
        else
            corpus[order[pos]].split = Split::train;
    }
    return corpus;
}

std::optional<ParsedCaption> parse_template_caption(const Tokens& caption) {
    const auto find_index = [](const std::vector<std::string>& pool,
                               const std::string& word) -> std::optional<std::size_t> {
        for (std::size_t i = 0; i < pool.size(); ++i)
            if (pool[i] == word) return i;
        return std::nullopt;
    };
    if (caption.size() < 7 || caption[0] != "a") return std::nullopt;
    const auto color_a = find_index(synthetic_colors(), caption[1]);
    const auto shape_a = find_index(synthetic_shapes(), caption[2]);
    if (!color_a || !shape_a) return std::nullopt;

    // the relation spans everything up to the second article
    std::size_t tail = 3;
    while (tail < caption.size() && caption[tail] != "a") ++tail;
    if (tail + 3 != caption.size()) return std::nullopt;
    std::string relation_text;
    for (std::size_t i = 3; i < tail; ++i) {
        if (i > 3) relation_text += ' ';
        relation_text += caption[i];
    }
    const auto relation = find_index(synthetic_relations(), relation_text);
    const auto color_b = find_index(synthetic_colors(), caption[tail + 1]);
    const auto shape_b = find_index(synthetic_shapes(), caption[tail + 2]);
    if (!relation || !color_b || !shape_b) return std::nullopt;

    ParsedCaption parsed;
    parsed.shape_a = *shape_a;
    parsed.color_a = *color_a;
    parsed.relation = *relation;
    parsed.shape_b = *shape_b;
    parsed.color_b = *color_b;
    return parsed;
}

bool caption_matches_scene(const ParsedCaption& parsed, const SceneSample& sample,
                           const SyntheticSceneSpec& spec) {
    check_scene_spec(spec);
    const auto n_shapes = synthetic_shapes().size();
    const auto n_colors = synthetic_colors().size();
    const auto recover = [&](const Region& region, std::size_t offset,
                             std::size_t count) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < count; ++i)
            if (region.feature[offset + i] > region.feature[offset + best]) best = i;
        return best;
    };
    for (std::size_t a = 0; a < sample.regions.size(); ++a) {
        for (std::size_t b = 0; b < sample.regions.size(); ++b) {
            if (a == b) continue;
            const auto& ra = sample.regions[a];
            const auto& rb = sample.regions[b];
            if (ra.feature.size() < spec.feature_dim ||
                rb.feature.size() < spec.feature_dim)
                return false;
            if (recover(ra, 0, n_shapes) != parsed.shape_a) continue;
            if (recover(ra, n_shapes, n_colors) != parsed.color_a) continue;
            if (recover(rb, 0, n_shapes) != parsed.shape_b) continue;
            if (recover(rb, n_shapes, n_colors) != parsed.color_b) continue;
            if (spatial_relation(ra.box, rb.box) == parsed.relation) return true;
        }
    }
    return false;
}

// ==== vocabulary ====

Vocabulary::Vocabulary() {
    for (int i = 0; i < kReservedCount; ++i) {
        tokens_.emplace_back(kReservedTokens[i]);
        ids_[kReservedTokens[i]] = i;
    }
}

Vocabulary Vocabulary::build(const std::vector<SceneSample>& corpus,
                             int min_count) {
    if (corpus.empty())
        throw std::invalid_argument("vocabulary: corpus is empty");
    if (min_count < 1)
        throw std::invalid_argument("vocabulary: min_count must be >= 1");
    std::map<std::string, std::size_t> counts;
    for (const auto& sample : corpus)
        for (const auto& ref : sample.references)
            for (const auto& token : ref) ++counts[token];

    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(),
                                                            counts.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    Vocabulary vocab;
    for (const auto& [token, count] : ranked) {
        if (count < static_cast<std::size_t>(min_count)) continue;
        vocab.ids_[token] = static_cast<int>(vocab.tokens_.size());
        vocab.tokens_.push_back(token);
    }
    return vocab;
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
    Vocabulary vocab;
    for (const auto& token : tokens) {
        if (vocab.ids_.count(token))
            throw std::invalid_argument("vocabulary: duplicate token " + token);
        vocab.ids_[token] = static_cast<int>(vocab.tokens_.size());
        vocab.tokens_.push_back(token);
    }
    return vocab;
}

int Vocabulary::id_of(const std::string& token) const {
    const auto it = ids_.find(token);
    return it == ids_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::token_of(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
        throw std::out_of_range("vocabulary: id " + std::to_string(id) +
                                " outside [0, " + std::to_string(tokens_.size()) +
                                ")");
    return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(const Tokens& caption) const {
    std::vector<int> ids;
    ids.reserve(caption.size());
    for (const auto& token : caption) ids.push_back(id_of(token));
    return ids;
}

Tokens Vocabulary::decode(const std::vector<int>& ids) const {
    Tokens out;
    out.reserve(ids.size());
    for (int id : ids) out.push_back(token_of(id));
    return out;
}

Tokens Vocabulary::decode_caption(const std::vector<int>& ids) const {
    Tokens out;
    for (int id : ids) {
        if (id == kPadId || id == kBosId || id == kEosId) continue;
        out.push_back(token_of(id));
    }
    return out;
}

std::vector<std::string> Vocabulary::payload_tokens() const {
    return std::vector<std::string>(tokens_.begin() + kReservedCount,
                                    tokens_.end());
}

// ==== binary region files ====

namespace {

using bin::ByteReader;
using bin::put_f32;
using bin::put_u32;
using bin::put_u64;
using bin::slurp;
using bin::spill;

void check_sample(const SceneSample& sample) {
    if (sample.regions.empty())
        throw std::invalid_argument("sample " + std::to_string(sample.id) +
                                    " has no regions");
    if (sample.references.size() < kMinReferences ||
        sample.references.size() > kMaxReferences)
        throw std::invalid_argument("sample " + std::to_string(sample.id) +
                                    " needs 1 to 5 references");
    const std::size_t width = sample.regions.front().feature.size();
    for (const auto& region : sample.regions)
        if (region.feature.size() != width)
            throw std::invalid_argument("sample " + std::to_string(sample.id) +
                                        " has mixed feature widths");
}

}  // namespace

void write_region_file(const std::string& path,
                       const std::vector<SceneSample>& corpus) {
    if (corpus.empty())
        throw std::invalid_argument("write_region_file: corpus is empty");
    std::string out;
    out += "DGRF";
    put_u32(out, kRegionFileVersion);
    put_u32(out, static_cast<std::uint32_t>(corpus.size()));
    for (const auto& sample : corpus) {
        check_sample(sample);
        put_u64(out, sample.id);
        put_u32(out, static_cast<std::uint32_t>(sample.regions.size()));
        put_u32(out, static_cast<std::uint32_t>(sample.regions.front().feature.size()));
        for (const auto& region : sample.regions) {
            put_f32(out, static_cast<float>(region.box.x_min));
            put_f32(out, static_cast<float>(region.box.y_min));
            put_f32(out, static_cast<float>(region.box.x_max));
            put_f32(out, static_cast<float>(region.box.y_max));
        }
        for (const auto& region : sample.regions) put_f32(out, region.confidence);
        for (const auto& region : sample.regions)
            for (float v : region.feature) put_f32(out, v);
    }
    spill(path, out);
}

void write_caption_file(const std::string& path,
                        const std::vector<SceneSample>& corpus) {
    std::string out;
    for (const auto& sample : corpus) {
        check_sample(sample);
        nlohmann::json line;
        line["id"] = sample.id;
        std::vector<std::string> refs;
        for (const auto& ref : sample.references) {
            std::string text;
            for (std::size_t i = 0; i < ref.size(); ++i) {
                if (i > 0) text += ' ';
                text += ref[i];
            }
            refs.push_back(std::move(text));
        }
        line["refs"] = refs;
        line["split"] = split_name(sample.split);
        out += line.dump();
        out += '\n';
    }
    spill(path, out);
}

void save_corpus(const std::vector<SceneSample>& corpus,
                 const std::string& regions_path,
                 const std::string& captions_path) {
    write_region_file(regions_path, corpus);
    write_caption_file(captions_path, corpus);
}

std::vector<SceneSample> load_region_file(const std::string& regions_path) {
    ByteReader reader(slurp(regions_path), regions_path);

    if (reader.bytes(4, "magic") != "DGRF") reader.fail("bad magic");
    const std::uint32_t version = reader.u32("version");
    if (version != kRegionFileVersion)
        reader.fail("unsupported version " + std::to_string(version));
    const std::uint32_t n_images = reader.u32("image count");
    if (n_images == 0) reader.fail("empty corpus");
    if (n_images > kMaxImages)
        reader.fail("image count " + std::to_string(n_images) + " exceeds " +
                    std::to_string(kMaxImages));

    std::vector<SceneSample> corpus;
    corpus.reserve(n_images);
    for (std::uint32_t img = 0; img < n_images; ++img) {
        SceneSample sample;
        sample.id = reader.u64("image id");
        const std::uint32_t n_regions = reader.u32("region count");
        if (n_regions == 0) reader.fail("image with zero regions");
        if (n_regions > kMaxRegionsPerImage)
            reader.fail("region count " + std::to_string(n_regions) + " exceeds " +
                        std::to_string(kMaxRegionsPerImage));
        const std::uint32_t width = reader.u32("feature width");
        if (width == 0) reader.fail("zero feature width");
        if (width > kMaxFeatureWidth)
            reader.fail("feature width " + std::to_string(width) + " exceeds " +
                        std::to_string(kMaxFeatureWidth));

        sample.regions.resize(n_regions);
        for (auto& region : sample.regions) {
            region.box.x_min = reader.f32("box coordinate");
            region.box.y_min = reader.f32("box coordinate");
            region.box.x_max = reader.f32("box coordinate");
            region.box.y_max = reader.f32("box coordinate");
        }
        for (auto& region : sample.regions)
            region.confidence = reader.f32("confidence");
        for (auto& region : sample.regions) {
            region.feature.resize(width);
            for (auto& v : region.feature) v = reader.f32("feature value");
        }
        corpus.push_back(std::move(sample));
    }
    reader.expect_end();
    return corpus;
}

std::vector<SceneSample> load_corpus(const std::string& regions_path,
                                     const std::string& captions_path) {
    std::vector<SceneSample> corpus = load_region_file(regions_path);

    // join captions from the sidecar, keyed by image id
    std::ifstream captions(captions_path);
    if (!captions) throw std::runtime_error("cannot open " + captions_path);
    std::unordered_map<std::uint64_t, std::size_t> index;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        if (index.count(corpus[i].id))
            throw std::runtime_error(regions_path + ": duplicate image id " +
                                     std::to_string(corpus[i].id));
        index[corpus[i].id] = i;
    }
    std::vector<bool> seen(corpus.size(), false);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(captions, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json entry;
        try {
            entry = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error(captions_path + ":" + std::to_string(line_no) +
                                     ": bad JSON: " + e.what());
        }
        if (!entry.contains("id") || !entry.contains("refs") ||
            !entry.contains("split"))
            throw std::runtime_error(captions_path + ":" + std::to_string(line_no) +
                                     ": needs id, refs, and split fields");
        const auto id = entry["id"].get<std::uint64_t>();
        const auto it = index.find(id);
        if (it == index.end())
            throw std::runtime_error(captions_path + ":" + std::to_string(line_no) +
                                     ": unknown image id " + std::to_string(id));
        if (seen[it->second])
            throw std::runtime_error(captions_path + ":" + std::to_string(line_no) +
                                     ": duplicate captions for image id " +
                                     std::to_string(id));
        seen[it->second] = true;
        auto& sample = corpus[it->second];
        for (const auto& ref : entry["refs"]) {
            const auto toks = tokenize(ref.get<std::string>());
            if (toks.empty())
                throw std::runtime_error(captions_path + ":" +
                                         std::to_string(line_no) +
                                         ": empty reference");
            sample.references.push_back(toks);
        }
        if (sample.references.size() < kMinReferences ||
            sample.references.size() > kMaxReferences)
            throw std::runtime_error(captions_path + ":" + std::to_string(line_no) +
                                     ": needs 1 to 5 references");
        sample.split = split_from_name(entry["split"].get<std::string>());
    }
    for (std::size_t i = 0; i < corpus.size(); ++i)
        if (!seen[i])
            throw std::runtime_error(captions_path + ": no captions for image id " +
                                     std::to_string(corpus[i].id));
    return corpus;
}

}  // namespace dgcn
