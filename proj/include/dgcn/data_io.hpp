#pragma once

// Synthetic scene-caption corpus generation, vocabulary handling, and the
// binary region-feature file format with its JSON-lines caption sidecar.

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "dgcn/geometry.hpp"
#include "dgcn/metrics.hpp"

namespace dgcn {

// ==== corpus types ====

enum class Split { train, val, test };

const char* split_name(Split split);
Split split_from_name(const std::string& name);

struct Region {
    Box box;
    float confidence = 1.0f;
    std::vector<float> feature;
};

struct SceneSample {
    std::uint64_t id = 0;
    std::vector<Region> regions;        // at least one
    std::vector<Tokens> references;     // 1..5 tokenized captions
    Split split = Split::train;
};

// ==== synthetic scenes ====

// Scenes are grids of colored shapes; every box is normalized to the unit
// square, so spatial-graph building always uses an image extent of 1 x 1.
struct SyntheticSceneSpec {
    std::size_t grid_size = 8;
    std::size_t feature_dim = 16;  // >= shapes + colors + 4 box coordinates
    double noise_sigma = 0.05;
    std::uint64_t seed = 1;
};

const std::vector<std::string>& synthetic_shapes();
const std::vector<std::string>& synthetic_colors();
// spatial predicates usable in captions; multi-word entries are space-joined
const std::vector<std::string>& synthetic_relations();

// Noise-free attribute embedding: one-hot shape, one-hot color, the four box
// coordinates, zero padding up to feature_dim. Injective over the inventory.
std::vector<float> region_feature(std::size_t shape, std::size_t color,
                                  const Box& box,
                                  const SyntheticSceneSpec& spec);

// Deterministic per seed: sample i is drawn from an independent stream, so
// corpora are byte-identical across regenerations. Each scene places 2-6
// objects on distinct grid cells and renders 2-5 template references of the
// form "a <color> <shape> <relation> a <color> <shape>". Splits are a seeded
// 80/10/10 partition.
std::vector<SceneSample> generate_corpus(const SyntheticSceneSpec& spec,
                                         std::size_t n_samples);

// Inverse of the caption template, for round-trip audits.
struct ParsedCaption {
    std::size_t shape_a = 0, color_a = 0;
    std::size_t relation = 0;
    std::size_t shape_b = 0, color_b = 0;
};
std::optional<ParsedCaption> parse_template_caption(const Tokens& caption);

// True when the scene holds two distinct objects with the parsed attributes
// in the parsed spatial relation; attributes are recovered from the one-hot
// blocks of the region features.
bool caption_matches_scene(const ParsedCaption& parsed, const SceneSample& sample,
                           const SyntheticSceneSpec& spec);

// ==== vocabulary ====

class Vocabulary {
  public:
    Vocabulary();

    // frequency-sorted (ties lexicographic) reference tokens with at least
    // min_count occurrences; everything else encodes to the unknown marker
    static Vocabulary build(const std::vector<SceneSample>& corpus,
                            int min_count = 1);
    // rebuilds a vocabulary from the non-reserved tokens in id order
    static Vocabulary from_tokens(const std::vector<std::string>& tokens);

    std::size_t size() const { return tokens_.size(); }
    int id_of(const std::string& token) const;  // unknown-id when absent
    const std::string& token_of(int id) const;
    std::vector<int> encode(const Tokens& caption) const;
    Tokens decode(const std::vector<int>& ids) const;
    // decode with padding and sequence markers dropped
    Tokens decode_caption(const std::vector<int>& ids) const;
    // non-reserved tokens in id order, for persistence
    std::vector<std::string> payload_tokens() const;

  private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> ids_;
};

// ==== region-feature files ====

// Binary layout (little-endian): magic "DGRF", u32 version, u32 n_images;
// per image: u64 id, u32 O, u32 C, O*4 f32 box coordinates, O f32
// confidences, O*C f32 features. Captions live in a JSON-lines sidecar of
// {"id": ..., "refs": [...], "split": ...} keyed by image id.
inline constexpr std::uint32_t kRegionFileVersion = 1;

void write_region_file(const std::string& path,
                       const std::vector<SceneSample>& corpus);
void write_caption_file(const std::string& path,
                        const std::vector<SceneSample>& corpus);
void save_corpus(const std::vector<SceneSample>& corpus,
                 const std::string& regions_path,
                 const std::string& captions_path);
// regions only, references left empty — for captioning unlabeled images
std::vector<SceneSample> load_region_file(const std::string& regions_path);
std::vector<SceneSample> load_corpus(const std::string& regions_path,
                                     const std::string& captions_path);

}  // namespace dgcn
