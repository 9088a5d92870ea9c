#include "dgcn/checkpoint.hpp"

#include <cstring>
#include <unordered_map>

#include <json.hpp>

#include "dgcn/binary_io.hpp"
#include "dgcn/config_io.hpp"

namespace dgcn {

namespace {

constexpr std::uint32_t kMaxBlocks = 1'000'000;
constexpr std::uint32_t kMaxRank = 8;
constexpr std::uint64_t kMaxExtent = 1ULL << 32;

}  // namespace

// ==== generic block container ====

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
    std::string out;
    out += "DGCN";
    bin::put_u32(out, kCheckpointVersion);
    bin::put_u32(out, static_cast<std::uint32_t>(checkpoint.config_json.size()));
    out += checkpoint.config_json;
    bin::put_u32(out, static_cast<std::uint32_t>(checkpoint.blocks.size()));
    for (const auto& [name, tensor] : checkpoint.blocks) {
        if (name.empty())
            throw std::invalid_argument("checkpoint: block with empty name");
        bin::put_u32(out, static_cast<std::uint32_t>(name.size()));
        out += name;
        bin::put_u32(out, static_cast<std::uint32_t>(tensor.rank()));
        for (std::size_t d = 0; d < tensor.rank(); ++d)
            bin::put_u64(out, tensor.dim(d));
        for (float v : tensor.values()) bin::put_f32(out, v);
    }
    bin::spill(path, out);
}

Checkpoint load_checkpoint(const std::string& path) {
    bin::ByteReader reader(bin::slurp(path), path);
    if (reader.bytes(4, "magic") != "DGCN") reader.fail("bad magic");
    const std::uint32_t version = reader.u32("version");
    if (version != kCheckpointVersion)
        reader.fail("unsupported version " + std::to_string(version));

    Checkpoint checkpoint;
    const std::uint32_t config_len = reader.u32("config length");
    checkpoint.config_json = reader.bytes(config_len, "config echo");

    const std::uint32_t n_blocks = reader.u32("block count");
    if (n_blocks > kMaxBlocks)
        reader.fail("block count " + std::to_string(n_blocks) + " exceeds " +
                    std::to_string(kMaxBlocks));
    checkpoint.blocks.reserve(n_blocks);
    for (std::uint32_t b = 0; b < n_blocks; ++b) {
        const std::uint32_t name_len = reader.u32("block name length");
        if (name_len == 0) reader.fail("empty block name");
        const std::string name = reader.bytes(name_len, "block name");
        const std::uint32_t rank = reader.u32("block rank");
        if (rank > kMaxRank)
            reader.fail("rank " + std::to_string(rank) + " exceeds " +
                        std::to_string(kMaxRank));
        Shape shape(rank);
        std::size_t numel = 1;
        for (auto& extent : shape) {
            const std::uint64_t e = reader.u64("block extent");
            if (e == 0 || e > kMaxExtent) reader.fail("bad extent");
            extent = static_cast<std::size_t>(e);
            numel *= extent;
        }
        std::vector<float> values(numel);
        for (auto& v : values) v = reader.f32("parameter value");
        checkpoint.blocks.emplace_back(
            name, Tensor::from_values(std::move(shape), std::move(values)));
    }
    reader.expect_end();
    return checkpoint;
}

// ==== caption-model convenience layer ====

void save_model_checkpoint(const std::string& path, CaptionModel& model,
                           const ModelConfig& config, const Vocabulary& vocab,
                           std::uint64_t optimizer_step) {
    nlohmann::json echo;
    echo["model"] = model_config_to_json(config);
    echo["vocab"] = vocab.payload_tokens();
    echo["optimizer_step"] = optimizer_step;

    Checkpoint checkpoint;
    checkpoint.config_json = echo.dump();
    model.visit_params([&](const std::string& name, Tensor& tensor) {
        checkpoint.blocks.emplace_back(name, tensor);
    });
    save_checkpoint(path, checkpoint);
}

ModelCheckpoint load_model_checkpoint(const std::string& path) {
    const Checkpoint checkpoint = load_checkpoint(path);
    nlohmann::json echo;
    try {
        echo = nlohmann::json::parse(checkpoint.config_json);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(path + ": bad config echo: " + e.what());
    }
    ModelConfig config = model_config_from_json(echo.at("model"));
    config.validate();
    Vocabulary vocab =
        Vocabulary::from_tokens(echo.at("vocab").get<std::vector<std::string>>());
    if (vocab.size() != config.vocab_size)
        throw std::runtime_error(path + ": vocabulary size " +
                                 std::to_string(vocab.size()) +
                                 " disagrees with config vocab_size " +
                                 std::to_string(config.vocab_size));

    Rng rng(0);  // initial values are fully overwritten below
    CaptionModel model(config, rng);

    std::unordered_map<std::string, Tensor> stored;
    for (const auto& [name, tensor] : checkpoint.blocks) {
        if (!stored.emplace(name, tensor).second)
            throw std::runtime_error(path + ": duplicate block " + name);
    }
    std::size_t used = 0;
    model.visit_params([&](const std::string& name, Tensor& param) {
        const auto it = stored.find(name);
        if (it == stored.end())
            throw std::runtime_error(path + ": missing block " + name);
        const Tensor& block = it->second;
        if (block.shape() != param.shape())
            throw std::runtime_error(path + ": block " + name + " has shape " +
                                     shape_str(block.shape()) + ", model needs " +
                                     shape_str(param.shape()));
        std::memcpy(param.values().data(), block.values().data(),
                    block.size() * sizeof(float));
        ++used;
    });
    if (used != stored.size())
        throw std::runtime_error(path + ": checkpoint holds " +
                                 std::to_string(stored.size()) +
                                 " blocks, model uses " + std::to_string(used));

    return ModelCheckpoint{std::move(config), std::move(vocab),
                           echo.at("optimizer_step").get<std::uint64_t>(),
                           std::move(model)};
}

}  // namespace dgcn
