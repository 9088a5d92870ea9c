#pragma once

// Versioned binary checkpoints: a JSON config echo followed by named
// parameter blocks of little-endian 32-bit floats. Round-trips are bit-exact.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dgcn/data_io.hpp"
#include "dgcn/model.hpp"
#include "dgcn/tensor.hpp"

namespace dgcn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// ==== generic block container ====

struct Checkpoint {
    std::string config_json;  // free-form echo, stored verbatim
    std::vector<std::pair<std::string, Tensor>> blocks;
};

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

// ==== caption-model convenience layer ====

struct ModelCheckpoint {
    ModelConfig config;
    Vocabulary vocab;
    std::uint64_t optimizer_step = 0;
    CaptionModel model;
};

// Serializes every parameter the model's configuration uses, in the model's
// stable visitation order, along with the configuration, vocabulary, and
// optimizer step needed to resume.
void save_model_checkpoint(const std::string& path, CaptionModel& model,
                           const ModelConfig& config, const Vocabulary& vocab,
                           std::uint64_t optimizer_step);

// Rebuilds the model and overwrites its parameters from the stored blocks;
// missing, unexpected, or misshapen blocks are errors.
ModelCheckpoint load_model_checkpoint(const std::string& path);

}  // namespace dgcn
