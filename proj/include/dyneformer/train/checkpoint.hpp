#pragma once

#include "dyneformer/model/dyneformer.hpp"
#include "dyneformer/train/trainer.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <string>

namespace dyneformer::train {

inline constexpr int kCheckpointVersion = 1;

struct CheckpointMeta {
    model::ModelConfig config;
    OptimConfig optim;
    std::string pool_sha256;          // empty when the model has no GP layer
    nlohmann::json normalizer_ref = nlohmann::json::object();
    std::uint64_t seed = 0;
    TrainHistory history;
    std::string blob_sha256;          // filled by save_checkpoint

    nlohmann::json to_json() const;
    static CheckpointMeta from_json(const nlohmann::json& j);
};

/// Fingerprints of the training split and of the fitted per-series normalizers.
nlohmann::json normalizer_reference(const PreparedData& data);

/// Sidecar path of a checkpoint blob: `<path>.json`.
std::filesystem::path sidecar_path(const std::filesystem::path& blob);

/// Writes the parameter blob (magic, version, then name/rows/cols/float32 data
/// per parameter) and the JSON sidecar.
void save_checkpoint(const std::filesystem::path& path, const model::DyneformerModel<float>& model,
                     CheckpointMeta meta);

struct LoadedCheckpoint {
    model::DyneformerModel<float> model;
    CheckpointMeta meta;
};

/// Throws ProvenanceError when the model uses a pool and `pool_sha256` is
/// missing or differs from the recorded hash, and DataError on a corrupt blob.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path,
                                 const std::optional<std::string>& pool_sha256);

} // namespace dyneformer::train
