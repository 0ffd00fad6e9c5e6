#pragma once

#include "dyneformer/train/trainer.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace dyneformer::train {

inline constexpr const char* kOverallTag = "all";

struct AblationCell {
    std::string variant;
    std::string tag; // behavior tag or "all"
    std::uint64_t seed = 0;
    double mse = 0.0;
    double mae = 0.0;
    std::size_t n_samples = 0;
};

struct AblationResult {
    std::vector<std::string> variants;
    std::vector<std::uint64_t> seeds;
    std::vector<AblationCell> cells;
    std::vector<std::string> errors; // failed (variant, seed) runs

    /// Median MAE over seeds, NaN when no cell matches.
    double median_mae(const std::string& variant, const std::string& tag) const;
};

/// full, -GP (no GP layer, zero padding), -S (no SA layer), 0Padding (GP with
/// zero padding), derived from `base`.
std::vector<std::pair<std::string, model::ModelConfig>> ablation_variants(const model::ModelConfig& base);

/// One cell per tag present in `test` plus the overall cell.
std::vector<AblationCell> evaluate_cells(const std::string& variant, std::uint64_t seed,
                                         const model::DyneformerModel<float>& model,
                                         const std::vector<data::WindowSample>& test, const pool::GlobalPool* pool);

/// Trains every variant once per seed and scores it on the test windows. A
/// failing run is logged in `errors` and the remaining cells are still
/// produced. Throws DataError when the test windows hold no app_switch sample.
AblationResult ablation_suite(const PreparedData& data, const pool::GlobalPool& pool, const model::ModelConfig& base,
                              const OptimConfig& optim, const std::vector<std::uint64_t>& seeds);

/// model_variant,tag,seed,mse,mae rows.
std::string ablation_csv(const AblationResult& result);

/// Median-MAE table: one row per behavior group (all, app_switch, new_device,
/// new_app), one column per variant with the full model's relative MAE
/// improvement in parentheses, then a promotion row averaging those.
std::string ablation_markdown(const AblationResult& result);

} // namespace dyneformer::train
