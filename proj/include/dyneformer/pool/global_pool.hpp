#pragma once

#include "dyneformer/data/preprocess.hpp"
#include "dyneformer/decomp/stl.hpp"
#include "dyneformer/pool/vade.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace dyneformer::pool {

struct SeasonalWindow {
    std::vector<double> values; // length T2
    std::string series_id;
    data::Timestamp window_start = 0;
};

/// P representative seasonal windows. Every row starts at midnight, so the
/// pool is phase-aligned to a sample with `aligned(start_hour)`.
struct GlobalPool {
    int period = 24;
    RowMatrix pools; // P × T2
    std::vector<int> member_counts;
    nlohmann::json provenance = nlohmann::json::object();

    int size() const noexcept { return static_cast<int>(pools.rows()); }
    int window_length() const noexcept { return static_cast<int>(pools.cols()); }

    /// Rolls every row left by `start_hour` columns: out(p, t) = pools(p, (t + h) mod T2).
    RowMatrix aligned(int start_hour) const;

    void validate() const; // throws DataError
};

/// Sliding windows of length `length`, stride `period`, starting at midnight,
/// over the STL seasonal component of each normalized training series.
std::vector<SeasonalWindow> extract_seasonal_windows(const data::Dataset& train_part, const data::Preprocessing& prep,
                                                     int period = 24, std::size_t length = 48,
                                                     const decomp::StlParams& stl = {});

RowMatrix stack_windows(const std::vector<SeasonalWindow>& windows);

/// Pool row i is the element-wise mean of the windows labelled i. Empty
/// clusters are dropped with a warning. Throws DataError when none remain.
GlobalPool build_global_pool(const std::vector<SeasonalWindow>& windows, const std::vector<int>& labels,
                             nlohmann::json provenance = nlohmann::json::object(), int period = 24);

/// Canonical SHA-256 over the ids, timestamps and values of every series.
std::string dataset_fingerprint(const data::Dataset& dataset);

struct PoolBuildConfig {
    std::vector<int> candidates{2, 3, 4, 5, 6, 7, 8};
    int fixed_size = 0; // > 0 skips the BIC selection
    int period = 24;
    int window_length = 48; // T2
    VadeHyper vade;
    decomp::StlParams stl;

    void validate() const; // throws ConfigError
    static PoolBuildConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

struct PoolBuildResult {
    GlobalPool pool;
    PoolSizeSelection selection; // empty when fixed_size was given
};

/// Seasonal windows of `train_part`, VaDE pool-size selection (unless fixed),
/// a final VaDE with the chosen P and the mean-pooled pool. `provenance` is
/// stored in the pool together with the build settings.
PoolBuildResult build_pool(const data::Dataset& train_part, const data::Preprocessing& prep,
                           const PoolBuildConfig& config, nlohmann::json provenance = nlohmann::json::object());

nlohmann::json pool_to_json(const GlobalPool& pool);
GlobalPool pool_from_json(const nlohmann::json& j);
void save_pool(const GlobalPool& pool, const std::filesystem::path& path);
GlobalPool load_pool(const std::filesystem::path& path);

} // namespace dyneformer::pool
