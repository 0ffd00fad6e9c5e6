#pragma once

#include "dyneformer/data/preprocess.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <optional>
#include <span>
#include <vector>

namespace dyneformer::train {

using data::RowMatrix;

struct Metrics {
    double mse = 0.0;
    double mae = 0.0;
};

/// Arithmetic means over all elements. Throws DimensionError on a length mismatch.
Metrics metrics(std::span<const double> y, std::span<const double> y_hat);
Metrics metrics(const RowMatrix& y, const RowMatrix& y_hat);

struct GroupMetrics {
    double mse = 0.0;
    double mae = 0.0;
    std::size_t n_samples = 0;
    std::size_t n_values = 0;
};

struct EvalReport {
    std::map<data::BehaviorTag, GroupMetrics> per_tag; // only tags with samples
    GroupMetrics overall;
    bool raw_scale = false;

    nlohmann::json to_json() const;
};

/// Scores per-sample predictions (n × L, normalized scale) against the
/// samples' targets. With `filter` only samples of that tag count, and a
/// filter matching nothing throws EmptySubset. `raw_scale` inverts every
/// sample's normalizer first.
EvalReport score_predictions(const std::vector<data::WindowSample>& samples, const RowMatrix& predictions,
                             std::optional<data::BehaviorTag> filter = std::nullopt, bool raw_scale = false);

/// Horizon step j repeats the encoder value 24·k steps earlier, k the
/// smallest multiple reaching back inside the encoder window.
RowMatrix seasonal_naive_predictions(const std::vector<data::WindowSample>& samples, int period = 24);

EvalReport seasonal_naive_baseline(const std::vector<data::WindowSample>& samples,
                                   std::optional<data::BehaviorTag> filter = std::nullopt, bool raw_scale = false,
                                   int period = 24);

} // namespace dyneformer::train
