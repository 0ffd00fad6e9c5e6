#pragma once

#include "dyneformer/data/preprocess.hpp"
#include "dyneformer/model/dyneformer.hpp"
#include "dyneformer/pool/global_pool.hpp"
#include "dyneformer/train/metrics.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <vector>

namespace dyneformer::train {

struct OptimConfig {
    double learning_rate = 1e-4;
    int batch_size = 256;
    int max_epochs = 20;
    int patience = 5;           // epochs without validation improvement before stopping
    std::uint64_t seed = 0;
    int samples_per_epoch = 0;  // 0 = every training window once per epoch
    double clip_norm = 0.0;
    int eval_batch_size = 256;

    void validate() const; // throws ConfigError
    static OptimConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0; // mean minibatch MSE with dropout
    double val_loss = 0.0;   // eval-mode MSE over the validation windows
};

struct TrainHistory {
    double initial_train_loss = 0.0; // eval-mode MSE before the first update
    double initial_val_loss = 0.0;
    std::vector<EpochRecord> epochs;
    int best_epoch = -1;
    double best_val_loss = 0.0;

    nlohmann::json to_json() const;
    static TrainHistory from_json(const nlohmann::json& j);
};

/// Split, preprocessing and windows of one dataset.
struct PreparedData {
    data::DatasetSplit split;
    data::Preprocessing prep;
    data::WindowConfig windows;
    std::vector<data::WindowSample> train;
    std::vector<data::WindowSample> val;
    std::vector<data::WindowSample> test;
    std::string train_fingerprint; // dataset_fingerprint(split.train)
};

PreparedData prepare_data(const data::Dataset& dataset, const data::WindowConfig& windows = {},
                          data::SplitRatios ratios = {});

/// Provenance record to store in a pool built from `train_part`.
nlohmann::json pool_provenance(const data::Dataset& train_part);

/// Throws ProvenanceError unless `pool` records the fingerprint of `train_part`.
void check_pool_provenance(const pool::GlobalPool& pool, const std::string& train_fingerprint);

struct TrainResult {
    model::DyneformerModel<float> model;
    TrainHistory history;
};

/// Adam on the MSE of normalized targets with early stopping on validation
/// MSE; the best-validation parameters are returned. Deterministic per seed.
/// Throws TrainingDiverged on a non-finite loss.
TrainResult train_on_windows(const model::ModelConfig& config, const std::vector<data::WindowSample>& train,
                             const std::vector<data::WindowSample>& val, const pool::GlobalPool* pool,
                             const OptimConfig& optim);

/// As `train_on_windows` on `data.train`/`data.val`, after checking that
/// `pool` was built from this dataset's training split.
TrainResult train_model(const model::ModelConfig& config, const PreparedData& data, const pool::GlobalPool* pool,
                        const OptimConfig& optim);

/// n × L predictions on the normalized scale, in eval mode.
template <typename T>
RowMatrix predict(const model::DyneformerModel<T>& model, const std::vector<data::WindowSample>& samples,
                  const pool::GlobalPool* pool, int batch_size = 256);

EvalReport evaluate(const model::DyneformerModel<float>& model, const std::vector<data::WindowSample>& samples,
                    const pool::GlobalPool* pool, std::optional<data::BehaviorTag> filter = std::nullopt,
                    bool raw_scale = false);

/// Eval-mode MSE over `samples`.
double mean_squared_error(const model::DyneformerModel<float>& model, const std::vector<data::WindowSample>& samples,
                          const pool::GlobalPool* pool, int batch_size = 256);

extern template RowMatrix predict<float>(const model::DyneformerModel<float>&, const std::vector<data::WindowSample>&,
                                         const pool::GlobalPool*, int);
extern template RowMatrix predict<double>(const model::DyneformerModel<double>&,
                                          const std::vector<data::WindowSample>&, const pool::GlobalPool*, int);

} // namespace dyneformer::train
