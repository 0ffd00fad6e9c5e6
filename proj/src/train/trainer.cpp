#include "dyneformer/train/trainer.hpp"

#include "dyneformer/errors.hpp"
#include "dyneformer/nn/adam.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace dyneformer::train {

void OptimConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
    if (patience < 1) throw ConfigError("patience must be >= 1");
    if (samples_per_epoch < 0) throw ConfigError("samples_per_epoch must be >= 0");
    if (clip_norm < 0.0) throw ConfigError("clip_norm must be >= 0");
    if (eval_batch_size < 1) throw ConfigError("eval_batch_size must be >= 1");
}

OptimConfig OptimConfig::from_json(const nlohmann::json& j) {
    OptimConfig c;
    if (!j.is_object()) throw ConfigError("optimizer config must be a JSON object");
    static const char* known[] = {"learning_rate", "batch_size", "max_epochs", "patience",
                                  "seed", "samples_per_epoch", "clip_norm", "eval_batch_size"};
    for (const auto& [key, _] : j.items()) {
        if (std::find(std::begin(known), std::end(known), key) == std::end(known)) {
            throw ConfigError(fmt::format("unknown optimizer config key '{}'", key));
        }
    }
    try {
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.max_epochs = j.value("max_epochs", c.max_epochs);
        c.patience = j.value("patience", c.patience);
        c.seed = j.value("seed", c.seed);
        c.samples_per_epoch = j.value("samples_per_epoch", c.samples_per_epoch);
        c.clip_norm = j.value("clip_norm", c.clip_norm);
        c.eval_batch_size = j.value("eval_batch_size", c.eval_batch_size);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("optimizer config: ") + e.what());
    }
    c.validate();
    return c;
}

nlohmann::json OptimConfig::to_json() const {
    return {{"learning_rate", learning_rate}, {"batch_size", batch_size},
            {"max_epochs", max_epochs},       {"patience", patience},
            {"seed", seed},                   {"samples_per_epoch", samples_per_epoch},
            {"clip_norm", clip_norm},         {"eval_batch_size", eval_batch_size}};
}

nlohmann::json TrainHistory::to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& e : epochs) rows.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}});
    return {{"initial_train_loss", initial_train_loss},
            {"initial_val_loss", initial_val_loss},
            {"epochs", rows},
            {"best_epoch", best_epoch},
            {"best_val_loss", best_val_loss}};
}

TrainHistory TrainHistory::from_json(const nlohmann::json& j) {
    TrainHistory h;
    h.initial_train_loss = j.at("initial_train_loss").get<double>();
    h.initial_val_loss = j.at("initial_val_loss").get<double>();
    for (const auto& e : j.at("epochs")) {
        h.epochs.push_back({e.at("epoch").get<int>(), e.at("train_loss").get<double>(), e.at("val_loss").get<double>()});
    }
    h.best_epoch = j.at("best_epoch").get<int>();
    h.best_val_loss = j.at("best_val_loss").get<double>();
    return h;
}

PreparedData prepare_data(const data::Dataset& dataset, const data::WindowConfig& windows, data::SplitRatios ratios) {
    windows.validate();
    PreparedData out;
    out.windows = windows;
    out.split = data::chronological_split(dataset, ratios, windows.input_length + windows.horizon);
    for (const auto& w : out.split.warnings) spdlog::warn("{}", w);
    out.prep = data::fit_preprocessing(out.split, windows);
    out.train = data::make_windows(out.split.train, dataset, out.prep, windows);
    out.val = data::make_windows(out.split.val, dataset, out.prep, windows);
    out.test = data::make_windows(out.split.test, dataset, out.prep, windows);
    out.train_fingerprint = pool::dataset_fingerprint(out.split.train);
    return out;
}

nlohmann::json pool_provenance(const data::Dataset& train_part) {
    return {{"training_data_hash", pool::dataset_fingerprint(train_part)}, {"training_series", train_part.series.size()}};
}

void check_pool_provenance(const pool::GlobalPool& pool, const std::string& train_fingerprint) {
    const auto it = pool.provenance.find("training_data_hash");
    if (it == pool.provenance.end() || !it->is_string()) {
        throw ProvenanceError("pool file carries no training_data_hash provenance");
    }
    if (it->get<std::string>() != train_fingerprint) {
        throw ProvenanceError("pool was built from a different training split than this dataset's");
    }
}

template <typename T>
RowMatrix predict(const model::DyneformerModel<T>& model, const std::vector<data::WindowSample>& samples,
                  const pool::GlobalPool* pool, int batch_size) {
    const auto& cfg = model.config();
    RowMatrix out(static_cast<Eigen::Index>(samples.size()), cfg.horizon);
    std::vector<std::size_t> idx;
    for (std::size_t begin = 0; begin < samples.size(); begin += static_cast<std::size_t>(batch_size)) {
        const std::size_t end = std::min(samples.size(), begin + static_cast<std::size_t>(batch_size));
        idx.resize(end - begin);
        std::iota(idx.begin(), idx.end(), begin);
        const auto batch = model::make_batch<T>(samples, idx, cfg);
        const auto pred = model.forward(batch, pool).prediction.value();
        for (std::size_t i = 0; i < idx.size(); ++i) {
            for (int t = 0; t < cfg.horizon; ++t) {
                out(static_cast<Eigen::Index>(begin + i), t) =
                    static_cast<double>(pred(static_cast<Eigen::Index>(i) * cfg.horizon + t, 0));
            }
        }
    }
    return out;
}

template RowMatrix predict<float>(const model::DyneformerModel<float>&, const std::vector<data::WindowSample>&,
                                  const pool::GlobalPool*, int);
template RowMatrix predict<double>(const model::DyneformerModel<double>&, const std::vector<data::WindowSample>&,
                                   const pool::GlobalPool*, int);

EvalReport evaluate(const model::DyneformerModel<float>& model, const std::vector<data::WindowSample>& samples,
                    const pool::GlobalPool* pool, std::optional<data::BehaviorTag> filter, bool raw_scale) {
    if (filter) {
        std::vector<data::WindowSample> subset;
        for (const auto& s : samples) {
            if (s.behavior_tag == *filter) subset.push_back(s);
        }
        if (subset.empty()) throw EmptySubset(fmt::format("no samples tagged {}", data::to_string(*filter)));
        return score_predictions(subset, predict(model, subset, pool), filter, raw_scale);
    }
    if (samples.empty()) throw EmptySubset("no samples to evaluate");
    return score_predictions(samples, predict(model, samples, pool), filter, raw_scale);
}

double mean_squared_error(const model::DyneformerModel<float>& model, const std::vector<data::WindowSample>& samples,
                          const pool::GlobalPool* pool, int batch_size) {
    if (samples.empty()) throw EmptySubset("no samples to evaluate");
    return score_predictions(samples, predict(model, samples, pool, batch_size)).overall.mse;
}

namespace {

std::vector<model::Matrix<float>> snapshot(const nn::ParameterList<float>& params) {
    std::vector<model::Matrix<float>> out;
    out.reserve(params.size());
    for (const auto& p : params) out.push_back(p.tensor.value());
    return out;
}

void restore(nn::ParameterList<float>& params, const std::vector<model::Matrix<float>>& values) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i].tensor.mutable_value() = values[i];
}

} // namespace

TrainResult train_on_windows(const model::ModelConfig& config, const std::vector<data::WindowSample>& train,
                             const std::vector<data::WindowSample>& val, const pool::GlobalPool* pool,
                             const OptimConfig& optim) {
    optim.validate();
    config.validate();
    if (train.empty()) throw DataError("no training windows");
    if (config.use_gp && pool == nullptr) throw StateError("pool file required when use_gp is set");
    const auto& eval_set = val.empty() ? train : val;
    if (val.empty()) spdlog::warn("no validation windows; early stopping monitors the training set");

    TrainResult result{model::DyneformerModel<float>(config, optim.seed), {}};
    auto params = result.model.parameters();
    nn::Adam<float> adam(params, {.learning_rate = optim.learning_rate, .clip_norm = optim.clip_norm});
    std::mt19937_64 rng(optim.seed ^ 0x9e3779b97f4a7c15ULL);

    auto& history = result.history;
    history.initial_train_loss = mean_squared_error(result.model, train, pool, optim.eval_batch_size);
    history.initial_val_loss = mean_squared_error(result.model, eval_set, pool, optim.eval_batch_size);
    history.best_val_loss = history.initial_val_loss;
    auto best = snapshot(params);
    int stale = 0;

    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t per_epoch = optim.samples_per_epoch > 0
                                      ? std::min(train.size(), static_cast<std::size_t>(optim.samples_per_epoch))
                                      : train.size();
    for (int epoch = 0; epoch < optim.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        std::size_t seen = 0;
        for (std::size_t begin = 0; begin < per_epoch; begin += static_cast<std::size_t>(optim.batch_size)) {
            const std::size_t end = std::min(per_epoch, begin + static_cast<std::size_t>(optim.batch_size));
            const std::span<const std::size_t> idx(order.data() + begin, end - begin);
            const auto batch = model::make_batch<float>(train, idx, config);
            adam.zero_grad();
            auto out = result.model.forward(batch, pool, &rng);
            auto loss = nn::mse_loss(out.prediction, batch.target);
            const double value = static_cast<double>(loss.value()(0, 0));
            if (!std::isfinite(value)) {
                throw TrainingDiverged(fmt::format("non-finite training loss at epoch {}", epoch));
            }
            nn::backward(loss);
            adam.step();
            loss_sum += value * static_cast<double>(idx.size());
            seen += idx.size();
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(seen);
        rec.val_loss = mean_squared_error(result.model, eval_set, pool, optim.eval_batch_size);
        if (!std::isfinite(rec.val_loss)) throw TrainingDiverged(fmt::format("non-finite validation loss at epoch {}", epoch));
        history.epochs.push_back(rec);
        spdlog::info("epoch {}: train {:.5f} val {:.5f}", epoch, rec.train_loss, rec.val_loss);
        if (rec.val_loss < history.best_val_loss) {
            history.best_val_loss = rec.val_loss;
            history.best_epoch = epoch;
            best = snapshot(params);
            stale = 0;
        } else if (++stale >= optim.patience) {
            break;
        }
    }
    restore(params, best);
    return result;
}

TrainResult train_model(const model::ModelConfig& config, const PreparedData& data, const pool::GlobalPool* pool,
                        const OptimConfig& optim) {
    if (config.use_gp) {
        if (pool == nullptr) throw StateError("pool file required when use_gp is set");
        check_pool_provenance(*pool, data.train_fingerprint);
    }
    return train_on_windows(config, data.train, data.val, pool, optim);
}

} // namespace dyneformer::train
