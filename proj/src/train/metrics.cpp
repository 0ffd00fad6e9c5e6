#include "dyneformer/train/metrics.hpp"

#include "dyneformer/errors.hpp"

#include <fmt/format.h>

#include <cmath>

namespace dyneformer::train {

Metrics metrics(std::span<const double> y, std::span<const double> y_hat) {
    if (y.size() != y_hat.size()) {
        throw DimensionError(fmt::format("metrics: {} targets vs {} predictions", y.size(), y_hat.size()));
    }
    Metrics m;
    if (y.empty()) return m;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double d = y[i] - y_hat[i];
        m.mse += d * d;
        m.mae += std::abs(d);
    }
    m.mse /= static_cast<double>(y.size());
    m.mae /= static_cast<double>(y.size());
    return m;
}

Metrics metrics(const RowMatrix& y, const RowMatrix& y_hat) {
    if (y.rows() != y_hat.rows() || y.cols() != y_hat.cols()) {
        throw DimensionError(fmt::format("metrics: shape {}x{} vs {}x{}", y.rows(), y.cols(), y_hat.rows(), y_hat.cols()));
    }
    return metrics(std::span<const double>(y.data(), static_cast<std::size_t>(y.size())),
                   std::span<const double>(y_hat.data(), static_cast<std::size_t>(y_hat.size())));
}

nlohmann::json EvalReport::to_json() const {
    auto group = [](const GroupMetrics& g) {
        return nlohmann::json{{"mse", g.mse}, {"mae", g.mae}, {"n_samples", g.n_samples}};
    };
    nlohmann::json tags = nlohmann::json::object();
    for (const auto& [tag, g] : per_tag) tags[std::string(data::to_string(tag))] = group(g);
    return {{"scale", raw_scale ? "raw" : "normalized"}, {"overall", group(overall)}, {"per_tag", tags}};
}

namespace {

struct Accumulator {
    double sq = 0.0;
    double abs = 0.0;
    std::size_t samples = 0;
    std::size_t values = 0;

    GroupMetrics finish() const {
        GroupMetrics g;
        g.n_samples = samples;
        g.n_values = values;
        if (values > 0) {
            g.mse = sq / static_cast<double>(values);
            g.mae = abs / static_cast<double>(values);
        }
        return g;
    }
};

} // namespace

EvalReport score_predictions(const std::vector<data::WindowSample>& samples, const RowMatrix& predictions,
                             std::optional<data::BehaviorTag> filter, bool raw_scale) {
    if (predictions.rows() != static_cast<Eigen::Index>(samples.size())) {
        throw DimensionError(fmt::format("{} predictions for {} samples", predictions.rows(), samples.size()));
    }
    std::map<data::BehaviorTag, Accumulator> acc;
    Accumulator total;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        if (filter && s.behavior_tag != *filter) continue;
        if (predictions.cols() != static_cast<Eigen::Index>(s.target.size())) {
            throw DimensionError("prediction width differs from the target length");
        }
        auto& a = acc[s.behavior_tag];
        for (std::size_t t = 0; t < s.target.size(); ++t) {
            double y = s.target[t];
            double y_hat = predictions(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t));
            if (raw_scale) {
                y = s.normalizer.invert(y);
                y_hat = s.normalizer.invert(y_hat);
            }
            const double d = y - y_hat;
            a.sq += d * d;
            a.abs += std::abs(d);
            total.sq += d * d;
            total.abs += std::abs(d);
        }
        a.samples += 1;
        a.values += s.target.size();
        total.samples += 1;
        total.values += s.target.size();
    }
    if (total.samples == 0) {
        throw EmptySubset(filter ? fmt::format("no samples tagged {}", data::to_string(*filter))
                                 : std::string("no samples to evaluate"));
    }
    EvalReport report;
    report.raw_scale = raw_scale;
    for (const auto& [tag, a] : acc) report.per_tag[tag] = a.finish();
    report.overall = total.finish();
    return report;
}

RowMatrix seasonal_naive_predictions(const std::vector<data::WindowSample>& samples, int period) {
    if (period < 1) throw ConfigError("period must be positive");
    if (samples.empty()) return RowMatrix(0, 0);
    const auto horizon = static_cast<Eigen::Index>(samples.front().target.size());
    RowMatrix out(static_cast<Eigen::Index>(samples.size()), horizon);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        const Eigen::Index steps = s.encoder_input.rows();
        if (steps < period) throw InputTooShort(fmt::format("seasonal naive needs T >= {}", period));
        if (static_cast<Eigen::Index>(s.target.size()) != horizon) throw DimensionError("ragged horizons");
        for (Eigen::Index j = 0; j < horizon; ++j) {
            const Eigen::Index back = (j / period + 1) * period;
            if (back > steps) throw InputTooShort("seasonal naive: horizon reaches past the encoder window");
            out(static_cast<Eigen::Index>(i), j) = s.encoder_input(steps + j - back, 0);
        }
    }
    return out;
}

EvalReport seasonal_naive_baseline(const std::vector<data::WindowSample>& samples,
                                   std::optional<data::BehaviorTag> filter, bool raw_scale, int period) {
    return score_predictions(samples, seasonal_naive_predictions(samples, period), filter, raw_scale);
}

} // namespace dyneformer::train
