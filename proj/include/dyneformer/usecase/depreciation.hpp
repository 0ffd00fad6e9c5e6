#pragma once

#include "dyneformer/data/preprocess.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <string>
#include <vector>

namespace dyneformer::usecase {

using data::Timestamp;

enum class SelectorKind { peak, fixed_hour };

/// Picks one billing timestamp from a series restricted to a span: `peak` is
/// the timestamp of the largest value (earliest on ties), `fixed_hour` the
/// first timestamp whose hour of day (UTC) is `hour`.
struct BillingSelector {
    SelectorKind kind = SelectorKind::peak;
    int hour = 0;

    /// Throws CoverageError when no timestamp of the span qualifies.
    Timestamp select(const std::vector<Timestamp>& timestamps, const std::vector<double>& values,
                     data::TimeSpan span) const;
};

/// `app` picks t_a on the app-aggregate series, `device` picks t_l on each device series.
struct BillingSpec {
    BillingSelector app;
    BillingSelector device;

    static BillingSpec from_json(const nlohmann::json& j); // throws ConfigError
    nlohmann::json to_json() const;
};

/// One device's workload while running one app.
struct DeviceUsage {
    std::string series_id;
    std::string app_id;
    std::vector<Timestamp> timestamps;
    std::vector<double> values;
};

struct AppRate {
    std::string app_id;
    double rate = 0.0;
    Timestamp app_time = 0;     // t_a
    double app_billed = 0.0;    // Σ_l x^l at t_a
    double device_billed = 0.0; // Σ_l x^l at t_l
    int devices = 0;
};

/// D_a = 1 − Σ_l x^l(t_a) / Σ_l x^l(t_l) per app, sorted by app id. The
/// app-aggregate series sums the app's devices at every timestamp of the span.
/// Throws CoverageError when a device lacks t_a or has no point in the span,
/// DegenerateBilling on a zero denominator.
std::vector<AppRate> depreciation_rates(const std::vector<DeviceUsage>& devices, data::TimeSpan span,
                                        const BillingSpec& billing = {});

std::map<std::string, double> rate_map(const std::vector<AppRate>& rates);

/// App a series runs at `ts`: its app_id, replaced by the target of the last
/// app_switch event at or before `ts`.
std::string app_at(const data::Dataset& dataset, const data::WorkloadSeries& series, Timestamp ts);

/// Raw workload of every series inside `span`, labelled with its app. Series
/// that switch apps inside the span are left out.
std::vector<DeviceUsage> device_usage(const data::Dataset& dataset, data::TimeSpan span);

/// Tiles each series' windows with stride L (first window of the series
/// first) and returns the raw-scale targets and predictions on that tiling,
/// labelled with apps from `dataset`. Series that switch apps inside their
/// tiled span are left out. `span` receives the union of the tiled spans.
struct TiledUsage {
    std::vector<DeviceUsage> label;
    std::vector<DeviceUsage> predicted;
    data::TimeSpan span;
};
TiledUsage tile_predictions(const data::Dataset& dataset, const std::vector<data::WindowSample>& samples,
                            const data::RowMatrix& predictions);

struct RankedApp {
    std::string app_id;
    double label_rate = 0.0;
    int label_rank = 0;
    double predicted_rate = 0.0;
    int predicted_rank = 0;
};

struct RankComparison {
    std::vector<RankedApp> apps; // ordered by label rank
    int correct_count = 0;
};

/// 1-based ranks by descending rate, ties broken by ascending app id.
std::map<std::string, int> rank_descending(const std::map<std::string, double>& rates);

/// Throws KeyError when the two app sets differ.
RankComparison rank_and_count(const std::map<std::string, double>& label_rates,
                              const std::map<std::string, double>& predicted_rates);

/// app_id,label_rate,label_rank,predicted_rate,predicted_rank rows then a
/// `correct_count,<n>` summary line.
std::string report_csv(const RankComparison& comparison);

} // namespace dyneformer::usecase
