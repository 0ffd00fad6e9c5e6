#include "dyneformer/usecase/depreciation.hpp"

#include "dyneformer/data/csv_io.hpp"
#include "dyneformer/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <optional>
#include <set>

namespace dyneformer::usecase {

namespace {

int hour_of_day(Timestamp ts) {
    const Timestamp sec = ((ts % 86400) + 86400) % 86400;
    return static_cast<int>(sec / data::kSecondsPerHour);
}

SelectorKind parse_kind(const std::string& text) {
    if (text == "peak") return SelectorKind::peak;
    if (text == "fixed_hour") return SelectorKind::fixed_hour;
    throw ConfigError(fmt::format("billing selector must be peak or fixed_hour, got '{}'", text));
}

BillingSelector selector_from_json(const nlohmann::json& j) {
    BillingSelector s;
    if (j.is_string()) {
        s.kind = parse_kind(j.get<std::string>());
    } else if (j.is_object()) {
        s.kind = parse_kind(j.value("kind", std::string("peak")));
        s.hour = j.value("hour", 0);
    } else {
        throw ConfigError("billing selector must be a string or an object");
    }
    if (s.hour < 0 || s.hour > 23) throw ConfigError("billing hour must lie in [0, 23]");
    return s;
}

nlohmann::json selector_to_json(const BillingSelector& s) {
    return {{"kind", s.kind == SelectorKind::peak ? "peak" : "fixed_hour"}, {"hour", s.hour}};
}

std::optional<double> value_at(const DeviceUsage& d, Timestamp ts) {
    const auto it = std::lower_bound(d.timestamps.begin(), d.timestamps.end(), ts);
    if (it == d.timestamps.end() || *it != ts) return std::nullopt;
    return d.values[static_cast<std::size_t>(it - d.timestamps.begin())];
}

} // namespace

Timestamp BillingSelector::select(const std::vector<Timestamp>& timestamps, const std::vector<double>& values,
                                  data::TimeSpan span) const {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < timestamps.size(); ++i) {
        if (!span.contains(timestamps[i])) continue;
        if (kind == SelectorKind::fixed_hour) {
            if (hour_of_day(timestamps[i]) == hour) return timestamps[i];
        } else if (!best || values[i] > values[*best]) {
            best = i;
        }
    }
    if (!best) throw CoverageError("no billing timestamp inside the evaluation span");
    return timestamps[*best];
}

BillingSpec BillingSpec::from_json(const nlohmann::json& j) {
    BillingSpec b;
    if (!j.is_object()) throw ConfigError("billing spec must be a JSON object");
    try {
        if (j.contains("app")) b.app = selector_from_json(j.at("app"));
        if (j.contains("device")) b.device = selector_from_json(j.at("device"));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("billing spec: ") + e.what());
    }
    return b;
}

nlohmann::json BillingSpec::to_json() const {
    return {{"app", selector_to_json(app)}, {"device", selector_to_json(device)}};
}

std::vector<AppRate> depreciation_rates(const std::vector<DeviceUsage>& devices, data::TimeSpan span,
                                        const BillingSpec& billing) {
    std::map<std::string, std::vector<const DeviceUsage*>> by_app;
    for (const auto& d : devices) {
        if (d.timestamps.size() != d.values.size()) throw DimensionError("device usage: length mismatch");
        by_app[d.app_id].push_back(&d);
    }
    std::vector<AppRate> out;
    for (const auto& [app, members] : by_app) {
        std::map<Timestamp, double> aggregate;
        for (const auto* d : members) {
            for (std::size_t i = 0; i < d->timestamps.size(); ++i) {
                if (span.contains(d->timestamps[i])) aggregate[d->timestamps[i]] += d->values[i];
            }
        }
        std::vector<Timestamp> agg_ts;
        std::vector<double> agg_v;
        for (const auto& [ts, v] : aggregate) {
            agg_ts.push_back(ts);
            agg_v.push_back(v);
        }
        AppRate rate;
        rate.app_id = app;
        rate.devices = static_cast<int>(members.size());
        rate.app_time = billing.app.select(agg_ts, agg_v, span);
        for (const auto* d : members) {
            const auto at_app = value_at(*d, rate.app_time);
            if (!at_app) {
                throw CoverageError(fmt::format("series {} has no point at the billing time of {}", d->series_id, app));
            }
            rate.app_billed += *at_app;
            const Timestamp own = billing.device.select(d->timestamps, d->values, span);
            rate.device_billed += *value_at(*d, own);
        }
        if (rate.device_billed == 0.0) {
            throw DegenerateBilling(fmt::format("device-billed workload of {} is zero", app));
        }
        rate.rate = 1.0 - rate.app_billed / rate.device_billed;
        out.push_back(rate);
    }
    return out;
}

std::map<std::string, double> rate_map(const std::vector<AppRate>& rates) {
    std::map<std::string, double> out;
    for (const auto& r : rates) out[r.app_id] = r.rate;
    return out;
}

std::string app_at(const data::Dataset& dataset, const data::WorkloadSeries& series, Timestamp ts) {
    std::string app = series.app_id;
    Timestamp latest = 0;
    bool found = false;
    for (const auto* e : dataset.events_for(series.series_id)) {
        if (e->kind != data::EventKind::app_switch || e->timestamp > ts) continue;
        if (found && e->timestamp < latest) continue;
        const auto pos = e->payload.find("to=");
        if (pos == std::string::npos) continue;
        auto end = e->payload.find(';', pos);
        app = e->payload.substr(pos + 3, end == std::string::npos ? std::string::npos : end - pos - 3);
        latest = e->timestamp;
        found = true;
    }
    return app;
}

namespace {

bool switches_inside(const data::Dataset& dataset, const std::string& series_id, data::TimeSpan span) {
    for (const auto* e : dataset.events_for(series_id)) {
        if (e->kind == data::EventKind::app_switch && e->timestamp > span.begin && e->timestamp < span.end) return true;
    }
    return false;
}

} // namespace

std::vector<DeviceUsage> device_usage(const data::Dataset& dataset, data::TimeSpan span) {
    std::vector<DeviceUsage> out;
    for (const auto& s : dataset.series) {
        if (switches_inside(dataset, s.series_id, span)) continue;
        DeviceUsage d;
        d.series_id = s.series_id;
        d.app_id = app_at(dataset, s, span.begin);
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (!span.contains(s.timestamps[i])) continue;
            d.timestamps.push_back(s.timestamps[i]);
            d.values.push_back(s.values[i]);
        }
        if (!d.timestamps.empty()) out.push_back(std::move(d));
    }
    return out;
}

TiledUsage tile_predictions(const data::Dataset& dataset, const std::vector<data::WindowSample>& samples,
                            const data::RowMatrix& predictions) {
    if (predictions.rows() != static_cast<Eigen::Index>(samples.size())) {
        throw DimensionError("one prediction row per sample required");
    }
    std::map<std::string, std::vector<std::size_t>> by_series;
    for (std::size_t i = 0; i < samples.size(); ++i) by_series[samples[i].series_id].push_back(i);

    TiledUsage out;
    bool any = false;
    for (auto& [id, idx] : by_series) {
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            return samples[a].window_start < samples[b].window_start;
        });
        const auto& first = samples[idx.front()];
        const auto horizon = static_cast<Timestamp>(first.target.size());
        const Timestamp step = horizon * first.interval_seconds;
        const Timestamp lead = static_cast<Timestamp>(first.encoder_input.rows()) * first.interval_seconds;
        DeviceUsage label, pred;
        label.series_id = pred.series_id = id;
        for (std::size_t i : idx) {
            const auto& s = samples[i];
            if ((s.window_start - first.window_start) % step != 0) continue;
            for (Timestamp t = 0; t < horizon; ++t) {
                const Timestamp ts = s.window_start + lead + t * s.interval_seconds;
                label.timestamps.push_back(ts);
                pred.timestamps.push_back(ts);
                label.values.push_back(s.normalizer.invert(s.target[static_cast<std::size_t>(t)]));
                pred.values.push_back(s.normalizer.invert(predictions(static_cast<Eigen::Index>(i), t)));
            }
        }
        const data::TimeSpan own{label.timestamps.front(), label.timestamps.back() + first.interval_seconds};
        if (switches_inside(dataset, id, own)) continue;
        const auto app = app_at(dataset, dataset.at(id), own.begin);
        label.app_id = pred.app_id = app;
        out.span.begin = any ? std::min(out.span.begin, own.begin) : own.begin;
        out.span.end = any ? std::max(out.span.end, own.end) : own.end;
        any = true;
        out.label.push_back(std::move(label));
        out.predicted.push_back(std::move(pred));
    }
    if (!any) throw EmptySubset("no series left to tile");
    return out;
}

std::map<std::string, int> rank_descending(const std::map<std::string, double>& rates) {
    std::vector<std::pair<std::string, double>> items(rates.begin(), rates.end());
    std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    std::map<std::string, int> out;
    for (std::size_t i = 0; i < items.size(); ++i) out[items[i].first] = static_cast<int>(i) + 1;
    return out;
}

RankComparison rank_and_count(const std::map<std::string, double>& label_rates,
                              const std::map<std::string, double>& predicted_rates) {
    std::set<std::string> a, b;
    for (const auto& [k, _] : label_rates) a.insert(k);
    for (const auto& [k, _] : predicted_rates) b.insert(k);
    if (a != b) throw KeyError("label and predicted rates cover different apps");
    const auto label_rank = rank_descending(label_rates);
    const auto pred_rank = rank_descending(predicted_rates);
    RankComparison out;
    for (const auto& [app, rate] : label_rates) {
        RankedApp r{app, rate, label_rank.at(app), predicted_rates.at(app), pred_rank.at(app)};
        if (r.label_rank == r.predicted_rank) ++out.correct_count;
        out.apps.push_back(r);
    }
    std::sort(out.apps.begin(), out.apps.end(), [](const auto& x, const auto& y) { return x.label_rank < y.label_rank; });
    return out;
}

std::string report_csv(const RankComparison& comparison) {
    std::string out = "app_id,label_rate,label_rank,predicted_rate,predicted_rank\n";
    for (const auto& r : comparison.apps) {
        out += fmt::format("{},{},{},{},{}\n", r.app_id, data::format_real(r.label_rate), r.label_rank,
                           data::format_real(r.predicted_rate), r.predicted_rank);
    }
    out += fmt::format("correct_count,{}\n", comparison.correct_count);
    return out;
}

} // namespace dyneformer::usecase
