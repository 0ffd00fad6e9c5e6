#include "dyneformer/data/preprocess.hpp"

#include "dyneformer/errors.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

namespace dyneformer::data {

namespace {

Timestamp floor_div(Timestamp a, Timestamp b) {
    Timestamp q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

} // namespace

WorkloadSeries resample_hourly_max(const WorkloadSeries& series, bool fill_forward) {
    if (series.interval_seconds <= 0 || kSecondsPerHour % series.interval_seconds != 0) {
        throw ConfigError("series " + series.series_id + ": interval " +
                          std::to_string(series.interval_seconds) + "s does not divide 3600");
    }
    if (series.timestamps.size() != series.values.size()) {
        throw DataError("series " + series.series_id + ": timestamps/values length mismatch");
    }
    WorkloadSeries out = series;
    out.timestamps.clear();
    out.values.clear();
    out.interval_seconds = kSecondsPerHour;
    if (series.empty()) return out;

    const Timestamp first_hour = floor_div(series.timestamps.front(), kSecondsPerHour);
    const Timestamp last_hour = floor_div(series.timestamps.back(), kSecondsPerHour);
    const auto hours = static_cast<std::size_t>(last_hour - first_hour + 1);
    std::vector<double> maxima(hours, -std::numeric_limits<double>::infinity());
    std::vector<bool> seen(hours, false);
    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto h = static_cast<std::size_t>(floor_div(series.timestamps[i], kSecondsPerHour) - first_hour);
        maxima[h] = std::max(maxima[h], series.values[i]);
        seen[h] = true;
    }
    out.timestamps.reserve(hours);
    out.values.reserve(hours);
    for (std::size_t h = 0; h < hours; ++h) {
        const Timestamp ts = (first_hour + static_cast<Timestamp>(h)) * kSecondsPerHour;
        if (!seen[h]) {
            if (!fill_forward) {
                throw GapError(fmt::format("series {}: no points in hour starting at {}", series.series_id, ts));
            }
            maxima[h] = maxima[h - 1]; // h > 0: the first hour always has a point
        }
        out.timestamps.push_back(ts);
        out.values.push_back(maxima[h]);
    }
    return out;
}

Normalizer Normalizer::fit(std::span<const double> values, double epsilon) {
    if (values.empty()) throw FitError("cannot fit a normalizer on an empty range");
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(values.size());
    return {mean, std::sqrt(var), epsilon};
}

WorkloadSeries fit_apply_normalizer(const WorkloadSeries& series, IndexRange fit_range,
                                    NormalizeDirection direction) {
    if (direction == NormalizeDirection::invert) {
        throw ConfigError("inverting needs the raw reference series the statistics were fitted on");
    }
    return fit_apply_normalizer(series, fit_range, direction, series);
}

WorkloadSeries fit_apply_normalizer(const WorkloadSeries& series, IndexRange fit_range,
                                    NormalizeDirection direction,
                                    const WorkloadSeries& raw_reference) {
    if (fit_range.size() == 0) throw FitError("empty fit range");
    if (fit_range.end > raw_reference.size()) throw FitError("fit range exceeds the series length");
    const auto norm = Normalizer::fit(
        std::span<const double>(raw_reference.values).subspan(fit_range.begin, fit_range.size()));
    WorkloadSeries out = series;
    for (double& v : out.values) {
        v = direction == NormalizeDirection::apply ? norm.apply(v) : norm.invert(v);
    }
    return out;
}

StaticScaler StaticScaler::fit(const std::vector<std::vector<double>>& rows) {
    StaticScaler s;
    if (rows.empty()) return s;
    const std::size_t d = rows.front().size();
    s.mean.assign(d, 0.0);
    s.stddev.assign(d, 0.0);
    for (const auto& r : rows) {
        if (r.size() != d) throw DimensionError("static rows of unequal width");
        for (std::size_t j = 0; j < d; ++j) s.mean[j] += r[j];
    }
    for (auto& m : s.mean) m /= static_cast<double>(rows.size());
    for (const auto& r : rows) {
        for (std::size_t j = 0; j < d; ++j) s.stddev[j] += (r[j] - s.mean[j]) * (r[j] - s.mean[j]);
    }
    for (auto& v : s.stddev) v = std::sqrt(v / static_cast<double>(rows.size()));
    return s;
}

std::vector<double> StaticScaler::apply(const std::vector<double>& row) const {
    if (mean.empty()) return row;
    if (row.size() != mean.size()) throw DimensionError("static vector width mismatch");
    std::vector<double> out(row.size());
    for (std::size_t j = 0; j < row.size(); ++j) {
        out[j] = (row[j] - mean[j]) / (stddev[j] > 1e-12 ? stddev[j] : 1.0);
    }
    return out;
}

std::array<std::size_t, 2> split_points(std::size_t n, SplitRatios ratios) {
    if (ratios.train <= 0 || ratios.val < 0 || ratios.test < 0) {
        throw ConfigError("split ratios must be positive");
    }
    const auto total = static_cast<std::size_t>(ratios.train + ratios.val + ratios.test);
    return {n * static_cast<std::size_t>(ratios.train) / total,
            n * static_cast<std::size_t>(ratios.train + ratios.val) / total};
}

namespace {

Dataset restrict_to(const Dataset& source, TimeSpan span, std::size_t min_length, std::string_view label,
                    std::vector<std::string>& warnings) {
    Dataset part;
    part.static_names = source.static_names;
    part.categorical = source.categorical;
    part.metadata = source.metadata;
    for (const auto& s : source.series) {
        TimeSpan effective = span;
        if (auto join = source.join_time(s.series_id)) effective.begin = std::max(effective.begin, *join);
        WorkloadSeries cut = s;
        cut.timestamps.clear();
        cut.values.clear();
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (effective.contains(s.timestamps[i])) {
                cut.timestamps.push_back(s.timestamps[i]);
                cut.values.push_back(s.values[i]);
            }
        }
        if (cut.size() < min_length) {
            // Entities that have not joined yet are silently absent.
            if (effective.begin < span.end) {
                auto msg = fmt::format("series {} has {} points in the {} split (< {}); excluded",
                                       s.series_id, cut.size(), label, min_length);
                spdlog::warn("{}", msg);
                warnings.push_back(std::move(msg));
            }
            continue;
        }
        if (auto it = source.statics.find(s.series_id); it != source.statics.end()) {
            part.statics[s.series_id] = it->second;
        }
        for (const auto& e : source.events) {
            if (e.series_id == s.series_id && e.timestamp >= cut.timestamps.front() &&
                e.timestamp <= cut.timestamps.back()) {
                part.events.push_back(e);
            }
        }
        part.series.push_back(std::move(cut));
    }
    return part;
}

} // namespace

DatasetSplit chronological_split(const Dataset& dataset, SplitRatios ratios, std::size_t min_length) {
    if (dataset.series.empty()) throw DataError("dataset has no series");
    Timestamp t0 = std::numeric_limits<Timestamp>::max();
    Timestamp t1 = std::numeric_limits<Timestamp>::min();
    std::int64_t interval = 0;
    for (const auto& s : dataset.series) {
        s.validate();
        if (s.empty()) continue;
        if (interval == 0) interval = s.interval_seconds;
        if (s.interval_seconds != interval) throw DataError("series use different intervals");
        t0 = std::min(t0, s.timestamps.front());
        t1 = std::max(t1, s.timestamps.back());
    }
    if (interval == 0) throw DataError("dataset has no observations");
    const auto n = static_cast<std::size_t>((t1 - t0) / interval + 1);
    const auto [a, b] = split_points(n, ratios);

    DatasetSplit out;
    out.train_span = {t0, t0 + static_cast<Timestamp>(a) * interval};
    out.val_span = {out.train_span.end, t0 + static_cast<Timestamp>(b) * interval};
    out.test_span = {out.val_span.end, t0 + static_cast<Timestamp>(n) * interval};
    out.train = restrict_to(dataset, out.train_span, min_length, "train", out.warnings);
    out.val = restrict_to(dataset, out.val_span, min_length, "val", out.warnings);
    out.test = restrict_to(dataset, out.test_span, min_length, "test", out.warnings);
    return out;
}

RowMatrix make_time_marks(std::span<const Timestamp> timestamps) {
    using namespace std::chrono;
    RowMatrix marks(static_cast<Eigen::Index>(timestamps.size()), static_cast<Eigen::Index>(kMarkDim));
    for (std::size_t i = 0; i < timestamps.size(); ++i) {
        const Timestamp ts = timestamps[i];
        const Timestamp day = floor_div(ts, 86400);
        const auto hour = static_cast<double>((ts - day * 86400) / kSecondsPerHour);
        const weekday wd{sys_days{days{day}}};
        const auto dow = static_cast<double>((wd.c_encoding() + 6) % 7); // Monday = 0
        marks(static_cast<Eigen::Index>(i), 0) = hour / 23.0 - 0.5;
        marks(static_cast<Eigen::Index>(i), 1) = dow / 6.0 - 0.5;
    }
    return marks;
}

void WindowConfig::validate() const {
    if (input_length == 0 || horizon == 0) throw ConfigError("T and L must be positive");
    if (token_length > input_length) {
        throw ConfigError(fmt::format("L_token ({}) exceeds T ({})", token_length, input_length));
    }
    if (stride == 0) throw ConfigError("window stride must be positive");
}

int WindowSample::start_hour() const noexcept {
    const Timestamp day = floor_div(window_start, 86400);
    return static_cast<int>((window_start - day * 86400) / kSecondsPerHour);
}

Preprocessing fit_preprocessing(const DatasetSplit& split, const WindowConfig& config) {
    (void)config;
    Preprocessing prep;
    std::vector<std::vector<double>> static_rows;
    for (const auto& s : split.train.series) {
        prep.normalizers[s.series_id] = Normalizer::fit(s.values);
        if (auto it = split.train.statics.find(s.series_id); it != split.train.statics.end()) {
            static_rows.push_back(it->second.attributes);
        }
    }
    prep.static_scaler = StaticScaler::fit(static_rows);
    return prep;
}

BehaviorTag behavior_tag_for(const Dataset& dataset, std::string_view series_id, Timestamp window_start,
                             Timestamp window_end) {
    bool switched = false;
    bool new_device = false;
    bool new_app = false;
    for (const auto& e : dataset.events) {
        if (e.series_id != series_id) continue;
        switch (e.kind) {
        case EventKind::new_app: new_app = true; break;
        case EventKind::new_device: new_device = true; break;
        case EventKind::app_switch:
            if (e.timestamp >= window_start && e.timestamp < window_end) switched = true;
            break;
        }
    }
    if (new_app) return BehaviorTag::new_app;
    if (new_device) return BehaviorTag::new_device;
    if (switched) return BehaviorTag::app_switch;
    return BehaviorTag::steady;
}

std::vector<WindowSample> make_windows(const Dataset& part, const Dataset& events_source,
                                       const Preprocessing& prep, const WindowConfig& config) {
    config.validate();
    const std::size_t T = config.input_length;
    const std::size_t L = config.horizon;
    const std::size_t Lt = config.token_length;
    const std::size_t dt = config.feature_dim();

    std::vector<WindowSample> out;
    for (const auto& s : part.series) {
        s.validate();
        const std::size_t count = window_count(s.size(), T, L);
        if (count == 0) continue;

        Normalizer norm;
        if (auto it = prep.normalizers.find(s.series_id); it != prep.normalizers.end()) {
            norm = it->second;
        } else {
            // Cold start: only the first T observations are known at prediction time.
            norm = Normalizer::fit(std::span<const double>(s.values).first(T));
        }
        std::vector<double> z(s.size());
        for (std::size_t i = 0; i < s.size(); ++i) z[i] = norm.apply(s.values[i]);
        const RowMatrix marks = make_time_marks(s.timestamps);

        std::vector<double> statics;
        if (auto it = part.statics.find(s.series_id); it != part.statics.end()) {
            statics = prep.static_scaler.apply(it->second.attributes);
        }

        for (std::size_t w = 0; w < count; w += config.stride) {
            WindowSample sample;
            sample.series_id = s.series_id;
            sample.window_start = s.timestamps[w];
            sample.interval_seconds = s.interval_seconds;
            sample.normalizer = norm;
            sample.static_attributes = statics;

            sample.encoder_input.resize(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(dt));
            for (std::size_t t = 0; t < T; ++t) {
                const auto r = static_cast<Eigen::Index>(t);
                sample.encoder_input(r, 0) = z[w + t];
                sample.encoder_input.row(r).tail(kMarkDim) = marks.row(static_cast<Eigen::Index>(w + t));
            }
            sample.decoder_known = RowMatrix::Zero(static_cast<Eigen::Index>(Lt + L), static_cast<Eigen::Index>(dt));
            for (std::size_t t = 0; t < Lt + L; ++t) {
                const auto r = static_cast<Eigen::Index>(t);
                const std::size_t src = w + T - Lt + t;
                if (t < Lt) sample.decoder_known(r, 0) = z[src];
                sample.decoder_known.row(r).tail(kMarkDim) = marks.row(static_cast<Eigen::Index>(src));
            }
            sample.target.assign(z.begin() + static_cast<std::ptrdiff_t>(w + T),
                                 z.begin() + static_cast<std::ptrdiff_t>(w + T + L));
            const Timestamp end = s.timestamps[w] + static_cast<Timestamp>(T + L) * s.interval_seconds;
            sample.behavior_tag = behavior_tag_for(events_source, s.series_id, sample.window_start, end);
            out.push_back(std::move(sample));
        }
    }
    return out;
}

} // namespace dyneformer::data
