#pragma once

#include "dyneformer/data/types.hpp"

#include <array>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace dyneformer::data {

// ---------------------------------------------------------------------------
// Resampling

/// Collapses a sub-hourly series to one point per clock hour holding that
/// hour's maximum. An hour with no source points raises GapError unless
/// `fill_forward` is set, in which case the previous hour's value is repeated.
WorkloadSeries resample_hourly_max(const WorkloadSeries& series, bool fill_forward = false);

// ---------------------------------------------------------------------------
// Normalization

struct Normalizer {
    double mean = 0.0;
    double stddev = 1.0;
    double epsilon = 1e-8;

    /// Population mean/stddev of `values`. Throws FitError when empty.
    static Normalizer fit(std::span<const double> values, double epsilon = 1e-8);

    double scale() const noexcept { return stddev > 0.0 ? stddev : epsilon; }
    double apply(double x) const noexcept { return (x - mean) / scale(); }
    double invert(double z) const noexcept { return z * scale() + mean; }
};

enum class NormalizeDirection { apply, invert };

/// Half-open index range into a series.
struct IndexRange {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t size() const noexcept { return end > begin ? end - begin : 0; }
};

/// Z-scores (or un-z-scores) `series` with statistics fitted on `fit_range` of
/// the *raw* series. For `invert`, `series` holds normalized values and
/// `raw_reference` supplies the raw points the statistics come from.
WorkloadSeries fit_apply_normalizer(const WorkloadSeries& series, IndexRange fit_range,
                                    NormalizeDirection direction);
WorkloadSeries fit_apply_normalizer(const WorkloadSeries& series, IndexRange fit_range,
                                    NormalizeDirection direction,
                                    const WorkloadSeries& raw_reference);

/// Per-attribute z-score for static vectors, fitted on training entities.
struct StaticScaler {
    std::vector<double> mean;
    std::vector<double> stddev;

    static StaticScaler fit(const std::vector<std::vector<double>>& rows);
    std::vector<double> apply(const std::vector<double>& row) const;
};

// ---------------------------------------------------------------------------
// Chronological split

struct SplitRatios {
    int train = 6;
    int val = 2;
    int test = 2;
};

/// Boundary indices (train_end, val_end) of an n-point grid; e.g. 10 → (6, 8).
std::array<std::size_t, 2> split_points(std::size_t n, SplitRatios ratios = {});

struct TimeSpan {
    Timestamp begin = 0; // inclusive
    Timestamp end = 0;   // exclusive
    bool contains(Timestamp t) const noexcept { return t >= begin && t < end; }
};

struct DatasetSplit {
    Dataset train;
    Dataset val;
    Dataset test;
    TimeSpan train_span;
    TimeSpan val_span;
    TimeSpan test_span;
    std::vector<std::string> warnings;
};

/// Cuts every series at global time boundaries. A series only contributes the
/// part after its join time (late entities), and is dropped from a split, with
/// a warning, when that part is shorter than `min_length` points.
DatasetSplit chronological_split(const Dataset& dataset, SplitRatios ratios = {},
                                 std::size_t min_length = 72);

// ---------------------------------------------------------------------------
// Windows

inline constexpr std::size_t kMarkDim = 2; // hour of day, day of week

/// len × 2 marks: [hour/23 − 0.5, dow/6 − 0.5], Monday = 0.
RowMatrix make_time_marks(std::span<const Timestamp> timestamps);

struct WindowConfig {
    std::size_t input_length = 48;  // T
    std::size_t horizon = 24;       // L
    std::size_t token_length = 12;  // L_token
    std::size_t stride = 1;

    std::size_t feature_dim() const noexcept { return 1 + kMarkDim; } // d_t
    void validate() const; // throws ConfigError
};

struct WindowSample {
    std::string series_id;
    RowMatrix encoder_input;   // T × d_t: normalized value, marks
    RowMatrix decoder_known;   // (L_token + L) × d_t: start token values then 0, marks
    std::vector<double> target;        // L normalized values
    std::vector<double> static_attributes;
    BehaviorTag behavior_tag = BehaviorTag::steady;
    Timestamp window_start = 0;
    std::int64_t interval_seconds = kSecondsPerHour;
    Normalizer normalizer;

    /// Hour of day of the first encoder step, used to phase-align the pool.
    int start_hour() const noexcept;
};

/// Per-series normalization and static scaling shared by all splits.
struct Preprocessing {
    std::map<std::string, Normalizer> normalizers;
    StaticScaler static_scaler;
};

/// Fits normalizers on each training series' training span and the static
/// scaler on training entities. Entities missing from `split.train` are
/// normalized at windowing time from their first T observations.
Preprocessing fit_preprocessing(const DatasetSplit& split, const WindowConfig& config);

/// Behavior tag of the window [start, start + (T+L)·interval) of `series_id`.
BehaviorTag behavior_tag_for(const Dataset& dataset, std::string_view series_id,
                             Timestamp window_start, Timestamp window_end);

/// Stride-`config.stride` sliding windows over every series of `part`.
/// `events_source` supplies the event log (usually the unsplit dataset).
std::vector<WindowSample> make_windows(const Dataset& part, const Dataset& events_source,
                                       const Preprocessing& prep, const WindowConfig& config);

/// Number of stride-1 windows a series of length n yields.
constexpr std::size_t window_count(std::size_t n, std::size_t input_length, std::size_t horizon) {
    return n >= input_length + horizon ? n - (input_length + horizon) + 1 : 0;
}

} // namespace dyneformer::data
