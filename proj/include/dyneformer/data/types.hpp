#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dyneformer::data {

using Timestamp = std::int64_t; // epoch seconds, UTC
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr std::int64_t kSecondsPerHour = 3600;

/// One entity's workload trace. Ingested raw traces may contain gaps; every
/// series that reaches windowing must be regular (see `is_regular`).
struct WorkloadSeries {
    std::string series_id;
    std::string device_id;
    std::string app_id;
    std::vector<Timestamp> timestamps;
    std::vector<double> values;
    std::int64_t interval_seconds = kSecondsPerHour;

    std::size_t size() const noexcept { return values.size(); }
    bool empty() const noexcept { return values.empty(); }

    /// Strictly increasing timestamps with constant spacing `interval_seconds`
    /// and matching lengths.
    bool is_regular() const noexcept;

    /// Throws DataError unless `is_regular()`.
    void validate() const;

    /// Index of `ts` or nullopt when the series has no point there.
    std::optional<std::size_t> index_of(Timestamp ts) const noexcept;
};

struct StaticContext {
    std::string series_id;
    std::vector<double> attributes;
};

enum class EventKind { app_switch, new_device, new_app };
enum class BehaviorTag { steady, app_switch, new_device, new_app };

inline constexpr BehaviorTag kAllTags[] = {BehaviorTag::steady, BehaviorTag::app_switch,
                                           BehaviorTag::new_device, BehaviorTag::new_app};

std::string_view to_string(EventKind kind);
std::string_view to_string(BehaviorTag tag);
EventKind parse_event_kind(std::string_view text);
BehaviorTag parse_behavior_tag(std::string_view text);

struct Event {
    std::string series_id;
    Timestamp timestamp = 0;
    EventKind kind = EventKind::app_switch;
    std::string payload;
};

/// Ordinal encoding table for one categorical static column: the stored real is
/// the category's index.
struct CategoricalEncoding {
    std::string column;
    std::vector<std::string> categories;

    double encode(std::string_view value) const; // throws KeyError
};

struct Dataset {
    std::vector<WorkloadSeries> series;
    std::map<std::string, StaticContext> statics;
    std::vector<Event> events;
    std::vector<std::string> static_names;
    std::vector<CategoricalEncoding> categorical;
    nlohmann::json metadata = nlohmann::json::object();

    std::size_t static_dim() const noexcept { return static_names.size(); }

    const WorkloadSeries& at(std::string_view series_id) const; // throws KeyError
    std::vector<const Event*> events_for(std::string_view series_id) const;

    /// Join time of a series that enters the platform late (new_device/new_app),
    /// nullopt for series present from the start.
    std::optional<Timestamp> join_time(std::string_view series_id) const;

    /// Checks the cross-field invariants (statics ↔ series, event ranges,
    /// shared static width). Throws DataError.
    void validate() const;
};

} // namespace dyneformer::data
