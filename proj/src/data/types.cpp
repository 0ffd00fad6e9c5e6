#include "dyneformer/data/types.hpp"

#include "dyneformer/errors.hpp"

#include <algorithm>
#include <set>

namespace dyneformer::data {

bool WorkloadSeries::is_regular() const noexcept {
    if (timestamps.size() != values.size() || interval_seconds <= 0) return false;
    for (std::size_t i = 1; i < timestamps.size(); ++i) {
        if (timestamps[i] - timestamps[i - 1] != interval_seconds) return false;
    }
    return true;
}

void WorkloadSeries::validate() const {
    if (timestamps.size() != values.size()) {
        throw DataError("series " + series_id + ": timestamps/values length mismatch");
    }
    if (!is_regular()) {
        throw DataError("series " + series_id + ": timestamps are not evenly spaced at " +
                        std::to_string(interval_seconds) + "s");
    }
}

std::optional<std::size_t> WorkloadSeries::index_of(Timestamp ts) const noexcept {
    auto it = std::lower_bound(timestamps.begin(), timestamps.end(), ts);
    if (it == timestamps.end() || *it != ts) return std::nullopt;
    return static_cast<std::size_t>(it - timestamps.begin());
}

std::string_view to_string(EventKind kind) {
    switch (kind) {
    case EventKind::app_switch: return "app_switch";
    case EventKind::new_device: return "new_device";
    case EventKind::new_app: return "new_app";
    }
    return "unknown";
}

std::string_view to_string(BehaviorTag tag) {
    switch (tag) {
    case BehaviorTag::steady: return "steady";
    case BehaviorTag::app_switch: return "app_switch";
    case BehaviorTag::new_device: return "new_device";
    case BehaviorTag::new_app: return "new_app";
    }
    return "unknown";
}

EventKind parse_event_kind(std::string_view text) {
    if (text == "app_switch") return EventKind::app_switch;
    if (text == "new_device") return EventKind::new_device;
    if (text == "new_app") return EventKind::new_app;
    throw KeyError("unknown event kind '" + std::string(text) + "'");
}

BehaviorTag parse_behavior_tag(std::string_view text) {
    if (text == "steady") return BehaviorTag::steady;
    if (text == "app_switch") return BehaviorTag::app_switch;
    if (text == "new_device") return BehaviorTag::new_device;
    if (text == "new_app") return BehaviorTag::new_app;
    throw KeyError("unknown behavior tag '" + std::string(text) + "'");
}

double CategoricalEncoding::encode(std::string_view value) const {
    auto it = std::find(categories.begin(), categories.end(), value);
    if (it == categories.end()) {
        throw KeyError("column " + column + ": unknown category '" + std::string(value) + "'");
    }
    return static_cast<double>(it - categories.begin());
}

const WorkloadSeries& Dataset::at(std::string_view series_id) const {
    for (const auto& s : series) {
        if (s.series_id == series_id) return s;
    }
    throw KeyError("unknown series '" + std::string(series_id) + "'");
}

std::vector<const Event*> Dataset::events_for(std::string_view series_id) const {
    std::vector<const Event*> out;
    for (const auto& e : events) {
        if (e.series_id == series_id) out.push_back(&e);
    }
    return out;
}

std::optional<Timestamp> Dataset::join_time(std::string_view series_id) const {
    std::optional<Timestamp> join;
    for (const auto& e : events) {
        if (e.series_id != series_id) continue;
        if (e.kind == EventKind::new_device || e.kind == EventKind::new_app) {
            join = join ? std::min(*join, e.timestamp) : e.timestamp;
        }
    }
    return join;
}

void Dataset::validate() const {
    std::set<std::string> ids;
    for (const auto& s : series) {
        if (!ids.insert(s.series_id).second) {
            throw DataError("duplicate series id " + s.series_id);
        }
        if (s.timestamps.size() != s.values.size()) {
            throw DataError("series " + s.series_id + ": timestamps/values length mismatch");
        }
    }
    if (!statics.empty()) {
        for (const auto& id : ids) {
            if (!statics.count(id)) throw DataError("series " + id + " has no static context");
        }
        for (const auto& [id, ctx] : statics) {
            if (!ids.count(id)) throw DataError("static context for unknown series " + id);
            if (ctx.attributes.size() != static_dim()) {
                throw DataError("static context of " + id + " has width " +
                                std::to_string(ctx.attributes.size()) + ", expected " +
                                std::to_string(static_dim()));
            }
        }
    }
    for (const auto& e : events) {
        const auto& s = at(e.series_id);
        if (s.empty() || e.timestamp < s.timestamps.front() || e.timestamp > s.timestamps.back()) {
            throw DataError("event for " + e.series_id + " lies outside the series time range");
        }
    }
}

} // namespace dyneformer::data
