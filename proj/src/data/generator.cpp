#include "dyneformer/data/generator.hpp"

#include "dyneformer/data/preprocess.hpp"
#include "dyneformer/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace dyneformer::data {

namespace {

struct Bump {
    double center;
    double width;
    double amplitude;
};

double circular_distance(double a, double b) {
    double d = std::fabs(a - b);
    return std::min(d, 24.0 - d);
}

std::vector<double> shape_from_bumps(double base, const std::vector<Bump>& bumps) {
    std::vector<double> shape(24, base);
    for (int h = 0; h < 24; ++h) {
        for (const auto& b : bumps) {
            const double d = circular_distance(h, b.center);
            shape[h] += b.amplitude * std::exp(-d * d / (2.0 * b.width * b.width));
        }
    }
    return shape;
}

const std::vector<std::string> kNamedShapes = {"noon_peak", "night_peak", "double_peak", "plateau",
                                               "low_flat"};

// Piecewise-linear trend through `segments + 1` random knots in [-magnitude, magnitude].
std::vector<double> piecewise_trend(std::size_t n, int segments, double magnitude,
                                    std::mt19937_64& rng) {
    std::vector<double> trend(n, 0.0);
    if (magnitude <= 0.0 || n == 0) return trend;
    std::uniform_real_distribution<double> knot(-magnitude, magnitude);
    std::vector<double> knots(static_cast<std::size_t>(segments) + 1);
    for (auto& k : knots) k = knot(rng);
    const double span = static_cast<double>(n - 1 > 0 ? n - 1 : 1);
    for (std::size_t i = 0; i < n; ++i) {
        const double pos = static_cast<double>(i) / span * segments;
        const auto seg = std::min(static_cast<std::size_t>(pos), static_cast<std::size_t>(segments) - 1);
        const double frac = pos - static_cast<double>(seg);
        trend[i] = knots[seg] * (1.0 - frac) + knots[seg + 1] * frac;
    }
    return trend;
}

std::size_t pick_in(std::size_t lo, std::size_t hi, std::size_t fallback, std::mt19937_64& rng) {
    if (hi <= lo) return fallback;
    std::uniform_int_distribution<std::size_t> d(lo, hi - 1);
    return d(rng);
}

} // namespace

void GeneratorConfig::validate() const {
    if (apps < 1) throw ConfigError("apps must be >= 1");
    if (new_apps < 0) throw ConfigError("new_apps must be >= 0");
    if (devices < 1) throw ConfigError("devices must be >= 1");
    if (days < 1) throw ConfigError("days must be >= 1");
    if (interval_seconds <= 0 || kSecondsPerHour % interval_seconds != 0) {
        throw ConfigError("interval_seconds must divide 3600");
    }
    if (shape_family != "gaussian_bumps") {
        throw ConfigError("unsupported shape_family '" + shape_family + "'");
    }
    if (noise < 0.0) throw ConfigError("noise must be >= 0");
    if (!(ar_coefficient > -1.0 && ar_coefficient < 1.0)) {
        throw ConfigError("ar_coefficient must lie in (-1, 1)");
    }
    if (trend < 0.0) throw ConfigError("trend must be >= 0");
    if (trend_segments < 1) throw ConfigError("trend_segments must be >= 1");
    if (scale_log_std < 0.0) throw ConfigError("scale_log_std must be >= 0");
    for (auto [name, value] : {std::pair{"switch_fraction", switch_fraction},
                               std::pair{"new_device_fraction", new_device_fraction},
                               std::pair{"new_app_fraction", new_app_fraction}}) {
        if (!(value >= 0.0 && value <= 1.0)) {
            throw ConfigError(fmt::format("{} must lie in [0, 1], got {}", name, value));
        }
    }
    if (new_apps == 0 && new_app_fraction > 0.0 && std::lround(new_app_fraction * devices) > 0) {
        throw ConfigError("new_app_fraction > 0 requires new_apps >= 1");
    }
    const long n_new_app = new_apps > 0 ? std::lround(new_app_fraction * devices) : 0;
    const long n_new_dev = std::lround(new_device_fraction * devices);
    const long n_switch = std::lround(switch_fraction * devices);
    if (n_new_app + n_new_dev + n_switch > devices) {
        throw ConfigError("switching, new-device and new-app devices exceed the device count");
    }
    if (apps < 2 && n_switch > 0) throw ConfigError("app switching needs at least 2 apps");
}

GeneratorConfig GeneratorConfig::from_json(const nlohmann::json& j) {
    GeneratorConfig c;
    static const std::vector<std::string> known = {
        "apps", "new_apps", "shape_family", "devices", "days", "interval_seconds", "start",
        "noise", "ar_coefficient", "trend", "trend_segments", "scale_log_mean", "scale_log_std",
        "switch_fraction", "new_device_fraction", "new_app_fraction", "seed"};
    if (!j.is_object()) throw ConfigError("generator config must be a JSON object");
    for (const auto& [key, _] : j.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            throw ConfigError("unknown generator config key '" + key + "'");
        }
    }
    try {
        c.apps = j.value("apps", c.apps);
        c.new_apps = j.value("new_apps", c.new_apps);
        c.shape_family = j.value("shape_family", c.shape_family);
        c.devices = j.value("devices", c.devices);
        c.days = j.value("days", c.days);
        c.interval_seconds = j.value("interval_seconds", c.interval_seconds);
        c.start = j.value("start", c.start);
        c.noise = j.value("noise", c.noise);
        c.ar_coefficient = j.value("ar_coefficient", c.ar_coefficient);
        c.trend = j.value("trend", c.trend);
        c.trend_segments = j.value("trend_segments", c.trend_segments);
        c.scale_log_mean = j.value("scale_log_mean", c.scale_log_mean);
        c.scale_log_std = j.value("scale_log_std", c.scale_log_std);
        c.switch_fraction = j.value("switch_fraction", c.switch_fraction);
        c.new_device_fraction = j.value("new_device_fraction", c.new_device_fraction);
        c.new_app_fraction = j.value("new_app_fraction", c.new_app_fraction);
        c.seed = j.value("seed", c.seed);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("generator config: ") + e.what());
    }
    c.validate();
    return c;
}

nlohmann::json GeneratorConfig::to_json() const {
    return {{"apps", apps},
            {"new_apps", new_apps},
            {"shape_family", shape_family},
            {"devices", devices},
            {"days", days},
            {"interval_seconds", interval_seconds},
            {"start", start},
            {"noise", noise},
            {"ar_coefficient", ar_coefficient},
            {"trend", trend},
            {"trend_segments", trend_segments},
            {"scale_log_mean", scale_log_mean},
            {"scale_log_std", scale_log_std},
            {"switch_fraction", switch_fraction},
            {"new_device_fraction", new_device_fraction},
            {"new_app_fraction", new_app_fraction},
            {"seed", seed}};
}

std::string archetype_name(int index) {
    if (index >= 0 && index < static_cast<int>(kNamedShapes.size())) return kNamedShapes[index];
    return "random_" + std::to_string(index);
}

std::vector<double> archetype_shape(int index, std::uint64_t seed) {
    switch (index) {
    case 0: return shape_from_bumps(0.2, {{12.0, 3.0, 1.0}});
    case 1: return shape_from_bumps(0.2, {{21.0, 2.5, 1.0}});
    case 2: return shape_from_bumps(0.2, {{9.0, 2.0, 0.8}, {20.0, 2.0, 0.9}});
    case 3:
        return shape_from_bumps(0.2, {{10.0, 2.2, 0.55}, {13.0, 2.2, 0.55}, {16.0, 2.2, 0.55},
                                      {19.0, 2.2, 0.55}});
    case 4: return shape_from_bumps(0.3, {{3.0, 4.0, 0.15}});
    default: break;
    }
    std::mt19937_64 rng(seed ^ (0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(index + 1)));
    std::uniform_real_distribution<double> center(0.0, 24.0), width(1.5, 4.0), amp(0.4, 1.0);
    std::uniform_int_distribution<int> count(1, 2);
    std::vector<Bump> bumps(static_cast<std::size_t>(count(rng)));
    for (auto& b : bumps) b = {center(rng), width(rng), amp(rng)};
    return shape_from_bumps(0.2, bumps);
}

Dataset generate_synthetic_dataset(const GeneratorConfig& config) {
    config.validate();
    std::mt19937_64 rng(config.seed);

    const auto steps_per_hour = static_cast<std::size_t>(kSecondsPerHour / config.interval_seconds);
    const std::size_t n = static_cast<std::size_t>(config.days) * 24 * steps_per_hour;
    const auto [train_end, val_end] = split_points(n);
    const std::size_t window = (48 + 24) * steps_per_hour;

    const int total_apps = config.apps + config.new_apps;
    std::vector<std::vector<double>> shapes;
    std::vector<double> app_scale;
    std::uniform_real_distribution<double> app_scale_dist(0.6, 1.4);
    for (int a = 0; a < total_apps; ++a) {
        shapes.push_back(archetype_shape(a, config.seed));
        app_scale.push_back(app_scale_dist(rng));
    }

    // Device roles: held-out-app devices, new devices, switching devices, steady.
    const std::size_t n_dev = static_cast<std::size_t>(config.devices);
    const auto n_new_app = static_cast<std::size_t>(
        config.new_apps > 0 ? std::lround(config.new_app_fraction * config.devices) : 0);
    const auto n_new_dev = static_cast<std::size_t>(std::lround(config.new_device_fraction * config.devices));
    const auto n_switch = static_cast<std::size_t>(std::lround(config.switch_fraction * config.devices));

    std::vector<std::size_t> order(n_dev);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    enum class Role { steady, switching, new_device, new_app };
    std::vector<Role> role(n_dev, Role::steady);
    std::vector<int> app(n_dev, 0);
    std::size_t cursor = 0;
    for (std::size_t k = 0; k < n_new_app; ++k, ++cursor) {
        role[order[cursor]] = Role::new_app;
        app[order[cursor]] = config.apps + static_cast<int>(k % static_cast<std::size_t>(config.new_apps));
    }
    for (std::size_t k = 0; k < n_new_dev; ++k, ++cursor) role[order[cursor]] = Role::new_device;
    for (std::size_t k = 0; k < n_switch; ++k, ++cursor) role[order[cursor]] = Role::switching;
    {
        // Seen-app devices are dealt round-robin in device order for balance.
        std::size_t k = 0;
        for (std::size_t d = 0; d < n_dev; ++d) {
            if (role[d] != Role::new_app) app[d] = static_cast<int>(k++ % static_cast<std::size_t>(config.apps));
        }
    }

    Dataset ds;
    ds.static_names = {"max_bandwidth", "cpu_count", "memory_gb", "disk_tb", "location", "isp"};
    ds.categorical = {{"location", {"north", "east", "south", "west", "central"}},
                      {"isp", {"telecom", "unicom", "mobile"}}};

    std::normal_distribution<double> gauss(0.0, 1.0);
    std::lognormal_distribution<double> scale_dist(config.scale_log_mean, config.scale_log_std);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<int> location_dist(0, 4), isp_dist(0, 2);

    nlohmann::json series_meta = nlohmann::json::object();
    std::size_t switch_rank = 0;
    const Timestamp test_start_ts = config.start + static_cast<Timestamp>(val_end) * config.interval_seconds;

    for (std::size_t d = 0; d < n_dev; ++d) {
        WorkloadSeries s;
        s.device_id = fmt::format("dev_{:03d}", d);
        s.series_id = s.device_id;
        s.app_id = fmt::format("app_{}", app[d]);
        s.interval_seconds = config.interval_seconds;
        s.timestamps.resize(n);
        s.values.resize(n);

        const double scale = scale_dist(rng);
        const auto trend = piecewise_trend(n, config.trend_segments, config.trend, rng);

        // Switching devices: the first half switch inside the test span, the
        // rest inside the training span.
        std::size_t switch_at = n;
        int switch_to = app[d];
        if (role[d] == Role::switching) {
            const bool in_test = switch_rank < (n_switch + 1) / 2;
            ++switch_rank;
            switch_at = in_test
                            ? pick_in(val_end + 24 * steps_per_hour, n - 24 * steps_per_hour, (val_end + n) / 2, rng)
                            : pick_in(window, train_end > 24 * steps_per_hour ? train_end - 24 * steps_per_hour : 0,
                                      train_end / 2, rng);
            std::uniform_int_distribution<int> other(0, config.apps - 2);
            switch_to = other(rng);
            if (switch_to >= app[d]) ++switch_to;
        }
        const std::size_t join_at =
            (role[d] == Role::new_app || role[d] == Role::new_device) ? val_end : 0;

        double ar = 0.0;
        const double ar_scale = std::sqrt(1.0 - config.ar_coefficient * config.ar_coefficient);
        for (std::size_t i = 0; i < n; ++i) {
            const Timestamp ts = config.start + static_cast<Timestamp>(i) * config.interval_seconds;
            s.timestamps[i] = ts;
            ar = config.ar_coefficient * ar + ar_scale * config.noise * gauss(rng);
            if (i < join_at) {
                s.values[i] = 0.0;
                continue;
            }
            const int current = i >= switch_at ? switch_to : app[d];
            const auto hour = static_cast<std::size_t>(((ts % 86400) + 86400) % 86400 / kSecondsPerHour);
            const double level = app_scale[current] * shapes[current][hour] * (1.0 + trend[i]) + ar;
            s.values[i] = scale * std::max(0.0, level);
        }

        if (role[d] == Role::switching) {
            ds.events.push_back({s.series_id, s.timestamps[switch_at], EventKind::app_switch,
                                 fmt::format("from=app_{};to=app_{}", app[d], switch_to)});
        } else if (role[d] == Role::new_device) {
            ds.events.push_back({s.series_id, s.timestamps[join_at], EventKind::new_device, ""});
        } else if (role[d] == Role::new_app) {
            ds.events.push_back({s.series_id, s.timestamps[join_at], EventKind::new_app, s.app_id});
        }

        // Static attributes: capacity tracks the device scale, categorical
        // columns use the ordinal codes of `ds.categorical`.
        const double bandwidth = scale * (1.5 + unit(rng));
        const double cpu = std::pow(2.0, std::clamp(std::round(2.0 + std::log2(scale / 5.0) + gauss(rng) * 0.5), 2.0, 6.0));
        const double memory = cpu * (2.0 + 2.0 * unit(rng));
        const double disk = 0.5 + 7.5 * unit(rng);
        const int location = location_dist(rng);
        const int isp = isp_dist(rng);
        ds.statics[s.series_id] = {s.series_id,
                                   {bandwidth, cpu, memory, disk, static_cast<double>(location),
                                    static_cast<double>(isp)}};

        nlohmann::json meta = {{"archetype", app[d]},
                               {"archetype_name", archetype_name(app[d])},
                               {"scale", scale}};
        if (role[d] == Role::switching) {
            meta["switch_index"] = switch_at;
            meta["switch_to"] = switch_to;
        }
        series_meta[s.series_id] = meta;
        ds.series.push_back(std::move(s));
    }

    nlohmann::json archetypes = nlohmann::json::array();
    for (int a = 0; a < total_apps; ++a) {
        archetypes.push_back({{"app_id", fmt::format("app_{}", a)},
                              {"shape", archetype_name(a)},
                              {"held_out", a >= config.apps},
                              {"app_scale", app_scale[a]}});
    }
    ds.metadata = {{"source", "synthetic"},
                   {"generator", config.to_json()},
                   {"archetypes", archetypes},
                   {"series", series_meta},
                   {"test_start", test_start_ts}};
    ds.validate();
    return ds;
}

} // namespace dyneformer::data
