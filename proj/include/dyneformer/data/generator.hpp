#pragma once

#include "dyneformer/data/types.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace dyneformer::data {

/// Synthetic multi-tenant edge workload generator settings. JSON keys match
/// the field names; see README for the schema.
struct GeneratorConfig {
    int apps = 5;            // archetypes seen during training
    int new_apps = 1;        // extra held-out archetypes, deployed only in the test span
    std::string shape_family = "gaussian_bumps";
    int devices = 60;
    int days = 30;
    std::int64_t interval_seconds = kSecondsPerHour;
    Timestamp start = 1659312000; // 2022-08-01T00:00:00Z, a Monday

    double noise = 0.08;          // stddev of the AR(1) noise, relative to the device scale
    double ar_coefficient = 0.5;
    double trend = 0.15;          // max relative amplitude of the piecewise-linear trend
    int trend_segments = 3;
    double scale_log_mean = 3.0;  // device scale ~ LogNormal(scale_log_mean, scale_log_std)
    double scale_log_std = 0.5;

    double switch_fraction = 0.2;
    double new_device_fraction = 0.1;
    double new_app_fraction = 0.05;
    std::uint64_t seed = 7;

    void validate() const; // throws ConfigError
    static GeneratorConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

/// 24-point daily shape of archetype `index` (0-based). The first five are the
/// fixed noon/night/double/plateau/low-flat shapes; later indices are random
/// bump mixtures drawn from `seed`.
std::vector<double> archetype_shape(int index, std::uint64_t seed);
std::string archetype_name(int index);

/// Builds a deterministic synthetic dataset. Each device carries one app at a
/// time; switches, new devices and new apps are logged as events. Late-joining
/// entities report 0 before their join time (the test boundary).
Dataset generate_synthetic_dataset(const GeneratorConfig& config);

} // namespace dyneformer::data
