#pragma once

#include "dyneformer/data/types.hpp"

#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace dyneformer::testing {

inline data::WorkloadSeries hourly_series(const std::string& id, std::vector<double> values,
                                          data::Timestamp start = 1659312000) {
    data::WorkloadSeries s;
    s.series_id = id;
    s.device_id = id;
    s.app_id = "app_0";
    s.values = std::move(values);
    for (std::size_t i = 0; i < s.values.size(); ++i) {
        s.timestamps.push_back(start + static_cast<data::Timestamp>(i) * data::kSecondsPerHour);
    }
    return s;
}

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("dyneformer_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace dyneformer::testing
