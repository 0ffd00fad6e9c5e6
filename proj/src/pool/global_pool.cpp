#include "dyneformer/pool/global_pool.hpp"

#include "dyneformer/data/csv_io.hpp"
#include "dyneformer/errors.hpp"
#include "dyneformer/hashing.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <string>

namespace dyneformer::pool {

namespace {

int hour_of_day(data::Timestamp ts) {
    const data::Timestamp in_day = ((ts % 86400) + 86400) % 86400;
    return static_cast<int>(in_day / data::kSecondsPerHour);
}

} // namespace

RowMatrix GlobalPool::aligned(int start_hour) const {
    const Eigen::Index t2 = pools.cols();
    RowMatrix out(pools.rows(), t2);
    const Eigen::Index shift = ((static_cast<Eigen::Index>(start_hour) % t2) + t2) % t2;
    for (Eigen::Index t = 0; t < t2; ++t) out.col(t) = pools.col((t + shift) % t2);
    return out;
}

void GlobalPool::validate() const {
    if (pools.rows() == 0 || pools.cols() == 0) throw DataError("global pool is empty");
    if (static_cast<Eigen::Index>(member_counts.size()) != pools.rows()) {
        throw DataError("global pool: one member count per pool row expected");
    }
    for (int c : member_counts) {
        if (c < 1) throw DataError("global pool: every pool needs at least one member");
    }
    if (period < 1) throw DataError("global pool: period must be positive");
    if (!pools.allFinite()) throw DataError("global pool holds non-finite values");
}

std::vector<SeasonalWindow> extract_seasonal_windows(const data::Dataset& train_part, const data::Preprocessing& prep,
                                                     int period, std::size_t length, const decomp::StlParams& stl) {
    std::vector<SeasonalWindow> out;
    for (const auto& s : train_part.series) {
        s.validate();
        if (s.interval_seconds != data::kSecondsPerHour) {
            throw DataError("seasonal windows need hourly series; resample " + s.series_id + " first");
        }
        if (s.size() < std::max<std::size_t>(2 * static_cast<std::size_t>(period), length)) continue;
        data::Normalizer norm;
        if (auto it = prep.normalizers.find(s.series_id); it != prep.normalizers.end()) {
            norm = it->second;
        } else {
            norm = data::Normalizer::fit(s.values);
        }
        std::vector<double> z(s.size());
        for (std::size_t i = 0; i < s.size(); ++i) z[i] = norm.apply(s.values[i]);
        const auto result = decomp::stl_decompose(z, period, stl);

        std::size_t first = 0;
        while (first < s.size() && hour_of_day(s.timestamps[first]) != 0) ++first;
        for (std::size_t w = first; w + length <= s.size(); w += static_cast<std::size_t>(period)) {
            SeasonalWindow win;
            win.series_id = s.series_id;
            win.window_start = s.timestamps[w];
            win.values.assign(result.seasonal.begin() + static_cast<std::ptrdiff_t>(w),
                              result.seasonal.begin() + static_cast<std::ptrdiff_t>(w + length));
            out.push_back(std::move(win));
        }
    }
    return out;
}

RowMatrix stack_windows(const std::vector<SeasonalWindow>& windows) {
    if (windows.empty()) return RowMatrix(0, 0);
    const auto width = static_cast<Eigen::Index>(windows.front().values.size());
    RowMatrix out(static_cast<Eigen::Index>(windows.size()), width);
    for (std::size_t i = 0; i < windows.size(); ++i) {
        if (static_cast<Eigen::Index>(windows[i].values.size()) != width) {
            throw DimensionError("seasonal windows differ in length");
        }
        out.row(static_cast<Eigen::Index>(i)) =
            Eigen::Map<const Eigen::RowVectorXd>(windows[i].values.data(), width);
    }
    return out;
}

GlobalPool build_global_pool(const std::vector<SeasonalWindow>& windows, const std::vector<int>& labels,
                             nlohmann::json provenance, int period) {
    if (windows.size() != labels.size()) throw DimensionError("one cluster label per window expected");
    if (windows.empty()) throw DataError("no windows to pool");
    const RowMatrix x = stack_windows(windows);
    int max_label = -1;
    for (int l : labels) {
        if (l < 0) throw DataError("cluster labels must be non-negative");
        max_label = std::max(max_label, l);
    }
    const auto k = static_cast<Eigen::Index>(max_label + 1);
    RowMatrix sums = RowMatrix::Zero(k, x.cols());
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        sums.row(labels[i]) += x.row(static_cast<Eigen::Index>(i));
        ++counts[static_cast<std::size_t>(labels[i])];
    }

    GlobalPool pool;
    pool.period = period;
    std::vector<Eigen::Index> kept;
    for (Eigen::Index c = 0; c < k; ++c) {
        if (counts[static_cast<std::size_t>(c)] == 0) {
            spdlog::warn("cluster {} has no members; dropped from the global pool", c);
            continue;
        }
        kept.push_back(c);
    }
    if (kept.empty()) throw DataError("all clusters are empty");
    pool.pools.resize(static_cast<Eigen::Index>(kept.size()), x.cols());
    for (std::size_t i = 0; i < kept.size(); ++i) {
        const int n = counts[static_cast<std::size_t>(kept[i])];
        pool.pools.row(static_cast<Eigen::Index>(i)) = sums.row(kept[i]) / static_cast<double>(n);
        pool.member_counts.push_back(n);
    }
    pool.provenance = provenance.is_object() ? std::move(provenance) : nlohmann::json::object();
    pool.provenance["source_windows"] = windows.size();
    return pool;
}

std::string dataset_fingerprint(const data::Dataset& dataset) {
    std::string canon;
    for (const auto& s : dataset.series) {
        canon += s.series_id;
        canon += '\n';
        for (std::size_t i = 0; i < s.size(); ++i) {
            canon += fmt::format("{},{}\n", s.timestamps[i], data::format_real(s.values[i]));
        }
    }
    return sha256_hex(canon);
}

void PoolBuildConfig::validate() const {
    if (fixed_size < 0) throw ConfigError("fixed pool size must be >= 0");
    if (fixed_size == 0 && candidates.empty()) throw ConfigError("pool size candidates are empty");
    if (period < 1 || window_length < period) throw ConfigError("pool windows need 1 <= period <= T2");
    vade.validate();
}

PoolBuildConfig PoolBuildConfig::from_json(const nlohmann::json& j) {
    PoolBuildConfig c;
    if (!j.is_object()) throw ConfigError("pool config must be a JSON object");
    static const char* known[] = {"candidates", "P", "period", "T2", "vade", "stl"};
    for (const auto& [key, _] : j.items()) {
        if (std::find(std::begin(known), std::end(known), key) == std::end(known)) {
            throw ConfigError(fmt::format("unknown pool config key '{}'", key));
        }
    }
    try {
        c.candidates = j.value("candidates", c.candidates);
        c.fixed_size = j.value("P", c.fixed_size);
        c.period = j.value("period", c.period);
        c.window_length = j.value("T2", c.window_length);
        if (j.contains("vade")) c.vade = VadeHyper::from_json(j.at("vade"));
        if (j.contains("stl")) c.stl = decomp::StlParams::from_json(j.at("stl"));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("pool config: ") + e.what());
    }
    c.validate();
    return c;
}

nlohmann::json PoolBuildConfig::to_json() const {
    return {{"candidates", candidates}, {"P", fixed_size},          {"period", period},
            {"T2", window_length},      {"vade", vade.to_json()}, {"stl", stl.to_json()}};
}

PoolBuildResult build_pool(const data::Dataset& train_part, const data::Preprocessing& prep,
                           const PoolBuildConfig& config, nlohmann::json provenance) {
    config.validate();
    const auto windows = extract_seasonal_windows(train_part, prep, config.period,
                                                  static_cast<std::size_t>(config.window_length), config.stl);
    if (windows.empty()) throw DataError("no seasonal windows: training series are too short");
    const RowMatrix x = stack_windows(windows);
    PoolBuildResult result;
    int chosen = config.fixed_size;
    if (chosen == 0) {
        result.selection = select_pool_size(x, config.candidates, config.vade);
        chosen = result.selection.chosen;
    }
    const auto model = train_vade(x, chosen, config.vade);
    const auto clusters = assign_clusters(model, x);
    if (!provenance.is_object()) provenance = nlohmann::json::object();
    provenance["build"] = config.to_json();
    provenance["chosen_P"] = chosen;
    result.pool = build_global_pool(windows, clusters.labels, std::move(provenance), config.period);
    return result;
}

nlohmann::json pool_to_json(const GlobalPool& pool) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index p = 0; p < pool.pools.rows(); ++p) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index t = 0; t < pool.pools.cols(); ++t) row.push_back(pool.pools(p, t));
        rows.push_back(std::move(row));
    }
    return {{"version", 1},
            {"period", pool.period},
            {"T2", pool.window_length()},
            {"P", pool.size()},
            {"pools", std::move(rows)},
            {"member_counts", pool.member_counts},
            {"provenance", pool.provenance}};
}

GlobalPool pool_from_json(const nlohmann::json& j) {
    GlobalPool pool;
    try {
        if (j.at("version").get<int>() != 1) throw DataError("unsupported pool file version");
        pool.period = j.at("period").get<int>();
        const int t2 = j.at("T2").get<int>();
        const int p = j.at("P").get<int>();
        const auto& rows = j.at("pools");
        if (static_cast<int>(rows.size()) != p) throw DataError("pool file: P does not match the pool rows");
        pool.pools.resize(p, t2);
        for (int r = 0; r < p; ++r) {
            if (static_cast<int>(rows[static_cast<std::size_t>(r)].size()) != t2) {
                throw DataError("pool file: row length differs from T2");
            }
            for (int t = 0; t < t2; ++t) pool.pools(r, t) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(t)].get<double>();
        }
        pool.member_counts = j.at("member_counts").get<std::vector<int>>();
        pool.provenance = j.value("provenance", nlohmann::json::object());
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed pool file: ") + e.what());
    }
    pool.validate();
    return pool;
}

void save_pool(const GlobalPool& pool, const std::filesystem::path& path) {
    pool.validate();
    write_file(path, pool_to_json(pool).dump(1) + "\n");
}

GlobalPool load_pool(const std::filesystem::path& path) {
    const std::string text = read_file(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(fmt::format("{}: {}", path.string(), e.what()));
    }
    return pool_from_json(j);
}

} // namespace dyneformer::pool
