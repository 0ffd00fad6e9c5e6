#pragma once

#include "dyneformer/data/types.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dyneformer::data {

/// Column names of a long-format workload CSV. Empty optional columns are
/// looked up under their default names and skipped when absent.
struct CsvSchema {
    std::string series_id = "series_id";
    std::string timestamp = "timestamp";
    std::string value = "value";
    std::string device_id = "device_id";
    std::string app_id = "app_id";
};

/// Parses an ISO-8601 UTC timestamp ("2022-08-01T00:00:00Z", "2022-08-01 00:00:00")
/// or integer epoch seconds. Returns nullopt on malformed input.
std::optional<Timestamp> parse_timestamp(std::string_view text);
std::string format_iso8601(Timestamp ts);

/// Splits one CSV record. Double-quoted fields may contain commas and "" escapes.
std::vector<std::string> split_csv_line(std::string_view line);

/// Reads a long-format workload CSV (plus an optional statics CSV whose
/// categorical columns are declared in `<statics>.json`). Rows are grouped by
/// series and sorted by timestamp.
Dataset ingest_long_csv(const std::filesystem::path& path, const CsvSchema& schema = {},
                        const std::optional<std::filesystem::path>& statics_path = std::nullopt);

/// Dataset directory layout:
///   workload.csv  series_id,timestamp,value,device_id,app_id
///   statics.csv   series_id,attr_1..attr_ds (categorical columns as labels)
///   statics.json  {"columns":[...], "categorical":{"col":[labels]}}
///   events.csv    series_id,timestamp,kind,payload
///   metadata.json provenance record
struct DatasetFiles {
    std::filesystem::path workload;
    std::filesystem::path statics;
    std::filesystem::path statics_sidecar;
    std::filesystem::path events;
    std::filesystem::path metadata;

    static DatasetFiles in(const std::filesystem::path& dir);
    std::vector<std::filesystem::path> all() const;
};

DatasetFiles save_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

/// Formats a double so that parsing it back yields the identical value.
std::string format_real(double v);

} // namespace dyneformer::data
