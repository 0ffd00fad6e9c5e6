#include "dyneformer/data/csv_io.hpp"

#include "dyneformer/errors.hpp"
#include "dyneformer/hashing.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace dyneformer::data {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

template <typename Int>
bool parse_int(std::string_view s, Int& out) {
    s = trim(s);
    if (s.empty()) return false;
    if (s.front() == '+') s.remove_prefix(1);
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

std::optional<double> parse_real(std::string_view s) {
    s = trim(s);
    if (s.empty()) return std::nullopt;
    if (s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

std::size_t column_index(const std::vector<std::string>& header, const std::string& name, bool required,
                         const std::filesystem::path& path) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
        if (required) throw ParseError(1, fmt::format("{}: missing column '{}'", path.string(), name));
        return header.size();
    }
    return static_cast<std::size_t>(it - header.begin());
}

struct CsvReader {
    std::ifstream in;
    std::size_t line_no = 0;

    explicit CsvReader(const std::filesystem::path& path) : in(path) {
        if (!in) throw IoError("cannot open " + path.string());
    }

    bool next(std::vector<std::string>& fields) {
        std::string line;
        while (std::getline(in, line)) {
            ++line_no;
            if (trim(line).empty()) continue;
            fields = split_csv_line(line);
            return true;
        }
        return false;
    }
};

std::string csv_escape(std::string_view s) {
    if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

} // namespace

std::string format_real(double v) { return fmt::format("{}", v); }

std::optional<Timestamp> parse_timestamp(std::string_view text) {
    text = trim(text);
    Timestamp epoch = 0;
    if (parse_int(text, epoch)) return epoch;

    // YYYY-MM-DD[T ]HH:MM[:SS][Z]
    if (text.size() < 16) return std::nullopt;
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
    if (!parse_int(text.substr(0, 4), y) || text[4] != '-' || !parse_int(text.substr(5, 2), mo) ||
        text[7] != '-' || !parse_int(text.substr(8, 2), d) || (text[10] != 'T' && text[10] != ' ') ||
        !parse_int(text.substr(11, 2), h) || text[13] != ':' || !parse_int(text.substr(14, 2), mi)) {
        return std::nullopt;
    }
    std::string_view rest = text.substr(16);
    if (!rest.empty() && rest.front() == ':') {
        if (rest.size() < 3 || !parse_int(rest.substr(1, 2), s)) return std::nullopt;
        rest.remove_prefix(3);
    }
    if (rest == "Z" || rest == "+00:00") rest = {};
    if (!rest.empty()) return std::nullopt;
    using namespace std::chrono;
    const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok() || h > 23 || mi > 59 || s > 60) return std::nullopt;
    const auto days_since = sys_days{ymd}.time_since_epoch().count();
    return static_cast<Timestamp>(days_since) * 86400 + h * 3600 + mi * 60 + s;
}

std::string format_iso8601(Timestamp ts) {
    using namespace std::chrono;
    Timestamp day = ts / 86400;
    if (ts % 86400 < 0) --day;
    const Timestamp secs = ts - day * 86400;
    const year_month_day ymd{sys_days{days{day}}};
    return fmt::format("{:04d}-{:02d}-{:02d}T{:02d}:{:02d}:{:02d}Z", static_cast<int>(ymd.year()),
                       static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), secs / 3600,
                       (secs % 3600) / 60, secs % 60);
}

std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> fields;
    std::string current;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    current += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                current += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::string(trim(current)));
            current.clear();
        } else if (c != '\r') {
            current += c;
        }
    }
    fields.push_back(std::string(trim(current)));
    return fields;
}

Dataset ingest_long_csv(const std::filesystem::path& path, const CsvSchema& schema,
                        const std::optional<std::filesystem::path>& statics_path) {
    CsvReader reader(path);
    std::vector<std::string> header;
    if (!reader.next(header)) throw ParseError(1, path.string() + ": empty file");
    const auto c_id = column_index(header, schema.series_id, true, path);
    const auto c_ts = column_index(header, schema.timestamp, true, path);
    const auto c_val = column_index(header, schema.value, true, path);
    const auto c_dev = column_index(header, schema.device_id, false, path);
    const auto c_app = column_index(header, schema.app_id, false, path);

    struct Row {
        Timestamp ts;
        double value;
        std::size_t line;
    };
    std::map<std::string, std::vector<Row>> rows;
    std::map<std::string, std::pair<std::string, std::string>> identity;
    std::vector<std::string> order;

    std::vector<std::string> f;
    while (reader.next(f)) {
        const std::size_t line = reader.line_no;
        if (f.size() != header.size()) {
            throw ParseError(line, fmt::format("expected {} fields, found {}", header.size(), f.size()));
        }
        const std::string& id = f[c_id];
        if (id.empty()) throw ParseError(line, "empty series_id");
        const auto ts = parse_timestamp(f[c_ts]);
        if (!ts) throw ParseError(line, "unparseable timestamp '" + f[c_ts] + "'");
        if (trim(f[c_val]).empty()) throw ParseError(line, "empty value");
        const auto value = parse_real(f[c_val]);
        if (!value) throw ParseError(line, "non-numeric value '" + f[c_val] + "'");
        if (!rows.count(id)) {
            order.push_back(id);
            identity[id] = {c_dev < f.size() ? f[c_dev] : id, c_app < f.size() ? f[c_app] : ""};
        }
        rows[id].push_back({*ts, *value, line});
    }

    Dataset ds;
    for (const auto& id : order) {
        auto& r = rows[id];
        std::stable_sort(r.begin(), r.end(), [](const Row& a, const Row& b) { return a.ts < b.ts; });
        WorkloadSeries s;
        s.series_id = id;
        s.device_id = identity[id].first;
        s.app_id = identity[id].second;
        for (std::size_t i = 0; i < r.size(); ++i) {
            if (i > 0 && r[i].ts == r[i - 1].ts) {
                throw DuplicateError(fmt::format("series {}: duplicate timestamp {} (lines {} and {})", id,
                                                 r[i].ts, r[i - 1].line, r[i].line));
            }
            s.timestamps.push_back(r[i].ts);
            s.values.push_back(r[i].value);
        }
        // Raw traces may have gaps; the sampling interval is the smallest step.
        std::int64_t interval = 0;
        for (std::size_t i = 1; i < s.timestamps.size(); ++i) {
            const auto step = s.timestamps[i] - s.timestamps[i - 1];
            interval = interval == 0 ? step : std::min(interval, step);
        }
        s.interval_seconds = interval > 0 ? interval : kSecondsPerHour;
        ds.series.push_back(std::move(s));
    }
    ds.metadata = {{"source", "csv"}, {"path", path.string()}, {"sha256", sha256_file(path)}};

    if (statics_path) {
        std::filesystem::path sidecar = *statics_path;
        sidecar.replace_extension(".json");
        std::map<std::string, CategoricalEncoding> encodings;
        if (std::filesystem::exists(sidecar)) {
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(read_file(sidecar));
            } catch (const nlohmann::json::exception& e) {
                throw ParseError(1, sidecar.string() + ": " + e.what());
            }
            if (j.contains("categorical")) {
                for (const auto& [col, labels] : j["categorical"].items()) {
                    encodings[col] = {col, labels.get<std::vector<std::string>>()};
                }
            }
        }
        CsvReader sr(*statics_path);
        std::vector<std::string> sh;
        if (!sr.next(sh)) throw ParseError(1, statics_path->string() + ": empty file");
        const auto s_id = column_index(sh, "series_id", true, *statics_path);
        for (std::size_t c = 0; c < sh.size(); ++c) {
            if (c == s_id) continue;
            ds.static_names.push_back(sh[c]);
            if (auto it = encodings.find(sh[c]); it != encodings.end()) ds.categorical.push_back(it->second);
        }
        while (sr.next(f)) {
            if (f.size() != sh.size()) {
                throw ParseError(sr.line_no, fmt::format("expected {} fields, found {}", sh.size(), f.size()));
            }
            StaticContext ctx;
            ctx.series_id = f[s_id];
            for (std::size_t c = 0; c < sh.size(); ++c) {
                if (c == s_id) continue;
                if (auto it = encodings.find(sh[c]); it != encodings.end()) {
                    try {
                        ctx.attributes.push_back(it->second.encode(f[c]));
                    } catch (const KeyError& e) {
                        throw ParseError(sr.line_no, e.what());
                    }
                } else {
                    const auto v = parse_real(f[c]);
                    if (!v) throw ParseError(sr.line_no, "non-numeric static attribute '" + f[c] + "'");
                    ctx.attributes.push_back(*v);
                }
            }
            if (ds.statics.count(ctx.series_id)) {
                throw DuplicateError("duplicate static row for series " + ctx.series_id);
            }
            ds.statics[ctx.series_id] = std::move(ctx);
        }
    }
    ds.validate();
    return ds;
}

DatasetFiles DatasetFiles::in(const std::filesystem::path& dir) {
    return {dir / "workload.csv", dir / "statics.csv", dir / "statics.json", dir / "events.csv",
            dir / "metadata.json"};
}

std::vector<std::filesystem::path> DatasetFiles::all() const {
    return {workload, statics, statics_sidecar, events, metadata};
}

DatasetFiles save_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
    const auto files = DatasetFiles::in(dir);
    std::string w = "series_id,timestamp,value,device_id,app_id\n";
    for (const auto& s : dataset.series) {
        for (std::size_t i = 0; i < s.size(); ++i) {
            w += fmt::format("{},{},{},{},{}\n", csv_escape(s.series_id), format_iso8601(s.timestamps[i]),
                             format_real(s.values[i]), csv_escape(s.device_id), csv_escape(s.app_id));
        }
    }
    write_file(files.workload, w);

    std::map<std::string, const CategoricalEncoding*> cats;
    for (const auto& c : dataset.categorical) cats[c.column] = &c;
    std::string st = "series_id";
    for (const auto& n : dataset.static_names) st += "," + csv_escape(n);
    st += "\n";
    for (const auto& s : dataset.series) {
        auto it = dataset.statics.find(s.series_id);
        if (it == dataset.statics.end()) continue;
        st += csv_escape(s.series_id);
        for (std::size_t j = 0; j < dataset.static_names.size(); ++j) {
            const double v = it->second.attributes[j];
            if (auto c = cats.find(dataset.static_names[j]); c != cats.end()) {
                st += "," + csv_escape(c->second->categories.at(static_cast<std::size_t>(v)));
            } else {
                st += "," + format_real(v);
            }
        }
        st += "\n";
    }
    write_file(files.statics, st);

    nlohmann::json sidecar = {{"columns", dataset.static_names}, {"categorical", nlohmann::json::object()}};
    for (const auto& c : dataset.categorical) sidecar["categorical"][c.column] = c.categories;
    write_file(files.statics_sidecar, sidecar.dump(2) + "\n");

    std::string ev = "series_id,timestamp,kind,payload\n";
    for (const auto& e : dataset.events) {
        ev += fmt::format("{},{},{},{}\n", csv_escape(e.series_id), format_iso8601(e.timestamp),
                          to_string(e.kind), csv_escape(e.payload));
    }
    write_file(files.events, ev);
    write_file(files.metadata, dataset.metadata.dump(2) + "\n");
    return files;
}

Dataset load_dataset(const std::filesystem::path& dir) {
    const auto files = DatasetFiles::in(dir);
    std::optional<std::filesystem::path> statics;
    if (std::filesystem::exists(files.statics)) statics = files.statics;
    Dataset ds = ingest_long_csv(files.workload, {}, statics);

    if (std::filesystem::exists(files.events)) {
        CsvReader reader(files.events);
        std::vector<std::string> header, f;
        if (reader.next(header)) {
            while (reader.next(f)) {
                if (f.size() != 4) throw ParseError(reader.line_no, "events.csv needs 4 fields");
                const auto ts = parse_timestamp(f[1]);
                if (!ts) throw ParseError(reader.line_no, "unparseable timestamp '" + f[1] + "'");
                try {
                    ds.events.push_back({f[0], *ts, parse_event_kind(f[2]), f[3]});
                } catch (const KeyError& e) {
                    throw ParseError(reader.line_no, e.what());
                }
            }
        }
    }
    if (std::filesystem::exists(files.metadata)) {
        try {
            ds.metadata = nlohmann::json::parse(read_file(files.metadata));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(1, files.metadata.string() + ": " + e.what());
        }
    }
    ds.validate();
    return ds;
}

} // namespace dyneformer::data
