#include "dyneformer/cli/cli.hpp"

#include "dyneformer/data/csv_io.hpp"
#include "dyneformer/data/generator.hpp"
#include "dyneformer/decomp/stl.hpp"
#include "dyneformer/errors.hpp"
#include "dyneformer/hashing.hpp"
#include "dyneformer/pool/global_pool.hpp"
#include "dyneformer/train/ablation.hpp"
#include "dyneformer/train/checkpoint.hpp"
#include "dyneformer/usecase/depreciation.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <filesystem>
#include <iostream>
#include <optional>

namespace dyneformer::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string pool;
    std::string checkpoint;
    std::string tag;
    std::string out;
    std::string padding;
    std::string data;
    std::string split = "test";
    std::string manifest;
    bool no_gp = false;
    bool no_sa = false;
    bool use_gp = false;
    bool raw_scale = false;
    int repeats = 3;
};

json read_json(const fs::path& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
    }
}

/// Records inputs/outputs of one command and writes `<out>/<command>.manifest.json`.
class Manifest {
public:
    Manifest(std::string command, std::vector<std::string> args)
        : command_(std::move(command)), args_(std::move(args)), start_(std::chrono::steady_clock::now()) {}

    void input(const fs::path& path) {
        if (fs::exists(path)) inputs_[path.string()] = sha256_file(path);
    }
    void dataset_inputs(const fs::path& dir) {
        for (const auto& p : data::DatasetFiles::in(dir).all()) input(p);
    }
    void output(const fs::path& path) { outputs_.push_back(path); }
    void config(const json& effective) { config_ = effective; }
    void seed(std::uint64_t s) { seed_ = s; }

    fs::path write(const fs::path& out_dir) const {
        json outputs = json::object();
        for (const auto& p : outputs_) outputs[p.string()] = sha256_file(p);
        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        json m = {{"command", command_},
                  {"argv", args_},
                  {"config", config_},
                  {"config_sha256", sha256_hex(config_.dump())},
                  {"inputs", inputs_},
                  {"outputs", outputs},
                  {"seed", seed_ ? json(*seed_) : json(nullptr)},
                  {"tool_version", kToolVersion},
                  {"wall_time_seconds", wall}};
        const auto path = out_dir / (command_ + ".manifest.json");
        write_file(path, m.dump(1) + "\n");
        return path;
    }

private:
    std::string command_;
    std::vector<std::string> args_;
    std::chrono::steady_clock::time_point start_;
    json inputs_ = json::object();
    std::vector<fs::path> outputs_;
    json config_ = json::object();
    std::optional<std::uint64_t> seed_;
};

void write_output(Manifest& manifest, const fs::path& path, std::string_view bytes) {
    write_file(path, bytes);
    manifest.output(path);
}

data::Dataset load_data(const Options& o, Manifest& manifest) {
    if (o.data.empty()) throw ConfigError("--data <dir> is required");
    manifest.dataset_inputs(o.data);
    return data::load_dataset(o.data);
}

struct TrainSettings {
    model::ModelConfig model;
    train::OptimConfig optim;
};

TrainSettings train_settings(const Options& o, Manifest& manifest) {
    TrainSettings s;
    if (!o.config.empty()) {
        manifest.input(o.config);
        const auto j = read_json(o.config);
        if (!j.is_object()) throw ConfigError("train config must be a JSON object");
        for (const auto& [key, _] : j.items()) {
            if (key != "model" && key != "optim") throw ConfigError(fmt::format("unknown train config key '{}'", key));
        }
        if (j.contains("model")) s.model = model::ModelConfig::from_json(j.at("model"));
        if (j.contains("optim")) s.optim = train::OptimConfig::from_json(j.at("optim"));
    }
    if (o.seed) s.optim.seed = *o.seed;
    if (o.no_gp && o.use_gp) throw ConfigError("--use-gp and --no-gp are exclusive");
    if (o.no_gp) {
        s.model.use_gp = false;
        s.model.padding = model::PaddingMode::zero;
    }
    if (o.use_gp) s.model.use_gp = true;
    if (o.no_sa) s.model.use_sa = false;
    if (!o.padding.empty()) s.model.padding = model::parse_padding_mode(o.padding);
    return s;
}

data::WindowConfig window_config(const model::ModelConfig& m) {
    data::WindowConfig w;
    w.input_length = static_cast<std::size_t>(m.input_length);
    w.horizon = static_cast<std::size_t>(m.horizon);
    w.token_length = static_cast<std::size_t>(m.token_length);
    return w;
}

std::optional<pool::GlobalPool> load_pool_for(bool use_gp, const Options& o, Manifest& manifest) {
    if (!use_gp) return std::nullopt;
    if (o.pool.empty()) throw StateError("pool file required: the model uses the global pool (pass --pool or --no-gp)");
    manifest.input(o.pool);
    return pool::load_pool(o.pool);
}

train::LoadedCheckpoint load_model(const Options& o, Manifest& manifest, std::optional<pool::GlobalPool>& pool) {
    if (o.checkpoint.empty()) throw ConfigError("--checkpoint <path> is required");
    manifest.input(o.checkpoint);
    manifest.input(train::sidecar_path(o.checkpoint));
    std::optional<std::string> pool_hash;
    if (!o.pool.empty()) pool_hash = sha256_file(o.pool);
    auto loaded = train::load_checkpoint(o.checkpoint, pool_hash);
    pool = load_pool_for(loaded.meta.config.use_gp, o, manifest);
    return loaded;
}

const std::vector<data::WindowSample>& pick_split(const train::PreparedData& data, const std::string& split) {
    if (split == "train") return data.train;
    if (split == "val") return data.val;
    if (split == "test") return data.test;
    throw ConfigError(fmt::format("--split must be train, val or test, got '{}'", split));
}

std::string report_rows(const std::string& model_name, const train::EvalReport& r) {
    std::string out = fmt::format("{},{},{},{},{}\n", model_name, train::kOverallTag, data::format_real(r.overall.mse),
                                  data::format_real(r.overall.mae), r.overall.n_samples);
    for (const auto& [tag, g] : r.per_tag) {
        out += fmt::format("{},{},{},{},{}\n", model_name, data::to_string(tag), data::format_real(g.mse),
                           data::format_real(g.mae), g.n_samples);
    }
    return out;
}

// --- subcommands -----------------------------------------------------------

int cmd_gen_data(const Options& o, Manifest& manifest, std::ostream& out) {
    data::GeneratorConfig cfg;
    if (!o.config.empty()) {
        manifest.input(o.config);
        cfg = data::GeneratorConfig::from_json(read_json(o.config));
    }
    if (o.seed) cfg.seed = *o.seed;
    manifest.config(cfg.to_json());
    manifest.seed(cfg.seed);
    const auto ds = data::generate_synthetic_dataset(cfg);
    const auto files = data::save_dataset(ds, o.out);
    for (const auto& p : files.all()) manifest.output(p);
    out << fmt::format("wrote {} series to {}\n", ds.series.size(), o.out);
    return 0;
}

int cmd_decompose(const Options& o, Manifest& manifest, std::ostream& out) {
    const auto ds = load_data(o, manifest);
    int period = 24;
    decomp::StlParams stl;
    if (!o.config.empty()) {
        manifest.input(o.config);
        const auto j = read_json(o.config);
        period = j.value("period", period);
        if (j.contains("stl")) stl = decomp::StlParams::from_json(j.at("stl"));
    }
    manifest.config({{"period", period}, {"stl", stl.to_json()}});
    std::string csv = "series_id,timestamp,value,seasonal,trend,residual\n";
    for (const auto& s : ds.series) {
        const auto r = decomp::stl_decompose(s.values, period, stl);
        for (std::size_t i = 0; i < s.size(); ++i) {
            csv += fmt::format("{},{},{},{},{},{}\n", s.series_id, data::format_iso8601(s.timestamps[i]),
                               data::format_real(s.values[i]), data::format_real(r.seasonal[i]),
                               data::format_real(r.trend[i]), data::format_real(r.residual[i]));
        }
    }
    write_output(manifest, fs::path(o.out) / "decomposition.csv", csv);
    out << fmt::format("decomposed {} series\n", ds.series.size());
    return 0;
}

int cmd_build_pool(const Options& o, Manifest& manifest, std::ostream& out) {
    const auto ds = load_data(o, manifest);
    pool::PoolBuildConfig cfg;
    if (!o.config.empty()) {
        manifest.input(o.config);
        cfg = pool::PoolBuildConfig::from_json(read_json(o.config));
    }
    if (o.seed) cfg.vade.seed = *o.seed;
    manifest.config(cfg.to_json());
    manifest.seed(cfg.vade.seed);
    data::WindowConfig windows;
    const auto prepared = train::prepare_data(ds, windows);
    const auto built = pool::build_pool(prepared.split.train, prepared.prep, cfg,
                                        train::pool_provenance(prepared.split.train));
    const auto pool_path = fs::path(o.out) / "pool.json";
    pool::save_pool(built.pool, pool_path);
    manifest.output(pool_path);
    std::string bic = "P,bic,chosen\n";
    for (std::size_t i = 0; i < built.selection.candidates.size(); ++i) {
        const int p = built.selection.candidates[i];
        bic += fmt::format("{},{},{}\n", p, data::format_real(built.selection.bic[i]),
                           p == built.selection.chosen ? 1 : 0);
    }
    write_output(manifest, fs::path(o.out) / "bic.csv", bic);
    out << fmt::format("pool P = {} written to {}\n", built.pool.size(), pool_path.string());
    return 0;
}

int cmd_train(const Options& o, Manifest& manifest, std::ostream& out) {
    auto settings = train_settings(o, manifest);
    auto pool = load_pool_for(settings.model.use_gp, o, manifest);
    const auto ds = load_data(o, manifest);
    if (pool) settings.model.pool_size = pool->size();
    settings.model.d_s = static_cast<int>(ds.static_dim());
    manifest.config({{"model", settings.model.to_json()}, {"optim", settings.optim.to_json()}});
    manifest.seed(settings.optim.seed);
    const auto prepared = train::prepare_data(ds, window_config(settings.model));
    const auto result = train::train_model(settings.model, prepared, pool ? &*pool : nullptr, settings.optim);

    train::CheckpointMeta meta;
    meta.optim = settings.optim;
    meta.pool_sha256 = pool ? sha256_file(o.pool) : std::string();
    meta.normalizer_ref = train::normalizer_reference(prepared);
    meta.seed = settings.optim.seed;
    meta.history = result.history;
    const auto ckpt = fs::path(o.out) / "checkpoint.bin";
    train::save_checkpoint(ckpt, result.model, meta);
    manifest.output(ckpt);
    manifest.output(train::sidecar_path(ckpt));
    std::string hist = "epoch,train_loss,val_loss\n";
    for (const auto& e : result.history.epochs) {
        hist += fmt::format("{},{},{}\n", e.epoch, data::format_real(e.train_loss), data::format_real(e.val_loss));
    }
    write_output(manifest, fs::path(o.out) / "history.csv", hist);
    out << fmt::format("best validation MSE {:.5f} at epoch {}\n", result.history.best_val_loss,
                       result.history.best_epoch);
    return 0;
}

int cmd_eval(const Options& o, Manifest& manifest, std::ostream& out) {
    std::optional<pool::GlobalPool> pool;
    const auto loaded = load_model(o, manifest, pool);
    const auto ds = load_data(o, manifest);
    std::optional<data::BehaviorTag> filter;
    if (!o.tag.empty()) filter = data::parse_behavior_tag(o.tag);
    manifest.config({{"split", o.split}, {"tag", o.tag}, {"raw_scale", o.raw_scale}});
    manifest.seed(loaded.meta.seed);
    const auto prepared = train::prepare_data(ds, window_config(loaded.meta.config));
    const auto& samples = pick_split(prepared, o.split);
    const auto report = train::evaluate(loaded.model, samples, pool ? &*pool : nullptr, filter, o.raw_scale);
    const auto naive = train::seasonal_naive_baseline(samples, filter, o.raw_scale);
    std::string csv = "model,tag,mse,mae,n_samples\n";
    csv += report_rows("dyneformer", report);
    csv += report_rows("seasonal_naive", naive);
    write_output(manifest, fs::path(o.out) / "eval.csv", csv);
    json j = {{"split", o.split}, {"dyneformer", report.to_json()}, {"seasonal_naive", naive.to_json()}};
    write_output(manifest, fs::path(o.out) / "eval.json", j.dump(1) + "\n");
    out << fmt::format("{} MSE {:.5f} MAE {:.5f} ({} samples, {} scale)\n", o.split, report.overall.mse,
                       report.overall.mae, report.overall.n_samples, o.raw_scale ? "raw" : "normalized");
    return 0;
}

int cmd_ablate(const Options& o, Manifest& manifest, std::ostream& out) {
    auto settings = train_settings(o, manifest);
    if (o.pool.empty()) throw StateError("pool file required for the ablation suite");
    auto pool = load_pool_for(true, o, manifest);
    const auto ds = load_data(o, manifest);
    settings.model.pool_size = pool->size();
    settings.model.d_s = static_cast<int>(ds.static_dim());
    if (o.repeats < 1) throw ConfigError("--repeats must be >= 1");
    std::vector<std::uint64_t> seeds;
    for (int i = 0; i < o.repeats; ++i) seeds.push_back(settings.optim.seed + static_cast<std::uint64_t>(i));
    manifest.config({{"model", settings.model.to_json()}, {"optim", settings.optim.to_json()}, {"seeds", seeds}});
    manifest.seed(settings.optim.seed);
    const auto prepared = train::prepare_data(ds, window_config(settings.model));
    const auto result = train::ablation_suite(prepared, *pool, settings.model, settings.optim, seeds);
    write_output(manifest, fs::path(o.out) / "ablation.csv", train::ablation_csv(result));
    write_output(manifest, fs::path(o.out) / "ablation.md", train::ablation_markdown(result));
    out << train::ablation_markdown(result);
    if (!result.errors.empty()) {
        for (const auto& e : result.errors) spdlog::error("{}", e);
        throw TrainingDiverged(fmt::format("{} ablation run(s) failed; partial table written", result.errors.size()));
    }
    return 0;
}

int cmd_usecase(const Options& o, Manifest& manifest, std::ostream& out) {
    std::optional<pool::GlobalPool> pool;
    const auto loaded = load_model(o, manifest, pool);
    const auto ds = load_data(o, manifest);
    usecase::BillingSpec billing;
    if (!o.config.empty()) {
        manifest.input(o.config);
        billing = usecase::BillingSpec::from_json(read_json(o.config));
    }
    manifest.config({{"billing", billing.to_json()}, {"split", o.split}});
    manifest.seed(loaded.meta.seed);
    const auto prepared = train::prepare_data(ds, window_config(loaded.meta.config));
    const auto& samples = pick_split(prepared, o.split);
    const auto predictions = train::predict(loaded.model, samples, pool ? &*pool : nullptr);
    const auto tiled = usecase::tile_predictions(ds, samples, predictions);
    const auto label = usecase::depreciation_rates(tiled.label, tiled.span, billing);
    const auto predicted = usecase::depreciation_rates(tiled.predicted, tiled.span, billing);
    const auto comparison = usecase::rank_and_count(usecase::rate_map(label), usecase::rate_map(predicted));
    write_output(manifest, fs::path(o.out) / "usecase.csv", usecase::report_csv(comparison));
    out << fmt::format("correct ranks: {} of {}\n", comparison.correct_count, comparison.apps.size());
    return 0;
}

int cmd_export_report(const Options& o, Manifest& manifest, std::ostream& out) {
    std::optional<pool::GlobalPool> pool;
    const auto loaded = load_model(o, manifest, pool);
    const auto ds = load_data(o, manifest);
    manifest.config({{"split", o.split}, {"raw_scale", o.raw_scale}});
    manifest.seed(loaded.meta.seed);
    const auto& cfg = loaded.meta.config;
    const auto prepared = train::prepare_data(ds, window_config(cfg));
    const auto& samples = pick_split(prepared, o.split);
    const auto predictions = train::predict(loaded.model, samples, pool ? &*pool : nullptr);

    std::string pred_csv = "series_id,window_start,timestamp,tag,y,y_hat\n";
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        const auto lead = static_cast<data::Timestamp>(cfg.input_length) * s.interval_seconds;
        for (std::size_t t = 0; t < s.target.size(); ++t) {
            double y = s.target[t];
            double y_hat = predictions(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t));
            if (o.raw_scale) {
                y = s.normalizer.invert(y);
                y_hat = s.normalizer.invert(y_hat);
            }
            pred_csv += fmt::format("{},{},{},{},{},{}\n", s.series_id, data::format_iso8601(s.window_start),
                                    data::format_iso8601(s.window_start + lead + static_cast<data::Timestamp>(t) * s.interval_seconds),
                                    data::to_string(s.behavior_tag), data::format_real(y), data::format_real(y_hat));
        }
    }
    write_output(manifest, fs::path(o.out) / "predictions.csv", pred_csv);

    if (cfg.use_gp) {
        std::string w_csv = "series_id,window_start,tag,block";
        for (int p = 0; p < pool->size(); ++p) w_csv += fmt::format(",w_{}", p);
        w_csv += "\n";
        std::vector<std::size_t> idx;
        for (std::size_t begin = 0; begin < samples.size(); begin += 256) {
            const std::size_t end = std::min(samples.size(), begin + 256);
            idx.clear();
            for (std::size_t i = begin; i < end; ++i) idx.push_back(i);
            const auto batch = model::make_batch<float>(samples, idx, cfg);
            const auto trace = loaded.model.forward(batch, &*pool, nullptr, true).trace;
            for (std::size_t k = 0; k < idx.size(); ++k) {
                const auto& s = samples[idx[k]];
                for (std::size_t blk = 0; blk < trace.merge_weights.size(); ++blk) {
                    w_csv += fmt::format("{},{},{},{}", s.series_id, data::format_iso8601(s.window_start),
                                         data::to_string(s.behavior_tag), blk);
                    const auto& w = trace.merge_weights[blk];
                    for (Eigen::Index p = 0; p < w.cols(); ++p) {
                        w_csv += "," + data::format_real(static_cast<double>(w(static_cast<Eigen::Index>(k), p)));
                    }
                    w_csv += "\n";
                }
            }
        }
        write_output(manifest, fs::path(o.out) / "merge_weights.csv", w_csv);
    }
    out << fmt::format("exported {} windows\n", samples.size());
    return 0;
}

int cmd_rerun(const Options& o, std::ostream& out, std::ostream& err) {
    const auto m = read_json(o.manifest);
    std::vector<std::string> args;
    try {
        args = m.at("argv").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw ConfigError(fmt::format("{}: {}", o.manifest, e.what()));
    }
    if (!args.empty() && args.front() == "rerun") throw ConfigError("a rerun manifest cannot point at another rerun");
    const int code = run(args, out, err);
    if (code != 0) return code;
    std::size_t mismatched = 0;
    for (const auto& [path, hash] : m.at("outputs").items()) {
        if (!fs::exists(path) || sha256_file(path) != hash.get<std::string>()) {
            err << "output differs from the manifest: " << path << "\n";
            ++mismatched;
        }
    }
    if (mismatched > 0) throw DataError(fmt::format("{} output(s) differ from the manifest", mismatched));
    out << "all outputs match the manifest\n";
    return 0;
}

void setup_logging() {
    if (!spdlog::get("dyneformer")) {
        auto logger = spdlog::stderr_color_mt("dyneformer");
        logger->set_pattern("[%l] %v");
        spdlog::set_default_logger(logger);
    }
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    setup_logging();
    Options o;
    CLI::App app{"Workload forecasting with global-pool transformers", "dyneformer"};
    app.require_subcommand(1);

    auto add_out = [&](CLI::App* sub) { sub->add_option("--out", o.out, "Output directory")->required(); };
    auto add_data = [&](CLI::App* sub) { sub->add_option("--data", o.data, "Dataset directory")->required(); };
    auto add_config = [&](CLI::App* sub) { sub->add_option("--config", o.config, "JSON config file"); };
    auto add_seed = [&](CLI::App* sub) { sub->add_option("--seed", o.seed, "Random seed"); };
    auto add_split = [&](CLI::App* sub) {
        sub->add_option("--split", o.split, "Windows to use: train, val or test")->capture_default_str();
    };
    auto add_model_flags = [&](CLI::App* sub) {
        sub->add_option("--padding", o.padding, "Decoder padding: sync or zero");
        sub->add_flag("--no-gp", o.no_gp, "Disable the global-pool layer (implies zero padding)");
        sub->add_flag("--no-sa", o.no_sa, "Disable the static-context layer");
        sub->add_flag("--use-gp", o.use_gp, "Use the global-pool layer (default)");
    };

    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
    add_config(gen);
    add_seed(gen);
    add_out(gen);

    auto* dec = app.add_subcommand("decompose", "STL-decompose every series");
    add_data(dec);
    add_config(dec);
    add_out(dec);

    auto* bp = app.add_subcommand("build-pool", "Cluster seasonal windows and write the global pool");
    add_data(bp);
    add_config(bp);
    add_seed(bp);
    add_out(bp);

    auto* tr = app.add_subcommand("train", "Train a model");
    add_data(tr);
    add_config(tr);
    add_seed(tr);
    tr->add_option("--pool", o.pool, "Global pool JSON");
    add_model_flags(tr);
    add_out(tr);

    auto* ev = app.add_subcommand("eval", "Per-tag evaluation against the seasonal-naive baseline");
    add_data(ev);
    ev->add_option("--checkpoint", o.checkpoint, "Checkpoint blob")->required();
    ev->add_option("--pool", o.pool, "Global pool JSON");
    ev->add_option("--tag", o.tag, "Only windows with this behavior tag");
    ev->add_flag("--raw-scale", o.raw_scale, "Report metrics on the raw workload scale");
    add_split(ev);
    add_out(ev);

    auto* ab = app.add_subcommand("ablate", "Train and score the ablation variants");
    add_data(ab);
    add_config(ab);
    add_seed(ab);
    ab->add_option("--pool", o.pool, "Global pool JSON");
    ab->add_option("--repeats", o.repeats, "Seeds per variant (seed, seed+1, ...)")->capture_default_str();
    add_out(ab);

    auto* uc = app.add_subcommand("usecase", "Depreciation-rate ranking from predictions");
    add_data(uc);
    add_config(uc);
    uc->add_option("--checkpoint", o.checkpoint, "Checkpoint blob")->required();
    uc->add_option("--pool", o.pool, "Global pool JSON");
    add_split(uc);
    add_out(uc);

    auto* ex = app.add_subcommand("export-report", "Prediction and merge-weight CSVs for plotting");
    add_data(ex);
    ex->add_option("--checkpoint", o.checkpoint, "Checkpoint blob")->required();
    ex->add_option("--pool", o.pool, "Global pool JSON");
    ex->add_flag("--raw-scale", o.raw_scale, "Export raw-scale values");
    add_split(ex);
    add_out(ex);

    auto* rr = app.add_subcommand("rerun", "Re-execute a command from its manifest and compare outputs");
    rr->add_option("--manifest", o.manifest, "Manifest JSON")->required();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return 2;
    }

    try {
        if (rr->parsed()) return cmd_rerun(o, out, err);
        CLI::App* sub = app.get_subcommands().front();
        Manifest manifest(sub->get_name(), args);
        if (o.seed) manifest.seed(*o.seed);
        fs::create_directories(o.out);
        int code = 0;
        if (sub == gen) code = cmd_gen_data(o, manifest, out);
        else if (sub == dec) code = cmd_decompose(o, manifest, out);
        else if (sub == bp) code = cmd_build_pool(o, manifest, out);
        else if (sub == tr) code = cmd_train(o, manifest, out);
        else if (sub == ev) code = cmd_eval(o, manifest, out);
        else if (sub == ab) code = cmd_ablate(o, manifest, out);
        else if (sub == uc) code = cmd_usecase(o, manifest, out);
        else if (sub == ex) code = cmd_export_report(o, manifest, out);
        if (code == 0) manifest.write(o.out);
        return code;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

int run(int argc, const char* const* argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args, std::cout, std::cerr);
}

} // namespace dyneformer::cli
