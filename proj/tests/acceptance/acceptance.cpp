// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
// `--only 3,5` restricts the run to the listed criteria.

#include "dyneformer/cli/cli.hpp"
#include "dyneformer/data/generator.hpp"
#include "dyneformer/decomp/stl.hpp"
#include "dyneformer/hashing.hpp"
#include "dyneformer/model/dyneformer.hpp"
#include "dyneformer/pool/global_pool.hpp"
#include "dyneformer/train/ablation.hpp"
#include "dyneformer/train/gradient_check.hpp"
#include "dyneformer/train/trainer.hpp"
#include "dyneformer/usecase/depreciation.hpp"
#include "oracles.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

using namespace dyneformer;
namespace fs = std::filesystem;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

std::string join(const std::vector<double>& v, const char* format = "{:.4f}") {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += " ";
        out += fmt::format(fmt::runtime(format), v[i]);
    }
    return out;
}

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i] / n;
        mb += b[i] / n;
    }
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

data::GeneratorConfig clustered_generator(int archetypes, std::uint64_t seed) {
    data::GeneratorConfig g;
    g.apps = archetypes;
    g.new_apps = 0;
    g.devices = 30;
    g.switch_fraction = 0.0;
    g.new_device_fraction = 0.0;
    g.new_app_fraction = 0.0;
    g.seed = 100 + seed;
    return g;
}

struct ClusterData {
    pool::RowMatrix windows;
    std::vector<int> truth;
};

ClusterData cluster_data(int archetypes, std::uint64_t seed) {
    const auto ds = data::generate_synthetic_dataset(clustered_generator(archetypes, seed));
    const auto split = data::chronological_split(ds);
    const auto prep = data::fit_preprocessing(split, {});
    const auto windows = pool::extract_seasonal_windows(split.train, prep);
    ClusterData out{pool::stack_windows(windows), {}};
    for (const auto& w : windows) out.truth.push_back(ds.metadata["series"][w.series_id]["archetype"].get<int>());
    return out;
}

// ---------------------------------------------------------------------------

Verdict criterion_stl() {
    data::GeneratorConfig g;
    g.devices = 100;
    g.days = 10;
    g.seed = 1;
    const auto ds = data::generate_synthetic_dataset(g);
    double worst = 0.0;
    for (const auto& s : ds.series) {
        const auto r = decomp::stl_decompose(s.values);
        for (std::size_t i = 0; i < s.size(); ++i) {
            worst = std::max(worst, std::abs(r.seasonal[i] + r.trend[i] + r.residual[i] - s.values[i]));
        }
    }
    std::vector<double> sine(240);
    for (std::size_t i = 0; i < sine.size(); ++i) sine[i] = std::sin(2.0 * std::numbers::pi * static_cast<double>(i) / 24.0);
    const double corr = correlation(decomp::stl_decompose(sine).seasonal, sine);
    return {worst <= 1e-9 && corr > 0.99,
            fmt::format("{} series, max reconstruction error {:.2e}, sine corr {:.5f}", ds.series.size(), worst, corr)};
}

Verdict criterion_clustering() {
    std::vector<double> ari;
    std::size_t n = 0;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto c = cluster_data(3, seed);
        n = static_cast<std::size_t>(c.windows.rows());
        pool::VadeHyper h;
        h.seed = seed;
        const auto model = pool::train_vade(c.windows, 3, h);
        ari.push_back(pool::adjusted_rand_index(pool::assign_clusters(model, c.windows).labels, c.truth));
    }
    const double m = median(ari);
    return {m >= 0.8 && n >= 300, fmt::format("{} windows, ARI per seed {}, median {:.4f}", n, join(ari), m)};
}

Verdict criterion_pool_size() {
    std::vector<double> chosen;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto c = cluster_data(4, seed);
        pool::VadeHyper h;
        h.seed = seed;
        chosen.push_back(pool::select_pool_size(c.windows, {2, 3, 4, 5, 6, 7, 8}, h).chosen);
    }
    const double m = median(chosen);
    return {std::abs(m - 4.0) <= 1.0, fmt::format("chosen P per seed {}, median {}", join(chosen, "{:.0f}"), m)};
}

Verdict criterion_simplex() {
    model::ModelConfig c;
    c.pool_size = 5;
    std::mt19937_64 rng(4);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> magnitude(0.1, 10.0);
    std::uniform_int_distribution<int> hour(0, 23);

    pool::GlobalPool gp;
    gp.pools = pool::RowMatrix(5, c.input_length);
    gp.member_counts.assign(5, 1);

    const int passes = 10000;
    const int per_model = 500;
    double worst_sum = 0.0, min_entry = 1.0;
    std::size_t rows = 0;
    std::unique_ptr<model::DyneformerModel<float>> net;
    for (int pass = 0; pass < passes; ++pass) {
        if (pass % per_model == 0) {
            net = std::make_unique<model::DyneformerModel<float>>(c, static_cast<std::uint64_t>(pass));
            for (Eigen::Index i = 0; i < gp.pools.size(); ++i) gp.pools.data()[i] = normal(rng);
        }
        const double scale = magnitude(rng);
        model::Batch<float> b;
        b.size = 1;
        b.encoder = nn::Matrix<float>(c.input_length, c.d_t);
        b.decoder_known = nn::Matrix<float>::Zero(c.decoder_length(), c.d_t);
        b.statics = nn::Matrix<float>(1, c.d_s);
        b.target = nn::Matrix<float>::Zero(c.horizon, 1);
        for (Eigen::Index i = 0; i < b.encoder.size(); ++i) b.encoder.data()[i] = static_cast<float>(scale * normal(rng));
        for (Eigen::Index i = 0; i < b.decoder_known.rows(); ++i) {
            for (Eigen::Index j = i < c.token_length ? 0 : 1; j < c.d_t; ++j) {
                b.decoder_known(i, j) = static_cast<float>(scale * normal(rng));
            }
        }
        for (Eigen::Index i = 0; i < b.statics.size(); ++i) b.statics.data()[i] = static_cast<float>(scale * normal(rng));
        b.start_hours = {hour(rng)};
        const auto out = net->forward(b, &gp, nullptr, true);
        for (const auto& w : out.trace.merge_weights) {
            for (Eigen::Index r = 0; r < w.rows(); ++r) {
                worst_sum = std::max(worst_sum, std::abs(static_cast<double>(w.row(r).sum()) - 1.0));
                min_entry = std::min(min_entry, static_cast<double>(w.row(r).minCoeff()));
                ++rows;
            }
        }
    }
    return {worst_sum <= 1e-5 && min_entry >= 0.0,
            fmt::format("{} passes, {} weight rows over {} blocks, max |row sum - 1| {:.2e}, min entry {:.2e}", passes,
                        rows, c.n_gp_blocks, worst_sum, min_entry)};
}

Verdict criterion_gradients() {
    std::vector<std::string> parts;
    bool ok = true;
    const std::pair<const char*, train::GradCheckKind> kinds[] = {
        {"sa", train::GradCheckKind::sa}, {"gp", train::GradCheckKind::gp}, {"full", train::GradCheckKind::full}};
    for (const auto& [name, kind] : kinds) {
        double worst = 0.0;
        for (std::uint64_t seed : {0u, 1u, 2u}) {
            worst = std::max(worst, train::gradient_check(kind, {}, 1e-5, seed).max_relative_error);
        }
        ok = ok && worst <= 1e-4;
        parts.push_back(fmt::format("{} {:.2e}", name, worst));
    }
    std::string detail = "max relative error (3 seeds each):";
    for (const auto& p : parts) detail += " " + p;
    return {ok, detail};
}

// Shared state of criteria 6 to 8: one dataset, one pool, nine trained models.
struct ForecastRuns {
    train::PreparedData data;
    fs::path pool_path;
    pool::GlobalPool pool;
    std::map<std::string, std::vector<train::TrainResult>> models; // variant -> per seed
    std::vector<std::uint64_t> seeds{1, 2, 3};
};

train::OptimConfig desk_optim(std::uint64_t seed) {
    train::OptimConfig o;
    o.learning_rate = 1e-3;
    o.batch_size = 64;
    o.max_epochs = 20;
    o.patience = 5;
    o.samples_per_epoch = 2048;
    o.seed = seed;
    return o;
}

ForecastRuns& forecast_runs(const fs::path& scratch, const std::set<std::string>& variants) {
    static std::unique_ptr<ForecastRuns> runs;
    if (!runs) {
        runs = std::make_unique<ForecastRuns>();
        data::GeneratorConfig g;
        runs->data = train::prepare_data(data::generate_synthetic_dataset(g));
        pool::PoolBuildConfig pc;
        pc.vade.seed = 1;
        auto built = pool::build_pool(runs->data.split.train, runs->data.prep, pc,
                                      train::pool_provenance(runs->data.split.train));
        runs->pool_path = scratch / "pool.json";
        pool::save_pool(built.pool, runs->pool_path);
        runs->pool = pool::load_pool(runs->pool_path);
        spdlog::info("pool: P = {} chosen by BIC", runs->pool.size());
    }
    model::ModelConfig base;
    base.d_s = static_cast<int>(runs->data.split.train.static_dim());
    base.pool_size = runs->pool.size();
    for (const auto& [name, config] : train::ablation_variants(base)) {
        if (!variants.count(name) || runs->models.count(name)) continue;
        for (auto seed : runs->seeds) {
            const auto t0 = std::chrono::steady_clock::now();
            runs->models[name].push_back(
                train::train_model(config, runs->data, config.use_gp ? &runs->pool : nullptr, desk_optim(seed)));
            spdlog::info("trained {} seed {} in {:.0f} s", name, seed,
                         std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
        }
    }
    return *runs;
}

Verdict criterion_forecast(const fs::path& scratch) {
    auto& runs = forecast_runs(scratch, {"full"});
    const double naive = train::seasonal_naive_baseline(runs.data.val).overall.mse;
    std::vector<double> val;
    for (const auto& r : runs.models.at("full")) val.push_back(train::mean_squared_error(r.model, runs.data.val, &runs.pool));
    const double m = median(val);
    const double reduction = 1.0 - m / naive;
    return {reduction >= 0.25, fmt::format("validation MSE per seed {}, median {:.4f} vs seasonal naive {:.4f} ({:.1f}% lower)",
                                           join(val), m, naive, 100.0 * reduction)};
}

Verdict criterion_ablation(const fs::path& scratch) {
    auto& runs = forecast_runs(scratch, {"full", "-GP", "0Padding"});
    std::map<std::string, std::vector<double>> mae;
    for (const auto& [name, results] : runs.models) {
        const model::ModelConfig& config = results.front().model.config();
        for (const auto& r : results) {
            const auto report = train::evaluate(r.model, runs.data.test, config.use_gp ? &runs.pool : nullptr,
                                                data::BehaviorTag::app_switch);
            mae[name].push_back(report.overall.mae);
        }
    }
    const double full = median(mae["full"]), zero = median(mae["0Padding"]), no_gp = median(mae["-GP"]);
    const double naive =
        train::seasonal_naive_baseline(runs.data.test, data::BehaviorTag::app_switch).overall.mae;
    return {full <= zero && full <= no_gp,
            fmt::format("app_switch median MAE full {:.4f} [{}], 0Padding {:.4f} [{}], -GP {:.4f} [{}] "
                        "(seasonal naive {:.4f})",
                        full, join(mae["full"]), zero, join(mae["0Padding"]), no_gp, join(mae["-GP"]), naive)};
}

Verdict criterion_padding(const fs::path& scratch) {
    auto& runs = forecast_runs(scratch, {"full"});
    const auto net = runs.models.at("full").front().model.cast<double>();
    const auto file_pool = pool::load_pool(runs.pool_path);
    const auto& cfg = net.config();
    std::vector<std::size_t> idx;
    const std::size_t n = std::min<std::size_t>(1000, runs.data.test.size());
    for (std::size_t k = 0; k < n; ++k) idx.push_back(k * runs.data.test.size() / n);

    double worst = 0.0;
    for (std::size_t begin = 0; begin < idx.size(); begin += 100) {
        const std::span<const std::size_t> chunk(idx.data() + begin, std::min<std::size_t>(100, idx.size() - begin));
        const auto batch = model::make_batch<double>(runs.data.test, chunk, cfg);
        const auto out = net.forward(batch, &file_pool, nullptr, true);
        const auto& w = out.trace.merge_weights.back();
        for (std::size_t b = 0; b < chunk.size(); ++b) {
            const auto& sample = runs.data.test[chunk[b]];
            const Eigen::RowVectorXd series = w.row(static_cast<Eigen::Index>(b)) * file_pool.aligned(sample.start_hour());
            for (int j = 0; j < cfg.horizon; ++j) {
                const double internal = out.trace.decoder_input(
                    static_cast<Eigen::Index>(b) * cfg.decoder_length() + cfg.token_length + j, 0);
                worst = std::max(worst, std::abs(internal - series(cfg.input_length - cfg.horizon + j)));
            }
        }
    }
    return {worst <= 1e-9 && n == 1000, fmt::format("{} test samples, max |difference| {:.2e}", n, worst)};
}

Verdict criterion_usecase() {
    data::GeneratorConfig g;
    const auto ds = data::generate_synthetic_dataset(g);
    const auto test_start = ds.metadata.at("test_start").get<data::Timestamp>();
    const data::TimeSpan span{test_start, test_start + 6 * 86400};
    const auto devices = usecase::device_usage(ds, span);
    const auto rates = usecase::rate_map(usecase::depreciation_rates(devices, span));
    const auto oracle = testing::brute_force_rates(devices, span);
    double worst = rates.size() == oracle.size() ? 0.0 : 1.0;
    for (const auto& [app, r] : oracle) worst = std::max(worst, std::abs(rates.at(app) - r));

    const auto labels = testing::app_rates({0.075, 0.068, 0.033, 0.011, 0.002});
    const int own = usecase::rank_and_count(labels, labels).correct_count;
    const int baseline =
        usecase::rank_and_count(labels, testing::app_rates({0.024, 0.059, 0.041, 0.013, 0.001})).correct_count;
    return {worst <= 1e-12 && own == 5 && baseline == 2,
            fmt::format("{} apps, max |rate - oracle| {:.2e}; counts: labels {}, baseline column {}", rates.size(),
                        worst, own, baseline)};
}

int cli_call(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    if (code != 0) spdlog::error("cli {} failed: {}", args.front(), err.str());
    return code;
}

Verdict criterion_reproducibility(const fs::path& scratch) {
    const auto configs = scratch / "configs";
    fs::create_directories(configs);
    std::ofstream(configs / "gen.json") << R"({"devices": 12, "days": 20, "seed": 5})";
    std::ofstream(configs / "pool.json")
        << R"({"candidates": [2, 3, 4], "vade": {"hidden1": 64, "hidden2": 32, "pretrain_epochs": 10, "finetune_epochs": 3}})";
    std::ofstream(configs / "train.json")
        << R"({"model": {"d_model": 16, "n_heads": 2, "feedforward_dim": 32},
              "optim": {"max_epochs": 2, "samples_per_epoch": 256, "batch_size": 32, "learning_rate": 0.001}})";

    auto pipeline = [&](const fs::path& root) {
        const auto data = root / "data", pool = root / "pool", run = root / "train", eval = root / "eval";
        const std::vector<std::vector<std::string>> steps{
            {"gen-data", "--config", (configs / "gen.json").string(), "--out", data.string()},
            {"build-pool", "--data", data.string(), "--config", (configs / "pool.json").string(), "--seed", "2",
             "--out", pool.string()},
            {"train", "--data", data.string(), "--config", (configs / "train.json").string(), "--pool",
             (pool / "pool.json").string(), "--seed", "3", "--out", run.string()},
            {"eval", "--data", data.string(), "--checkpoint", (run / "checkpoint.bin").string(), "--pool",
             (pool / "pool.json").string(), "--out", eval.string()}};
        for (const auto& s : steps) {
            if (cli_call(s) != 0) return false;
        }
        return true;
    };

    const auto a = scratch / "run_a", b = scratch / "run_b";
    fs::remove_all(a);
    fs::remove_all(b);
    if (!pipeline(a) || !pipeline(b)) return {false, "a pipeline command failed"};

    std::size_t csv_files = 0, identical = 0;
    for (const auto& e : fs::recursive_directory_iterator(a)) {
        if (!e.is_regular_file() || e.path().extension() != ".csv") continue;
        ++csv_files;
        const auto twin = b / fs::relative(e.path(), a);
        if (fs::exists(twin) && read_file(e.path()) == read_file(twin)) ++identical;
    }

    std::size_t manifests = 0, replayed = 0;
    for (const auto& root : {a, b}) {
        for (const auto& e : fs::recursive_directory_iterator(root)) {
            const auto name = e.path().filename().string();
            if (!e.is_regular_file() || name.size() < 14 || name.substr(name.size() - 14) != ".manifest.json") continue;
            ++manifests;
            if (cli_call({"rerun", "--manifest", e.path().string()}) == 0) ++replayed;
        }
    }
    return {csv_files > 0 && identical == csv_files && manifests == 8 && replayed == manifests,
            fmt::format("{}/{} CSV files identical across two pipeline runs; {}/{} manifests re-run to identical outputs",
                        identical, csv_files, replayed, manifests)};
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance criteria"};
    std::vector<int> only;
    std::string scratch_arg;
    app.add_option("--only", only, "Criteria to run")->delimiter(',');
    app.add_option("--scratch", scratch_arg, "Working directory for generated files");
    CLI11_PARSE(app, argc, argv);

    const fs::path scratch =
        scratch_arg.empty() ? fs::temp_directory_path() / "dyneformer_acceptance" : fs::path(scratch_arg);
    fs::remove_all(scratch);
    fs::create_directories(scratch);
    spdlog::set_level(spdlog::level::info);

    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
        {"STL additive identity and sine recovery", criterion_stl},
        {"VaDE clustering fidelity (ARI >= 0.8, median of 3 seeds)", criterion_clustering},
        {"BIC pool-size selection returns 4 +- 1", criterion_pool_size},
        {"merge weights on the simplex", criterion_simplex},
        {"finite-difference gradient checks <= 1e-4", criterion_gradients},
        {"validation MSE >= 25% below seasonal naive", [&] { return criterion_forecast(scratch); }},
        {"app_switch MAE ordering full <= 0Padding, full <= -GP", [&] { return criterion_ablation(scratch); }},
        {"synchronous padding recomputed from trace and pool file", [&] { return criterion_padding(scratch); }},
        {"depreciation oracle and rank counts", criterion_usecase},
        {"bit-identical reruns of the CLI pipeline", [&] { return criterion_reproducibility(scratch); }},
    };

    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        failed += v.pass ? 0 : 1;
        std::cout << fmt::format("criterion {:2d} {}: {} ({}; {:.1f} s)", id, v.pass ? "PASS" : "FAIL",
                                 criteria[i].first, v.detail, seconds)
                  << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
