#include "dyneformer/data/generator.hpp"
#include "dyneformer/errors.hpp"
#include "dyneformer/hashing.hpp"
#include "dyneformer/train/ablation.hpp"
#include "dyneformer/train/checkpoint.hpp"
#include "dyneformer/train/gradient_check.hpp"
#include "dyneformer/train/metrics.hpp"
#include "dyneformer/train/trainer.hpp"
#include "helpers.hpp"
#include "model_fixtures.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>

using namespace dyneformer;
using namespace dyneformer::train;
using data::BehaviorTag;
using dyneformer::testing::random_pool;
using dyneformer::testing::random_samples;
using dyneformer::testing::tiny_config;

namespace {

std::vector<data::WindowSample> tagged_samples(std::size_t n, std::mt19937_64& rng) {
    auto c = tiny_config();
    c.input_length = 48;
    c.horizon = 24;
    c.token_length = 12;
    auto s = random_samples(c, n, rng);
    std::uniform_real_distribution<double> mu(-5.0, 5.0), sd(0.5, 3.0);
    for (std::size_t i = 0; i < s.size(); ++i) {
        s[i].behavior_tag = data::kAllTags[i % 4];
        s[i].normalizer = {mu(rng), sd(rng)};
    }
    return s;
}

RowMatrix random_predictions(std::size_t n, std::size_t l, std::mt19937_64& rng) {
    std::normal_distribution<double> d(0.0, 1.0);
    RowMatrix p(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(l));
    for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = d(rng);
    return p;
}

OptimConfig quick_optim(std::uint64_t seed = 0) {
    OptimConfig o;
    o.learning_rate = 3e-3;
    o.batch_size = 8;
    o.max_epochs = 4;
    o.patience = 10;
    o.seed = seed;
    return o;
}

} // namespace

TEST_SUITE("train-eval") {

TEST_CASE("metrics on hand values") {
    const std::vector<double> y{0, 2}, yh{1, 1};
    const auto m = metrics(y, yh);
    CHECK(m.mse == 1.0);
    CHECK(m.mae == 1.0);
    const auto z = metrics(y, y);
    CHECK(z.mse == 0.0);
    CHECK(z.mae == 0.0);
    CHECK_THROWS_AS(metrics(y, std::vector<double>{1.0}), DimensionError);
    CHECK_THROWS_AS(metrics(RowMatrix::Zero(2, 3), RowMatrix::Zero(3, 2)), DimensionError);
}

TEST_CASE("metrics match element-wise accumulation") {
    std::mt19937_64 rng(1);
    const auto y = testing::random_vector(1000, rng, -3, 3);
    const auto yh = testing::random_vector(1000, rng, -3, 3);
    double se = 0, ae = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        se += (y[i] - yh[i]) * (y[i] - yh[i]);
        ae += std::abs(y[i] - yh[i]);
    }
    const auto m = metrics(y, yh);
    CHECK(std::abs(m.mse - se / 1000.0) <= 1e-12);
    CHECK(std::abs(m.mae - ae / 1000.0) <= 1e-12);
}

TEST_CASE("overall metrics recombine the per-tag groups") {
    std::mt19937_64 rng(2);
    const auto samples = tagged_samples(37, rng);
    const auto preds = random_predictions(37, 24, rng);
    const auto r = score_predictions(samples, preds);
    REQUIRE(r.per_tag.size() == 4);
    double se = 0, ae = 0;
    std::size_t n = 0, ns = 0;
    for (const auto& [tag, g] : r.per_tag) {
        se += g.mse * static_cast<double>(g.n_values);
        ae += g.mae * static_cast<double>(g.n_values);
        n += g.n_values;
        ns += g.n_samples;
    }
    CHECK(ns == 37);
    CHECK(r.overall.n_samples == 37);
    CHECK(std::abs(r.overall.mse - se / static_cast<double>(n)) <= 1e-9);
    CHECK(std::abs(r.overall.mae - ae / static_cast<double>(n)) <= 1e-9);

    const auto only = score_predictions(samples, preds, BehaviorTag::new_app);
    CHECK(only.overall.mse == doctest::Approx(r.per_tag.at(BehaviorTag::new_app).mse).epsilon(1e-12));

    std::vector<data::WindowSample> steady_only;
    for (const auto& s : samples) {
        if (s.behavior_tag == BehaviorTag::steady) steady_only.push_back(s);
    }
    CHECK_THROWS_AS(score_predictions(steady_only, RowMatrix::Zero(static_cast<Eigen::Index>(steady_only.size()), 24),
                                      BehaviorTag::app_switch),
                    EmptySubset);
}

TEST_CASE("raw-scale metrics differ by the per-series scale factors") {
    std::mt19937_64 rng(3);
    auto samples = tagged_samples(6, rng);
    for (auto& s : samples) s.normalizer = {4.0, 2.5};
    const auto preds = random_predictions(6, 24, rng);
    const auto norm = score_predictions(samples, preds);
    const auto raw = score_predictions(samples, preds, std::nullopt, true);
    CHECK(raw.raw_scale);
    CHECK(raw.overall.mse == doctest::Approx(2.5 * 2.5 * norm.overall.mse).epsilon(1e-12));
    CHECK(raw.overall.mae == doctest::Approx(2.5 * norm.overall.mae).epsilon(1e-12));
}

TEST_CASE("seasonal naive equals a brute-force shift") {
    std::mt19937_64 rng(4);
    const auto samples = tagged_samples(20, rng);
    const auto p = seasonal_naive_predictions(samples);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& enc = samples[i].encoder_input;
        const int T = static_cast<int>(enc.rows());
        for (int j = 0; j < 24; ++j) {
            int src = T + j;
            while (src >= T) src -= 24;
            CHECK(p(static_cast<Eigen::Index>(i), j) == enc(src, 0));
        }
    }
    const auto report = seasonal_naive_baseline(samples);
    const auto direct = score_predictions(samples, p);
    CHECK(std::abs(report.overall.mse - direct.overall.mse) <= 1e-12);
}

TEST_CASE("seasonal naive is exact on periodic and constant series") {
    std::mt19937_64 rng(5);
    auto samples = tagged_samples(3, rng);
    for (std::size_t k = 0; k < samples.size(); ++k) {
        auto& s = samples[k];
        for (int i = 0; i < 48; ++i) s.encoder_input(i, 0) = k == 0 ? 1.5 : std::sin(i * 0.2618) + (i % 24) * 0.1;
        for (int j = 0; j < 24; ++j) s.target[j] = s.encoder_input(24 + j, 0);
    }
    CHECK(seasonal_naive_baseline(samples).overall.mse == 0.0);

    auto short_samples = samples;
    short_samples[0].encoder_input = RowMatrix::Zero(12, 3);
    CHECK_THROWS_AS(seasonal_naive_predictions(short_samples), InputTooShort);
}

TEST_CASE("optim config") {
    OptimConfig o;
    CHECK(o.learning_rate == 1e-4);
    CHECK(o.batch_size == 256);
    o.learning_rate = 0.0;
    CHECK_THROWS_AS(o.validate(), ConfigError);
    o = {};
    o.batch_size = 0;
    CHECK_THROWS_AS(o.validate(), ConfigError);
    CHECK_THROWS_AS(OptimConfig::from_json({{"lr", 1.0}}), ConfigError);
    const auto j = quick_optim(9).to_json();
    CHECK(OptimConfig::from_json(j).to_json() == j);
}

TEST_CASE("gradient checks at double precision") {
    CHECK(gradient_check(GradCheckKind::affine).max_relative_error <= 1e-6);
    const auto sa = gradient_check(GradCheckKind::sa);
    CHECK(sa.coordinates > 0);
    CHECK(sa.max_relative_error <= 1e-4);
    CHECK(gradient_check(GradCheckKind::gp).max_relative_error <= 1e-4);
    CHECK(gradient_check(GradCheckKind::full, {}, 1e-5, 1).max_relative_error <= 1e-4);
    CHECK(parse_grad_check_kind("gp") == GradCheckKind::gp);
    CHECK_THROWS_AS(parse_grad_check_kind("conv"), ConfigError);
}

TEST_CASE("a tiny model overfits one repeated batch") {
    std::mt19937_64 rng(6);
    auto c = tiny_config(3);
    const auto pool = random_pool(3, c.input_length, rng);
    const auto batch = random_samples(c, 4, rng);
    OptimConfig o;
    o.learning_rate = 3e-3;
    o.batch_size = 4;
    o.max_epochs = 1000;
    o.patience = 1000;
    const auto r = train_on_windows(c, batch, batch, &pool, o);
    CHECK(r.history.best_val_loss < 1e-3);
    CHECK(mean_squared_error(r.model, batch, &pool) < 1e-3);
}

TEST_CASE("training improves, keeps the best epoch and is deterministic") {
    std::mt19937_64 rng(7);
    auto c = tiny_config(3);
    c.dropout = 0.1;
    const auto pool = random_pool(3, c.input_length, rng);
    auto train = random_samples(c, 48, rng);
    for (auto& s : train) {
        for (int j = 0; j < c.horizon; ++j) s.target[j] = s.encoder_input(c.input_length - c.horizon + j, 0);
    }
    const auto val = train;
    const auto a = train_on_windows(c, train, val, &pool, quick_optim(3));
    const auto b = train_on_windows(c, train, val, &pool, quick_optim(3));
    REQUIRE(a.history.epochs.size() == 4);
    CHECK(a.history.best_val_loss <= a.history.initial_val_loss);
    CHECK(a.history.epochs.back().train_loss < a.history.initial_train_loss);
    CHECK(a.history.to_json() == b.history.to_json());
    CHECK(predict(a.model, val, &pool) == predict(b.model, val, &pool));
    CHECK(mean_squared_error(a.model, val, &pool) == doctest::Approx(a.history.best_val_loss).epsilon(1e-9));
    const auto h = TrainHistory::from_json(a.history.to_json());
    CHECK(h.to_json() == a.history.to_json());
}

TEST_CASE("evaluation is repeatable") {
    std::mt19937_64 rng(8);
    const auto c = tiny_config(3);
    const auto pool = random_pool(3, c.input_length, rng);
    auto samples = random_samples(c, 9, rng);
    for (std::size_t i = 0; i < samples.size(); ++i) samples[i].behavior_tag = data::kAllTags[i % 4];
    const model::DyneformerModel<float> m(c, 1);
    const auto r1 = evaluate(m, samples, &pool);
    const auto r2 = evaluate(m, samples, &pool);
    CHECK(r1.to_json() == r2.to_json());
    CHECK(r1.per_tag.size() == 4);
}

TEST_CASE("checkpoints round-trip and check the pool hash") {
    std::mt19937_64 rng(9);
    const auto c = tiny_config(3);
    const auto pool = random_pool(3, c.input_length, rng);
    const auto samples = random_samples(c, 5, rng);
    const auto trained = train_on_windows(c, samples, samples, &pool, quick_optim());
    const auto dir = testing::scratch_dir("ckpt");
    pool::save_pool(pool, dir / "pool.json");
    const auto pool_hash = sha256_file(dir / "pool.json");

    CheckpointMeta meta;
    meta.config = c;
    meta.optim = quick_optim();
    meta.pool_sha256 = pool_hash;
    meta.history = trained.history;
    save_checkpoint(dir / "model.bin", trained.model, meta);
    CHECK(std::filesystem::exists(sidecar_path(dir / "model.bin")));

    const auto loaded = load_checkpoint(dir / "model.bin", pool_hash);
    CHECK(predict(loaded.model, samples, &pool) == predict(trained.model, samples, &pool));
    CHECK(loaded.meta.history.to_json() == trained.history.to_json());
    CHECK(loaded.meta.config.to_json() == c.to_json());

    CHECK_THROWS_AS(load_checkpoint(dir / "model.bin", std::string(64, '0')), ProvenanceError);
    CHECK_THROWS_AS(load_checkpoint(dir / "model.bin", std::nullopt), ProvenanceError);

    auto bytes = read_file(dir / "model.bin");
    bytes[bytes.size() / 2] ^= 0x5a;
    write_file(dir / "broken.bin", bytes);
    std::filesystem::copy_file(sidecar_path(dir / "model.bin"), sidecar_path(dir / "broken.bin"));
    CHECK_THROWS_AS(load_checkpoint(dir / "broken.bin", pool_hash), DataError);
}

TEST_CASE("pool provenance must match the training split") {
    pool::GlobalPool p;
    p.provenance = {{"training_data_hash", "aaa"}};
    CHECK_NOTHROW(check_pool_provenance(p, "aaa"));
    CHECK_THROWS_AS(check_pool_provenance(p, "bbb"), ProvenanceError);
    p.provenance = nlohmann::json::object();
    CHECK_THROWS_AS(check_pool_provenance(p, "aaa"), ProvenanceError);
}

TEST_CASE("train_model refuses a pool built from other data") {
    data::GeneratorConfig g;
    g.devices = 6;
    g.days = 20;
    const auto data = prepare_data(data::generate_synthetic_dataset(g));
    g.seed = 99;
    const auto other = prepare_data(data::generate_synthetic_dataset(g));
    std::mt19937_64 rng(10);
    auto pool = random_pool(3, 48, rng, 24);
    pool.provenance = pool_provenance(other.split.train);
    model::ModelConfig c;
    c.pool_size = 3;
    CHECK_THROWS_AS(train_model(c, data, &pool, quick_optim()), ProvenanceError);
}

TEST_CASE("ablation needs app_switch test windows") {
    std::mt19937_64 rng(11);
    PreparedData data;
    data.test = random_samples(tiny_config(), 4, rng);
    CHECK_THROWS_AS(ablation_suite(data, random_pool(3, 8, rng), tiny_config(), quick_optim(), {1, 2, 3}), DataError);
}

TEST_CASE("ablation variants") {
    const auto v = ablation_variants(tiny_config());
    REQUIRE(v.size() == 4);
    CHECK(v[0].first == "full");
    CHECK(v[1].first == "-GP");
    CHECK_FALSE(v[1].second.use_gp);
    CHECK(v[1].second.padding == model::PaddingMode::zero);
    CHECK(v[2].first == "-S");
    CHECK_FALSE(v[2].second.use_sa);
    CHECK(v[3].first == "0Padding");
    CHECK(v[3].second.use_gp);
    CHECK(v[3].second.padding == model::PaddingMode::zero);
}

TEST_CASE("ablation table layout") {
    AblationResult r;
    r.variants = {"full", "-GP", "-S", "0Padding"};
    r.seeds = {1, 2, 3};
    const std::map<std::string, double> base{{"full", 0.141}, {"-GP", 0.157}, {"-S", 0.150}, {"0Padding", 0.149}};
    for (std::uint64_t seed : r.seeds) {
        for (const auto& [variant, mae] : base) {
            for (const char* tag : {"all", "steady", "app_switch", "new_device", "new_app"}) {
                r.cells.push_back({variant, tag, seed, mae * mae, mae + 0.001 * static_cast<double>(seed) - 0.002, 10});
            }
        }
    }
    CHECK(r.median_mae("full", "all") == doctest::Approx(0.141));
    CHECK(std::isnan(r.median_mae("full", "unknown")));

    const auto md = ablation_markdown(r);
    std::vector<std::string> table;
    std::istringstream in(md);
    for (std::string line; std::getline(in, line);) {
        if (!line.empty() && line[0] == '|') table.push_back(line);
    }
    REQUIRE(table.size() == 2 + 4 + 1);
    for (const auto& line : table) CHECK(std::count(line.begin(), line.end(), '|') == 6);
    CHECK(table[0].find("full") != std::string::npos);
    CHECK(table[2].rfind("| all |", 0) == 0);
    CHECK(table[3].rfind("| app_switch |", 0) == 0);
    CHECK(table[6].rfind("| Promotion |", 0) == 0);
    CHECK(table[2].find("0.157(10%)") != std::string::npos);

    const auto csv = ablation_csv(r);
    CHECK(csv.rfind("model_variant,tag,seed,mse,mae\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == static_cast<long>(r.cells.size()) + 1);
}

}
