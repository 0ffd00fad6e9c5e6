#include "dyneformer/data/generator.hpp"
#include "dyneformer/errors.hpp"
#include "dyneformer/usecase/depreciation.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>

using namespace dyneformer;
using namespace dyneformer::usecase;
using dyneformer::testing::app_rates;
using dyneformer::testing::brute_force_rates;

namespace {

constexpr Timestamp kDay0 = 1659312000;

DeviceUsage device(const std::string& id, const std::string& app, std::vector<double> values) {
    DeviceUsage d;
    d.series_id = id;
    d.app_id = app;
    d.values = std::move(values);
    for (std::size_t i = 0; i < d.values.size(); ++i) d.timestamps.push_back(kDay0 + static_cast<Timestamp>(i) * 3600);
    return d;
}

data::TimeSpan span_of(std::size_t hours) { return {kDay0, kDay0 + static_cast<Timestamp>(hours) * 3600}; }

} // namespace

TEST_SUITE("usecase-analytics") {

TEST_CASE("a device billed with its app has zero depreciation") {
    const std::vector<DeviceUsage> devs{device("d0", "a", {1, 5, 2, 3}), device("d1", "b", {4, 1, 1, 0})};
    const auto rates = depreciation_rates(devs, span_of(4));
    REQUIRE(rates.size() == 2);
    for (const auto& r : rates) CHECK(r.rate == 0.0);
}

TEST_CASE("hand arithmetic") {
    // Device peaks 60 and 40 sum to 100; at the app peak (hour 1) the devices hold 30 + 20 = 50.
    const std::vector<DeviceUsage> devs{device("d0", "a", {60, 30, 0}), device("d1", "a", {0, 20, 40})};
    BillingSpec spec;
    spec.app = {SelectorKind::fixed_hour, 1};
    const auto rates = depreciation_rates(devs, span_of(3), spec);
    REQUIRE(rates.size() == 1);
    CHECK(rates[0].app_billed == 50.0);
    CHECK(rates[0].device_billed == 100.0);
    CHECK(rates[0].rate == 0.5);
    CHECK(rates[0].devices == 2);
}

TEST_CASE("peak billing matches an exhaustive-hour scan on the synthetic apps") {
    data::GeneratorConfig g;
    const auto ds = data::generate_synthetic_dataset(g);
    const Timestamp test_start = ds.metadata.at("test_start").get<Timestamp>();
    const data::TimeSpan span{test_start, test_start + 6 * 86400};
    const auto devices = device_usage(ds, span);
    const auto rates = rate_map(depreciation_rates(devices, span));
    const auto oracle = brute_force_rates(devices, span);
    CHECK(rates.size() >= 5);
    REQUIRE(rates.size() == oracle.size());
    for (const auto& [app, rate] : oracle) CHECK(std::abs(rates.at(app) - rate) <= 1e-12);
}

TEST_CASE("rates are scale invariant, at most 1, and not clamped below 0") {
    std::vector<DeviceUsage> devs{device("d0", "a", {3, 9, 1, 4}), device("d1", "a", {2, 1, 8, 5}),
                                  device("d2", "b", {7, 6, 5, 4})};
    const auto base = rate_map(depreciation_rates(devs, span_of(4)));
    for (auto& d : devs) {
        for (auto& v : d.values) v *= 3.7;
    }
    const auto scaled = rate_map(depreciation_rates(devs, span_of(4)));
    for (const auto& [app, r] : base) {
        CHECK(scaled.at(app) == doctest::Approx(r).epsilon(1e-12));
        CHECK(r <= 1.0);
    }
    CHECK(rank_descending(base) == rank_descending(scaled));

    BillingSpec spec;
    spec.device = {SelectorKind::fixed_hour, 0};
    const std::vector<DeviceUsage> neg{device("d0", "a", {1, 9})};
    const auto r = depreciation_rates(neg, span_of(2), spec);
    CHECK(r[0].rate == doctest::Approx(-8.0));
}

TEST_CASE("billing errors") {
    const std::vector<DeviceUsage> zeros{device("d0", "a", {0, 0, 0})};
    CHECK_THROWS_AS(depreciation_rates(zeros, span_of(3)), DegenerateBilling);

    BillingSpec spec;
    spec.app = {SelectorKind::fixed_hour, 5};
    const std::vector<DeviceUsage> devs{device("d0", "a", {1, 2, 3})};
    CHECK_THROWS_AS(depreciation_rates(devs, span_of(3), spec), CoverageError);

    // d1 has no point at the app peak.
    auto d1 = device("d1", "a", {1, 1, 1});
    d1.timestamps = {kDay0, kDay0 + 3600, kDay0 + 7200};
    auto d0 = device("d0", "a", {1, 2, 3, 50});
    d1.values = {1, 1, 1};
    CHECK_THROWS_AS(depreciation_rates({d0, d1}, span_of(4)), CoverageError);

    CHECK_THROWS_AS(BillingSpec::from_json({{"app", "midnight"}}), ConfigError);
    const auto parsed = BillingSpec::from_json({{"app", {{"kind", "fixed_hour"}, {"hour", 20}}}, {"device", "peak"}});
    CHECK(parsed.app.kind == SelectorKind::fixed_hour);
    CHECK(parsed.app.hour == 20);
    CHECK(parsed.device.kind == SelectorKind::peak);
}

TEST_CASE("selector picks the earliest peak and the first matching hour") {
    const std::vector<Timestamp> ts{kDay0, kDay0 + 3600, kDay0 + 7200, kDay0 + 86400 + 3600};
    const std::vector<double> v{1, 4, 4, 2};
    CHECK(BillingSelector{}.select(ts, v, {kDay0, kDay0 + 2 * 86400}) == kDay0 + 3600);
    CHECK(BillingSelector{SelectorKind::fixed_hour, 1}.select(ts, v, {kDay0 + 7200, kDay0 + 2 * 86400}) ==
          kDay0 + 86400 + 3600);
    CHECK_THROWS_AS(BillingSelector{}.select(ts, v, {0, 10}), CoverageError);
}

TEST_CASE("rank comparison on reference rate columns") {
    const auto labels = app_rates({0.075, 0.068, 0.033, 0.011, 0.002});
    CHECK(rank_and_count(labels, labels).correct_count == 5);
    CHECK(rank_and_count(labels, app_rates({0.024, 0.059, 0.041, 0.013, 0.001})).correct_count == 2);
    CHECK(rank_and_count(labels, app_rates({0.002, 0.011, 0.033, 0.068, 0.075})).correct_count == 1);
}

TEST_CASE("ranking ties and app-set checks") {
    const std::map<std::string, double> tied{{"b", 0.5}, {"a", 0.5}, {"c", 0.9}};
    const auto r = rank_descending(tied);
    CHECK(r.at("c") == 1);
    CHECK(r.at("a") == 2);
    CHECK(r.at("b") == 3);
    CHECK_THROWS_AS(rank_and_count(tied, {{"a", 1.0}}), KeyError);

    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> d(-1, 1);
    std::map<std::string, double> x;
    for (int i = 0; i < 30; ++i) x["app_" + std::to_string(i)] = d(rng);
    CHECK(rank_and_count(x, x).correct_count == 30);
}

TEST_CASE("report csv") {
    const auto labels = app_rates({0.075, 0.068, 0.033, 0.011, 0.002});
    const auto csv = report_csv(rank_and_count(labels, app_rates({0.024, 0.059, 0.041, 0.013, 0.001})));
    CHECK(csv.rfind("app_id,label_rate,label_rank,predicted_rate,predicted_rank\n", 0) == 0);
    CHECK(csv.find("correct_count,2") != std::string::npos);
}

TEST_CASE("app tracking and in-span switch exclusion") {
    data::GeneratorConfig g;
    const auto ds = data::generate_synthetic_dataset(g);
    const Timestamp test_start = ds.metadata.at("test_start").get<Timestamp>();
    const data::TimeSpan span{test_start, test_start + 6 * 86400};
    const auto devices = device_usage(ds, span);
    std::set<std::string> kept;
    for (const auto& d : devices) kept.insert(d.series_id);
    for (const auto& e : ds.events) {
        if (e.kind != data::EventKind::app_switch) continue;
        const auto& s = ds.at(e.series_id);
        const auto to = e.payload.substr(e.payload.find("to=") + 3);
        CHECK(app_at(ds, s, e.timestamp) == to);
        CHECK(app_at(ds, s, e.timestamp - 3600) == s.app_id);
        CHECK(kept.count(e.series_id) == (span.contains(e.timestamp) ? 0u : 1u));
    }
}

}
