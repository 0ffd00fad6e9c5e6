#include "dyneformer/decomp/loess.hpp"
#include "dyneformer/decomp/stl.hpp"
#include "dyneformer/errors.hpp"
#include "helpers.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

using namespace dyneformer;
using namespace dyneformer::decomp;

namespace {

// Weighted least squares at point i by the 2×2 normal equations.
double wls_at(const std::vector<double>& y, std::size_t i, int width) {
    const int h = (width + 1) / 2;
    const long lo = std::max<long>(0, static_cast<long>(i) - h + 1);
    const long hi = std::min<long>(static_cast<long>(y.size()) - 1, static_cast<long>(i) + h - 1);
    double s0 = 0, s1 = 0, s2 = 0, t0 = 0, t1 = 0;
    for (long j = lo; j <= hi; ++j) {
        const double d = std::abs(static_cast<double>(j) - static_cast<double>(i)) / h;
        const double w = std::pow(1.0 - d * d * d, 3.0);
        const double x = static_cast<double>(j);
        s0 += w;
        s1 += w * x;
        s2 += w * x * x;
        t0 += w * y[j];
        t1 += w * x * y[j];
    }
    const double det = s0 * s2 - s1 * s1;
    const double b = (s0 * t1 - s1 * t0) / det;
    const double a = (t0 - b * s1) / s0;
    return a + b * static_cast<double>(i);
}

std::vector<double> sine(std::size_t n, double amplitude, int shift = 0) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) {
        v[i] = amplitude * std::sin(2.0 * std::numbers::pi * static_cast<double>(static_cast<long>(i) - shift) / 24.0);
    }
    return v;
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

} // namespace

TEST_SUITE("decomposition") {

TEST_CASE("loess reproduces constants") {
    const std::vector<double> c(40, 3.25);
    for (int degree : {0, 1}) {
        for (double v : loess_smooth(c, 7, degree)) CHECK(v == doctest::Approx(3.25).epsilon(1e-14));
    }
}

TEST_CASE("degree-1 loess reproduces a line") {
    std::vector<double> y(50);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = 2.0 - 0.37 * static_cast<double>(i);
    const auto s = loess_smooth(y, 9, 1);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(std::abs(s[i] - y[i]) <= 1e-9);
}

TEST_CASE("loess matches a per-point weighted least-squares solve") {
    std::mt19937_64 rng(21);
    std::normal_distribution<double> noise(0.0, 0.3);
    std::vector<double> y(120);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::sin(0.2 * static_cast<double>(i)) + noise(rng);
    for (int width : {5, 11, 37}) {
        const auto s = loess_smooth(y, width, 1);
        for (std::size_t i = 0; i < y.size(); ++i) CHECK(std::abs(s[i] - wls_at(y, i, width)) <= 1e-8);
    }
}

TEST_CASE("loess rejects even or oversized windows") {
    const std::vector<double> y(10, 1.0);
    CHECK_THROWS_AS(loess_smooth(y, 4, 1), ConfigError);
    CHECK_THROWS_AS(loess_smooth(y, 11, 1), ConfigError);
}

TEST_CASE("loess_at extrapolates a line") {
    std::vector<double> y(30);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = 1.0 + 0.5 * static_cast<double>(i);
    CHECK(loess_at(y, -1.0, 7, 1) == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(loess_at(y, 30.0, 7, 1) == doctest::Approx(16.0).epsilon(1e-9));
}

TEST_CASE("next odd") {
    CHECK(next_odd_at_least(36.0) == 37);
    CHECK(next_odd_at_least(37.0) == 37);
    CHECK(next_odd_at_least(24.0) == 25);
}

TEST_CASE("stl additive identity on random series") {
    std::mt19937_64 rng(1);
    for (int k = 0; k < 20; ++k) {
        const auto y = testing::random_vector(24 * 9 + static_cast<std::size_t>(k), rng, -5.0, 5.0);
        const auto r = stl_decompose(y);
        for (std::size_t i = 0; i < y.size(); ++i) {
            CHECK(std::abs(r.seasonal[i] + r.trend[i] + r.residual[i] - y[i]) <= 1e-9);
        }
    }
}

TEST_CASE("stl recovers a pure sine") {
    const auto y = sine(240, 3.0);
    const auto r = stl_decompose(y);
    CHECK(correlation(r.seasonal, y) > 0.99);
    const auto [lo, hi] = std::minmax_element(r.trend.begin(), r.trend.end());
    CHECK(*hi - *lo < 0.05 * 3.0);
}

TEST_CASE("stl puts a ramp into the trend") {
    std::vector<double> y(240);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = 0.1 * static_cast<double>(i);
    const double range = y.back() - y.front();
    const auto r = stl_decompose(y);
    const auto [lo, hi] = std::minmax_element(r.seasonal.begin(), r.seasonal.end());
    CHECK(*hi - *lo <= 0.05 * range);
}

TEST_CASE("stl seasonal phase follows a shift") {
    const auto base = stl_decompose(sine(240, 1.0)).seasonal;
    for (int k : {1, 5, 9}) {
        const auto shifted = stl_decompose(sine(240, 1.0, k)).seasonal;
        int best_lag = 0;
        double best = -1e300;
        for (int lag = 0; lag < 24; ++lag) {
            double c = 0;
            for (std::size_t i = 0; i < base.size(); ++i) c += base[i] * shifted[(i + lag) % base.size()];
            if (c > best) {
                best = c;
                best_lag = lag;
            }
        }
        CHECK(std::abs(best_lag - k) <= 1);
    }
}

TEST_CASE("stl is linear in the response") {
    std::mt19937_64 rng(4);
    const auto y = testing::random_vector(200, rng);
    auto scaled = y;
    for (auto& v : scaled) v *= -3.5;
    const auto a = stl_decompose(y).seasonal;
    const auto b = stl_decompose(scaled).seasonal;
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(std::abs(b[i] + 3.5 * a[i]) <= 1e-6);
}

TEST_CASE("stl needs two periods") {
    const std::vector<double> y(47, 1.0);
    CHECK_THROWS_AS(stl_decompose(y), InputTooShort);
}

TEST_CASE("stl params json round trip") {
    StlParams p;
    p.seasonal_width = 9;
    p.inner_iterations = 3;
    const auto q = StlParams::from_json(p.to_json());
    CHECK(q.seasonal_width == 9);
    CHECK(q.inner_iterations == 3);
}

}
