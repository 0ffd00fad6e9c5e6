#include "dyneformer/decomp/stl.hpp"

#include "dyneformer/decomp/loess.hpp"
#include "dyneformer/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace dyneformer::decomp {

namespace {

std::vector<double> moving_average(std::span<const double> x, std::size_t window) {
    std::vector<double> out(x.size() - window + 1);
    double sum = 0.0;
    for (std::size_t i = 0; i < window; ++i) sum += x[i];
    out[0] = sum / static_cast<double>(window);
    for (std::size_t i = 1; i < out.size(); ++i) {
        sum += x[i + window - 1] - x[i - 1];
        out[i] = sum / static_cast<double>(window);
    }
    return out;
}

int largest_odd_at_most(std::size_t n) {
    const auto v = static_cast<int>(n);
    return v % 2 == 0 ? v - 1 : v;
}

// Smooths one cycle-subseries and extrapolates one step on each side:
// returns m + 2 values at positions −1, 0, ..., m.
std::vector<double> smooth_subseries(const std::vector<double>& sub, int width, int degree) {
    const std::size_t m = sub.size();
    std::vector<double> out(m + 2);
    const int w = std::min(width, largest_odd_at_most(m));
    if (w < 3) {
        double mean = 0.0;
        for (double v : sub) mean += v;
        mean /= static_cast<double>(m);
        std::fill(out.begin(), out.end(), mean);
        return out;
    }
    for (std::size_t k = 0; k < m + 2; ++k) {
        out[k] = loess_at(sub, static_cast<double>(k) - 1.0, w, degree);
    }
    return out;
}

} // namespace

int next_odd_at_least(double x) {
    auto v = static_cast<int>(std::ceil(x - 1e-12));
    return v % 2 == 0 ? v + 1 : v;
}

StlParams StlParams::from_json(const nlohmann::json& j) {
    StlParams p;
    try {
        p.seasonal_width = j.value("seasonal_width", p.seasonal_width);
        p.seasonal_degree = j.value("seasonal_degree", p.seasonal_degree);
        p.trend_width = j.value("trend_width", p.trend_width);
        p.trend_degree = j.value("trend_degree", p.trend_degree);
        p.lowpass_width = j.value("lowpass_width", p.lowpass_width);
        p.lowpass_degree = j.value("lowpass_degree", p.lowpass_degree);
        p.inner_iterations = j.value("inner_iterations", p.inner_iterations);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("stl params: ") + e.what());
    }
    return p;
}

nlohmann::json StlParams::to_json() const {
    return {{"seasonal_width", seasonal_width}, {"seasonal_degree", seasonal_degree},
            {"trend_width", trend_width},       {"trend_degree", trend_degree},
            {"lowpass_width", lowpass_width},   {"lowpass_degree", lowpass_degree},
            {"inner_iterations", inner_iterations}};
}

DecompositionResult stl_decompose(std::span<const double> values, int period, const StlParams& params) {
    if (period < 2) throw ConfigError("STL period must be >= 2");
    const std::size_t n = values.size();
    const auto p = static_cast<std::size_t>(period);
    if (n < 2 * p) {
        throw InputTooShort("STL needs at least " + std::to_string(2 * p) + " points, got " +
                            std::to_string(n));
    }
    if (params.inner_iterations < 1) throw ConfigError("STL needs at least one inner iteration");

    const int trend_width = std::min(
        params.trend_width > 0 ? params.trend_width : next_odd_at_least(1.5 * period), largest_odd_at_most(n));
    const int lowpass_width = std::min(
        params.lowpass_width > 0 ? params.lowpass_width : next_odd_at_least(period), largest_odd_at_most(n));

    std::vector<double> trend(n, 0.0);
    std::vector<double> seasonal(n, 0.0);
    std::vector<double> detrended(n);
    std::vector<double> cycle(n + 2 * p);

    for (int iter = 0; iter < params.inner_iterations; ++iter) {
        for (std::size_t i = 0; i < n; ++i) detrended[i] = values[i] - trend[i];

        // Cycle-subseries smoothing; cycle[k] is the value at time k − p.
        for (std::size_t phase = 0; phase < p; ++phase) {
            std::vector<double> sub;
            for (std::size_t i = phase; i < n; i += p) sub.push_back(detrended[i]);
            const auto smoothed = smooth_subseries(sub, params.seasonal_width, params.seasonal_degree);
            for (std::size_t k = 0; k < smoothed.size(); ++k) {
                const std::size_t idx = phase + k * p;
                if (idx < cycle.size()) cycle[idx] = smoothed[k];
            }
        }
        // Low-pass: MA(p), MA(p), MA(3) shrink n + 2p back to n, then loess.
        const auto ma1 = moving_average(cycle, p);
        const auto ma2 = moving_average(ma1, p);
        const auto ma3 = moving_average(ma2, 3);
        const auto lowpass = loess_smooth(ma3, lowpass_width, params.lowpass_degree);

        for (std::size_t i = 0; i < n; ++i) seasonal[i] = cycle[p + i] - lowpass[i];

        std::vector<double> deseasonal(n);
        for (std::size_t i = 0; i < n; ++i) deseasonal[i] = values[i] - seasonal[i];
        trend = loess_smooth(deseasonal, trend_width, params.trend_degree);
    }

    DecompositionResult out;
    out.period = period;
    out.seasonal = std::move(seasonal);
    out.trend = std::move(trend);
    out.residual.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.residual[i] = values[i] - out.seasonal[i] - out.trend[i];
    return out;
}

} // namespace dyneformer::decomp
