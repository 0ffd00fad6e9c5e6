#include "dyneformer/decomp/loess.hpp"

#include "dyneformer/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace dyneformer::decomp {

namespace {

double tricube(double u) {
    if (u >= 1.0) return 0.0;
    const double c = 1.0 - u * u * u;
    return c * c * c;
}

// Weighted least-squares fit of degree 0/1 on [left, right], evaluated at x.
double local_fit(std::span<const double> y, std::size_t left, std::size_t right, double x, double bandwidth,
                 int degree) {
    double sw = 0.0, swx = 0.0, swy = 0.0;
    for (std::size_t j = left; j <= right; ++j) {
        const double w = tricube(std::fabs(static_cast<double>(j) - x) / bandwidth);
        sw += w;
        swx += w * static_cast<double>(j);
        swy += w * y[j];
    }
    if (sw <= 0.0) throw DataError("loess window has zero total weight");
    const double ybar = swy / sw;
    if (degree == 0) return ybar;

    // Centered normal equations for slope: sum w (j - xbar)^2.
    const double xbar = swx / sw;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t j = left; j <= right; ++j) {
        const double w = tricube(std::fabs(static_cast<double>(j) - x) / bandwidth);
        const double dx = static_cast<double>(j) - xbar;
        sxx += w * dx * dx;
        sxy += w * dx * (y[j] - ybar);
    }
    const double range = static_cast<double>(right - left);
    if (sxx <= 1e-12 * (range * range + 1.0)) return ybar;
    return ybar + sxy / sxx * (x - xbar);
}

void check_args(std::size_t n, int width, int degree) {
    if (degree != 0 && degree != 1) throw ConfigError("loess degree must be 0 or 1");
    if (width < 3 || width % 2 == 0) {
        throw ConfigError("loess window width must be odd and >= 3, got " + std::to_string(width));
    }
    if (static_cast<std::size_t>(width) > n) {
        throw ConfigError("loess window width " + std::to_string(width) + " exceeds series length " +
                          std::to_string(n));
    }
}

} // namespace

std::vector<double> loess_smooth(std::span<const double> values, int width, int degree) {
    check_args(values.size(), width, degree);
    const std::size_t n = values.size();
    const auto half = static_cast<std::size_t>(width / 2);
    const double bandwidth = static_cast<double>(half + 1);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t left = i >= half ? i - half : 0;
        const std::size_t right = std::min(n - 1, i + half);
        out[i] = local_fit(values, left, right, static_cast<double>(i), bandwidth, degree);
    }
    return out;
}

double loess_at(std::span<const double> values, double x, int width, int degree) {
    check_args(values.size(), width, degree);
    const std::size_t n = values.size();
    const auto w = static_cast<std::size_t>(width);
    // Nearest `width` points to x.
    const double ideal_left = std::round(x) - static_cast<double>(w / 2);
    const auto left = static_cast<std::size_t>(std::clamp(ideal_left, 0.0, static_cast<double>(n - w)));
    const std::size_t right = left + w - 1;
    const double bandwidth =
        std::max(x - static_cast<double>(left), static_cast<double>(right) - x) + 1.0;
    return local_fit(values, left, right, x, bandwidth, degree);
}

} // namespace dyneformer::decomp
