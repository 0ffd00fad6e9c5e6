#pragma once

#include <span>
#include <vector>

namespace dyneformer::decomp {

/// Local polynomial smoother with tricube weights.
///
/// Point i is fitted on the window [i − h + 1, i + h − 1] clipped to the
/// series (h = (width + 1) / 2), with weight (1 − (|i − j| / h)³)³ for
/// neighbour j. The polynomial has degree 0 or 1 and is evaluated at i.
std::vector<double> loess_smooth(std::span<const double> values, int width, int degree);

/// Loess fit of `values` (observed at 0..n−1) evaluated at an arbitrary
/// position `x`, possibly outside [0, n−1]. The `width` observations nearest
/// to `x` are used, with bandwidth max(x − left, right − x) + 1.
double loess_at(std::span<const double> values, double x, int width, int degree);

} // namespace dyneformer::decomp
