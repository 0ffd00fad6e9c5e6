#pragma once

#include <nlohmann/json.hpp>

#include <span>
#include <vector>

namespace dyneformer::decomp {

struct DecompositionResult {
    std::vector<double> seasonal;
    std::vector<double> trend;
    std::vector<double> residual; // input − seasonal − trend
    int period = 24;
};

/// STL smoother settings. A zero width means "derive from the period":
/// trend → next odd ≥ 1.5·period, low-pass → next odd ≥ period.
struct StlParams {
    int seasonal_width = 7;
    int seasonal_degree = 1;
    int trend_width = 0;
    int trend_degree = 1;
    int lowpass_width = 0;
    int lowpass_degree = 1;
    int inner_iterations = 2;

    static StlParams from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

/// Additive seasonal-trend decomposition (STL inner loop without robustness
/// weights). Throws InputTooShort when fewer than 2·period points are given.
DecompositionResult stl_decompose(std::span<const double> values, int period = 24,
                                  const StlParams& params = {});

/// Smallest odd integer ≥ x.
int next_odd_at_least(double x);

} // namespace dyneformer::decomp
