#pragma once

#include <cstdint>
#include <string_view>

namespace dyneformer::train {

enum class GradCheckKind { affine, sa, gp, full };

GradCheckKind parse_grad_check_kind(std::string_view text); // throws ConfigError

struct GradCheckDims {
    int batch = 2;
    int steps = 4;   // T (and T2 of the pool in the full model)
    int pool = 3;    // P
    int d_model = 8;
    int d_s = 3;
};

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::size_t coordinates = 0; // parameter and input entries compared
};

/// Central finite differences (step `eps`) against reverse-mode gradients of a
/// random weighted sum of the outputs, over every parameter and input entry of
/// a random double-precision instance, dropout off. The relative error of one
/// entry is |analytic − numeric| / max(|analytic|, |numeric|, 1e-6·max(1, |loss|));
/// the floor tracks the cancellation noise of the difference quotient on
/// entries whose true gradient is 0 (attention key biases).
GradCheckResult gradient_check(GradCheckKind kind, const GradCheckDims& dims = {}, double eps = 1e-5,
                               std::uint64_t seed = 0);

} // namespace dyneformer::train
