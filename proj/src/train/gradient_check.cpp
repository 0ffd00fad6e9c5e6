#include "dyneformer/train/gradient_check.hpp"

#include "dyneformer/errors.hpp"
#include "dyneformer/model/dyneformer.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

namespace dyneformer::train {

using nn::Matrix;
using nn::Tensor;

GradCheckKind parse_grad_check_kind(std::string_view text) {
    if (text == "affine") return GradCheckKind::affine;
    if (text == "sa") return GradCheckKind::sa;
    if (text == "gp") return GradCheckKind::gp;
    if (text == "full") return GradCheckKind::full;
    throw ConfigError(fmt::format("gradient check kind must be affine, sa, gp or full, got '{}'", text));
}

namespace {

Matrix<double> random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    Matrix<double> m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
    return m;
}

/// `loss_of` rebuilds the graph from the current leaf values.
GradCheckResult compare(const std::vector<Tensor<double>>& leaves, const std::function<Tensor<double>()>& loss_of,
                        double eps) {
    for (auto leaf : leaves) leaf.zero_grad();
    const auto loss = loss_of();
    nn::backward(loss);
    const double floor = 1e-6 * std::max(1.0, std::abs(loss.value()(0, 0)));
    GradCheckResult result;
    for (auto leaf : leaves) {
        const Matrix<double> analytic =
            leaf.has_grad() ? leaf.grad() : Matrix<double>::Zero(leaf.rows(), leaf.cols());
        auto& value = leaf.mutable_value();
        for (Eigen::Index i = 0; i < value.size(); ++i) {
            const double saved = value.data()[i];
            value.data()[i] = saved + eps;
            const double up = loss_of().value()(0, 0);
            value.data()[i] = saved - eps;
            const double down = loss_of().value()(0, 0);
            value.data()[i] = saved;
            const double numeric = (up - down) / (2.0 * eps);
            const double a = analytic.data()[i];
            const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
            result.max_relative_error = std::max(result.max_relative_error, err);
            ++result.coordinates;
        }
    }
    return result;
}

std::vector<Tensor<double>> tensors_of(const nn::ParameterList<double>& params) {
    std::vector<Tensor<double>> out;
    for (const auto& p : params) out.push_back(p.tensor);
    return out;
}

} // namespace

GradCheckResult gradient_check(GradCheckKind kind, const GradCheckDims& dims, double eps, std::uint64_t seed) {
    if (dims.batch < 1 || dims.steps < 1 || dims.pool < 1 || dims.d_model < 2 || dims.d_model % 2 != 0 || dims.d_s < 1) {
        throw ConfigError("gradient check dimensions must be positive with an even d_model");
    }
    if (!(eps > 0.0)) throw ConfigError("finite-difference step must be positive");
    std::mt19937_64 rng(seed);
    const Eigen::Index b = dims.batch;
    const Eigen::Index steps = dims.steps;
    const Eigen::Index d = dims.d_model;

    switch (kind) {
    case GradCheckKind::affine: {
        nn::Linear<double> layer(d, dims.pool, rng);
        auto x = Tensor<double>::parameter(random_matrix(b * steps, d, rng));
        const Matrix<double> w = random_matrix(b * steps, dims.pool, rng);
        auto leaves = tensors_of([&] { nn::ParameterList<double> p; layer.collect(p, "affine"); return p; }());
        leaves.push_back(x);
        return compare(leaves, [&] { return nn::weighted_sum(layer(x), w); }, eps);
    }
    case GradCheckKind::sa: {
        model::SaLayer<double> layer(d, dims.d_s, rng);
        auto v = Tensor<double>::parameter(random_matrix(b * steps, d, rng));
        auto s = Tensor<double>::parameter(random_matrix(b, dims.d_s, rng));
        const Matrix<double> w = random_matrix(b * steps, d, rng);
        nn::ParameterList<double> params;
        layer.collect(params, "sa");
        auto leaves = tensors_of(params);
        leaves.push_back(v);
        leaves.push_back(s);
        return compare(leaves, [&] { return nn::weighted_sum(layer(v, s, b, 0.0, nullptr), w); }, eps);
    }
    case GradCheckKind::gp: {
        model::GpLayer<double> layer(steps, d, dims.pool, rng);
        auto e = Tensor<double>::parameter(random_matrix(b * steps, d, rng));
        auto aligned = Tensor<double>::parameter(random_matrix(b * steps, dims.pool, rng));
        const Matrix<double> wv = random_matrix(b * steps, d, rng);
        const Matrix<double> ww = random_matrix(b, dims.pool, rng);
        nn::ParameterList<double> params;
        layer.collect(params, "gp");
        auto leaves = tensors_of(params);
        leaves.push_back(e);
        leaves.push_back(aligned);
        return compare(
            leaves,
            [&] {
                auto [v, weights] = layer(e, aligned, b);
                return nn::add(nn::weighted_sum(v, wv), nn::weighted_sum(weights, ww));
            },
            eps);
    }
    case GradCheckKind::full: {
        model::ModelConfig cfg;
        cfg.d_model = dims.d_model;
        cfg.n_heads = 2;
        cfg.n_gp_blocks = 2;
        cfg.m_decoder_layers = 1;
        cfg.feedforward_dim = 2 * dims.d_model;
        cfg.dropout = 0.0;
        cfg.input_length = dims.steps;
        cfg.horizon = std::max(1, dims.steps / 2);
        cfg.token_length = std::max(1, dims.steps / 2);
        cfg.d_t = 3;
        cfg.d_s = dims.d_s;
        cfg.pool_size = dims.pool;
        if (cfg.d_model % cfg.n_heads != 0) cfg.n_heads = 1;
        const model::DyneformerModel<double> net(cfg, seed + 1);

        pool::GlobalPool gp;
        gp.pools = random_matrix(dims.pool, steps, rng);
        gp.member_counts.assign(static_cast<std::size_t>(dims.pool), 1);

        model::Batch<double> batch;
        batch.size = b;
        batch.encoder = random_matrix(b * steps, cfg.d_t, rng);
        batch.decoder_known = random_matrix(b * cfg.decoder_length(), cfg.d_t, rng);
        batch.statics = random_matrix(b, cfg.d_s, rng);
        batch.target = Matrix<double>::Zero(b * cfg.horizon, 1);
        std::uniform_int_distribution<int> hour(0, 23);
        for (Eigen::Index i = 0; i < b; ++i) batch.start_hours.push_back(hour(rng));

        auto enc = Tensor<double>::parameter(batch.encoder);
        auto stat = Tensor<double>::parameter(batch.statics);
        const Matrix<double> w = random_matrix(b * cfg.horizon, 1, rng);
        auto leaves = tensors_of(net.parameters());
        leaves.push_back(enc);
        leaves.push_back(stat);
        return compare(
            leaves, [&] { return nn::weighted_sum(net.forward_tensors(enc, stat, batch, &gp).prediction, w); }, eps);
    }
    }
    throw ConfigError("unknown gradient check kind");
}

} // namespace dyneformer::train
