#pragma once

#include "dyneformer/data/preprocess.hpp"
#include "dyneformer/errors.hpp"
#include "dyneformer/model/config.hpp"
#include "dyneformer/nn/layers.hpp"
#include "dyneformer/pool/global_pool.hpp"

#include <optional>
#include <random>
#include <span>
#include <vector>

namespace dyneformer::model {

using nn::Matrix;
using nn::Tensor;

/// A stacked batch: sample b occupies rows [b·rows, (b+1)·rows) of each
/// sequence matrix.
template <typename T>
struct Batch {
    Eigen::Index size = 0;
    Matrix<T> encoder;       // (B·T) × d_t
    Matrix<T> decoder_known; // (B·(L_token+L)) × d_t, future value rows 0
    Matrix<T> statics;       // B × d_s
    Matrix<T> target;        // (B·L) × 1
    std::vector<int> start_hours;
};

/// Stacks `samples[indices]`. An empty `indices` takes every sample.
template <typename T>
Batch<T> make_batch(const std::vector<data::WindowSample>& samples, std::span<const std::size_t> indices,
                    const ModelConfig& config);

/// (B·T2) × P matrix: row b·T2 + t holds pool(·, (t + h_b) mod T2), the pool
/// phase-aligned to each sample's start hour h_b.
template <typename T>
Matrix<T> aligned_pool_matrix(const pool::GlobalPool& pool, const std::vector<int>& start_hours);

template <typename T>
struct ForwardTrace {
    std::vector<Matrix<T>> encoder_activations; // E^i, (B·T) × d_model
    std::vector<Matrix<T>> gp_outputs;          // V^i, (B·T) × d_model
    std::vector<Matrix<T>> merge_weights;       // W^i, B × P
    Matrix<T> encoder_alpha;                    // (B·T) × d_s
    Matrix<T> decoder_alpha;                    // (B·(L_token+L)) × d_s
    Matrix<T> decoder_input;                    // (B·(L_token+L)) × d_t
    Matrix<T> prediction;                       // (B·L) × 1
};

/// Static-context attention: α = softmax(V·W_q + b_q) over the d_s attributes
/// per time step; token j = s_j·e_j + c_j; out = LayerNorm(V + dropout(Σ_j α_j token_j)).
template <typename T>
struct SaLayer {
    nn::Linear<T> query;  // d_model → d_s
    Tensor<T> embedding;  // d_s × d_model
    Tensor<T> token_bias; // d_s × d_model
    nn::LayerNorm<T> norm;

    SaLayer() = default;
    SaLayer(Eigen::Index d_model, Eigen::Index d_s, std::mt19937_64& rng);

    /// `v` is (B·steps) × d_model, `statics` B × d_s.
    Tensor<T> operator()(const Tensor<T>& v, const Tensor<T>& statics, Eigen::Index batch, T rate,
                         std::mt19937_64* rng, Matrix<T>* alpha_out = nullptr) const;
    void collect(nn::ParameterList<T>& out, const std::string& prefix) const;
};

/// Global-pool layer: W = softmax(flatten(E[:, half:]) · W_1 + b_1) per sample;
/// ℰ[t, p] = W_p · pool_p[t]; V = [E[:, :half], ℰ · W_2 + b_2].
template <typename T>
struct GpLayer {
    nn::Linear<T> merge;   // T·d_model/2 → P
    nn::Linear<T> project; // P → d_model/2

    GpLayer() = default;
    GpLayer(Eigen::Index steps, Eigen::Index d_model, Eigen::Index pool_size, std::mt19937_64& rng);

    /// `aligned` is the constant (B·T) × P phase-aligned pool. Returns (V, W).
    std::pair<Tensor<T>, Tensor<T>> operator()(const Tensor<T>& e, const Tensor<T>& aligned, Eigen::Index batch) const;
    void collect(nn::ParameterList<T>& out, const std::string& prefix) const;
};

/// Per sample, the last L entries of W · pool_aligned (a B·L × 1 tensor).
template <typename T>
Tensor<T> synchronous_padding(const Tensor<T>& weights, const Tensor<T>& aligned, Eigen::Index batch,
                              Eigen::Index steps, Eigen::Index horizon);

/// Decoder input of shape (B·(L_token+L)) × d_t. The value channel holds the
/// start token, then the synchronous padding (sync) or 0 (zero) in the future
/// rows; the mark channels are copied from `decoder_known`. Throws StateError
/// in sync mode without merge weights.
template <typename T>
Tensor<T> build_decoder_input(const Matrix<T>& decoder_known, const std::optional<Tensor<T>>& weights,
                              const std::optional<Tensor<T>>& aligned, const ModelConfig& config,
                              Eigen::Index batch);

template <typename T>
class DyneformerModel {
public:
    struct Output {
        Tensor<T> prediction; // (B·L) × 1
        ForwardTrace<T> trace;
    };

    DyneformerModel() = default;
    DyneformerModel(ModelConfig config, std::uint64_t seed);

    const ModelConfig& config() const noexcept { return config_; }

    /// Learned affine map to d_model plus the fixed sinusoidal encoding.
    Tensor<T> embed_and_position(const Tensor<T>& input, const nn::Linear<T>& embedding, Eigen::Index batch) const;

    /// `pool` is required iff use_gp. A non-null `dropout_rng` enables training-mode dropout.
    Output forward(const Batch<T>& batch, const pool::GlobalPool* pool, std::mt19937_64* dropout_rng = nullptr,
                   bool keep_trace = false) const;
    /// As `forward`, with the encoder input and statics supplied as tensors
    /// (used to differentiate with respect to the inputs).
    Output forward_tensors(const Tensor<T>& encoder, const Tensor<T>& statics, const Batch<T>& batch,
                           const pool::GlobalPool* pool, std::mt19937_64* dropout_rng = nullptr,
                           bool keep_trace = false) const;

    nn::ParameterList<T> parameters() const;

    template <typename U>
    DyneformerModel<U> cast() const;

private:
    ModelConfig config_;
    nn::Linear<T> encoder_embedding_;
    nn::Linear<T> decoder_embedding_;
    SaLayer<T> encoder_sa_;
    SaLayer<T> decoder_sa_;
    std::vector<nn::EncoderLayer<T>> encoder_layers_;
    std::vector<GpLayer<T>> gp_layers_;
    std::vector<nn::DecoderLayer<T>> decoder_layers_;
    nn::Linear<T> head_;
};

/// Copies parameter values between two lists holding the same names and
/// shapes. Throws DimensionError otherwise.
template <typename T, typename U>
void assign_parameters(const nn::ParameterList<T>& from, nn::ParameterList<U>& to) {
    if (from.size() != to.size()) throw DimensionError("parameter lists differ in length");
    for (std::size_t i = 0; i < from.size(); ++i) {
        auto& dst = to[i].tensor;
        const auto& src = from[i].tensor.value();
        if (from[i].name != to[i].name || src.rows() != dst.rows() || src.cols() != dst.cols()) {
            throw DimensionError("parameter mismatch at " + from[i].name);
        }
        dst.mutable_value() = src.template cast<U>();
    }
}

template <typename T>
template <typename U>
DyneformerModel<U> DyneformerModel<T>::cast() const {
    DyneformerModel<U> out(config_, 0);
    auto dst = out.parameters();
    assign_parameters(parameters(), dst);
    return out;
}

extern template class DyneformerModel<float>;
extern template class DyneformerModel<double>;

} // namespace dyneformer::model
