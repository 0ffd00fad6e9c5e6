#pragma once

#include "dyneformer/nn/ops.hpp"

#include <cmath>
#include <random>
#include <string>

namespace dyneformer::nn {

/// Uniform Xavier/Glorot initialization of a fan_in × fan_out matrix.
template <typename T>
Matrix<T> xavier_uniform(Eigen::Index fan_in, Eigen::Index fan_out, std::mt19937_64& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix<T> m(fan_in, fan_out);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(dist(rng));
    return m;
}

template <typename T>
struct Linear {
    Tensor<T> weight; // in × out
    Tensor<T> bias;   // 1 × out

    Linear() = default;
    Linear(Eigen::Index in, Eigen::Index out, std::mt19937_64& rng)
        : weight(Tensor<T>::parameter(xavier_uniform<T>(in, out, rng))),
          bias(Tensor<T>::parameter(Matrix<T>::Zero(1, out))) {}

    Tensor<T> operator()(const Tensor<T>& x) const { return linear(x, weight, bias); }

    void collect(ParameterList<T>& out, const std::string& prefix) const {
        out.push_back({prefix + ".weight", weight});
        out.push_back({prefix + ".bias", bias});
    }
};

template <typename T>
struct LayerNorm {
    Tensor<T> gamma;
    Tensor<T> beta;

    LayerNorm() = default;
    explicit LayerNorm(Eigen::Index dim)
        : gamma(Tensor<T>::parameter(Matrix<T>::Ones(1, dim))), beta(Tensor<T>::parameter(Matrix<T>::Zero(1, dim))) {}

    Tensor<T> operator()(const Tensor<T>& x) const { return layer_norm(x, gamma, beta); }

    void collect(ParameterList<T>& out, const std::string& prefix) const {
        out.push_back({prefix + ".gamma", gamma});
        out.push_back({prefix + ".beta", beta});
    }
};

template <typename T>
struct MultiHeadAttention {
    Linear<T> query, key, value, output;
    Eigen::Index heads = 1;

    MultiHeadAttention() = default;
    MultiHeadAttention(Eigen::Index d_model, Eigen::Index n_heads, std::mt19937_64& rng)
        : query(d_model, d_model, rng), key(d_model, d_model, rng), value(d_model, d_model, rng),
          output(d_model, d_model, rng), heads(n_heads) {}

    Tensor<T> operator()(const Tensor<T>& x_q, const Tensor<T>& x_kv, Eigen::Index batch, bool causal) const {
        auto att = multi_head_attention(query(x_q), key(x_kv), value(x_kv), batch, heads, causal);
        return output(att);
    }

    void collect(ParameterList<T>& out, const std::string& prefix) const {
        query.collect(out, prefix + ".query");
        key.collect(out, prefix + ".key");
        value.collect(out, prefix + ".value");
        output.collect(out, prefix + ".output");
    }
};

template <typename T>
struct FeedForward {
    Linear<T> up, down;

    FeedForward() = default;
    FeedForward(Eigen::Index d_model, Eigen::Index hidden, std::mt19937_64& rng)
        : up(d_model, hidden, rng), down(hidden, d_model, rng) {}

    Tensor<T> operator()(const Tensor<T>& x, T rate, std::mt19937_64* rng) const {
        return down(dropout(gelu(up(x)), rate, rng));
    }

    void collect(ParameterList<T>& out, const std::string& prefix) const {
        up.collect(out, prefix + ".up");
        down.collect(out, prefix + ".down");
    }
};

/// Full-attention encoder layer with post-residual layer norms.
template <typename T>
struct EncoderLayer {
    MultiHeadAttention<T> attention;
    LayerNorm<T> norm1, norm2;
    FeedForward<T> feedforward;

    EncoderLayer() = default;
    EncoderLayer(Eigen::Index d_model, Eigen::Index n_heads, Eigen::Index hidden, std::mt19937_64& rng)
        : attention(d_model, n_heads, rng), norm1(d_model), norm2(d_model), feedforward(d_model, hidden, rng) {}

    Tensor<T> operator()(const Tensor<T>& x, Eigen::Index batch, T rate, std::mt19937_64* rng) const {
        auto h = norm1(add(x, dropout(attention(x, x, batch, false), rate, rng)));
        return norm2(add(h, dropout(feedforward(h, rate, rng), rate, rng)));
    }

    void collect(ParameterList<T>& out, const std::string& prefix) const {
        attention.collect(out, prefix + ".attention");
        norm1.collect(out, prefix + ".norm1");
        norm2.collect(out, prefix + ".norm2");
        feedforward.collect(out, prefix + ".feedforward");
    }
};

/// Masked self-attention, cross-attention onto the encoder output, feedforward.
template <typename T>
struct DecoderLayer {
    MultiHeadAttention<T> self_attention, cross_attention;
    LayerNorm<T> norm1, norm2, norm3;
    FeedForward<T> feedforward;

    DecoderLayer() = default;
    DecoderLayer(Eigen::Index d_model, Eigen::Index n_heads, Eigen::Index hidden, std::mt19937_64& rng)
        : self_attention(d_model, n_heads, rng), cross_attention(d_model, n_heads, rng), norm1(d_model),
          norm2(d_model), norm3(d_model), feedforward(d_model, hidden, rng) {}

    Tensor<T> operator()(const Tensor<T>& x, const Tensor<T>& memory, Eigen::Index batch, T rate,
                         std::mt19937_64* rng) const {
        auto h = norm1(add(x, dropout(self_attention(x, x, batch, true), rate, rng)));
        h = norm2(add(h, dropout(cross_attention(h, memory, batch, false), rate, rng)));
        return norm3(add(h, dropout(feedforward(h, rate, rng), rate, rng)));
    }

    void collect(ParameterList<T>& out, const std::string& prefix) const {
        self_attention.collect(out, prefix + ".self_attention");
        cross_attention.collect(out, prefix + ".cross_attention");
        norm1.collect(out, prefix + ".norm1");
        norm2.collect(out, prefix + ".norm2");
        norm3.collect(out, prefix + ".norm3");
        feedforward.collect(out, prefix + ".feedforward");
    }
};

/// pe[pos, 2i] = sin(pos / 10000^(2i/d)), pe[pos, 2i+1] = cos(same).
template <typename T>
Matrix<T> sinusoidal_encoding(Eigen::Index length, Eigen::Index d_model) {
    Matrix<T> pe(length, d_model);
    for (Eigen::Index pos = 0; pos < length; ++pos) {
        for (Eigen::Index i = 0; i < d_model; i += 2) {
            const double angle =
                static_cast<double>(pos) / std::pow(10000.0, static_cast<double>(i) / static_cast<double>(d_model));
            pe(pos, i) = static_cast<T>(std::sin(angle));
            if (i + 1 < d_model) pe(pos, i + 1) = static_cast<T>(std::cos(angle));
        }
    }
    return pe;
}

} // namespace dyneformer::nn
