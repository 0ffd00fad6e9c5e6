#pragma once

#include "dyneformer/nn/tensor.hpp"

#include <random>

namespace dyneformer::nn {

// Dense algebra ------------------------------------------------------------

template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
/// x·W + b with `b` a 1 × out row broadcast over rows.
template <typename T> Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> hadamard(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T factor);

// Elementwise nonlinearities ----------------------------------------------

template <typename T> Tensor<T> relu(const Tensor<T>& x);
template <typename T> Tensor<T> gelu(const Tensor<T>& x);
template <typename T> Tensor<T> exp(const Tensor<T>& x);

/// Softmax along each row.
template <typename T> Tensor<T> softmax_rows(const Tensor<T>& x);
/// Row-wise layer normalization with affine `gamma`, `beta` (1 × cols).
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps = T(1e-5));
/// Inverted dropout; identity when `rate` is 0 or `rng` is null (eval mode).
template <typename T> Tensor<T> dropout(const Tensor<T>& x, T rate, std::mt19937_64* rng);

// Layout -------------------------------------------------------------------

template <typename T> Tensor<T> slice_cols(const Tensor<T>& x, Eigen::Index begin, Eigen::Index count);
template <typename T> Tensor<T> concat_cols(const Tensor<T>& a, const Tensor<T>& b);
/// Row-major reshape; (B·T)×D ↔ B×(T·D) is free.
template <typename T> Tensor<T> reshape(const Tensor<T>& x, Eigen::Index rows, Eigen::Index cols);
/// Each row repeated `times` times consecutively: N×C → (N·times)×C.
template <typename T> Tensor<T> repeat_rows(const Tensor<T>& x, Eigen::Index times);
/// N×C → N×1.
template <typename T> Tensor<T> row_sum(const Tensor<T>& x);
/// Per sample, stacks a's block (na rows) on top of b's block (nb rows).
template <typename T> Tensor<T> interleave_blocks(const Tensor<T>& a, const Tensor<T>& b, Eigen::Index batch);
/// Per sample, rows [begin, begin + count) of each block of `block` rows.
template <typename T>
Tensor<T> select_block_rows(const Tensor<T>& x, Eigen::Index batch, Eigen::Index begin, Eigen::Index count);

// Reductions ---------------------------------------------------------------

template <typename T> Tensor<T> sum_all(const Tensor<T>& x);
/// Mean squared error against a constant target, as a 1×1 tensor.
template <typename T> Tensor<T> mse_loss(const Tensor<T>& pred, const Matrix<T>& target);
/// Σ x ⊙ w for a constant weight matrix.
template <typename T> Tensor<T> weighted_sum(const Tensor<T>& x, const Matrix<T>& weights);

// Attention ----------------------------------------------------------------

/// Scaled dot-product attention over `heads` column groups. q is (B·Tq)×D,
/// k and v are (B·Tk)×D. With `causal`, query i only sees keys ≤ i.
template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, Eigen::Index batch,
                               Eigen::Index heads, bool causal);

} // namespace dyneformer::nn
