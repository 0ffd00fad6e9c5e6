#pragma once

#include "dyneformer/nn/tensor.hpp"

#include <cmath>
#include <vector>

namespace dyneformer::nn {

struct AdamConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double clip_norm = 0.0; // global gradient-norm clip, 0 = off
};

template <typename T>
class Adam {
public:
    Adam(ParameterList<T> params, AdamConfig config) : params_(std::move(params)), config_(config) {
        for (const auto& p : params_) {
            m_.push_back(Matrix<T>::Zero(p.tensor.rows(), p.tensor.cols()));
            v_.push_back(Matrix<T>::Zero(p.tensor.rows(), p.tensor.cols()));
        }
    }

    void zero_grad() {
        for (auto& p : params_) p.tensor.zero_grad();
    }

    /// Global L2 norm of all current gradients.
    double grad_norm() const {
        double sq = 0.0;
        for (const auto& p : params_) {
            if (p.tensor.has_grad()) sq += static_cast<double>(p.tensor.grad().squaredNorm());
        }
        return std::sqrt(sq);
    }

    void step() {
        ++t_;
        double factor = 1.0;
        if (config_.clip_norm > 0.0) {
            const double norm = grad_norm();
            if (norm > config_.clip_norm) factor = config_.clip_norm / norm;
        }
        const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
        const T lr = static_cast<T>(config_.learning_rate * std::sqrt(bc2) / bc1);
        const T b1 = static_cast<T>(config_.beta1);
        const T b2 = static_cast<T>(config_.beta2);
        const T eps = static_cast<T>(config_.epsilon * std::sqrt(bc2));
        for (std::size_t i = 0; i < params_.size(); ++i) {
            auto& p = params_[i].tensor;
            if (!p.has_grad()) continue;
            const Matrix<T> g = p.grad() * static_cast<T>(factor);
            m_[i] = b1 * m_[i] + (T(1) - b1) * g;
            v_[i] = b2 * v_[i] + (T(1) - b2) * g.cwiseAbs2();
            p.mutable_value().array() -= lr * m_[i].array() / (v_[i].array().sqrt() + eps);
        }
    }

    long steps() const noexcept { return t_; }

private:
    ParameterList<T> params_;
    AdamConfig config_;
    std::vector<Matrix<T>> m_;
    std::vector<Matrix<T>> v_;
    long t_ = 0;
};

} // namespace dyneformer::nn
