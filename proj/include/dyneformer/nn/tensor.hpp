#pragma once

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace dyneformer::nn {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// One value in the computation graph. `backward` receives the node itself,
/// reads its `grad` (and `value` if needed) and adds the contribution into
/// its inputs' grads.
template <typename T>
struct Node {
    Matrix<T> value;
    Matrix<T> grad; // empty until something flows into it
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(const Node& self)> backward;

    Matrix<T>& grad_buffer() {
        if (grad.rows() != value.rows() || grad.cols() != value.cols()) {
            grad = Matrix<T>::Zero(value.rows(), value.cols());
        }
        return grad;
    }
};

/// Handle to a 2-D tensor. Copies share the underlying node. Sequence batches
/// are stored as (batch·time) × features with samples in consecutive blocks.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    static Tensor constant(Matrix<T> value) { return Tensor(std::move(value), false); }
    static Tensor parameter(Matrix<T> value) { return Tensor(std::move(value), true); }

    bool defined() const noexcept { return static_cast<bool>(node_); }
    const Matrix<T>& value() const { return node_->value; }
    Matrix<T>& mutable_value() { return node_->value; }
    const Matrix<T>& grad() const { return node_->grad; }
    bool has_grad() const { return node_->grad.size() == node_->value.size() && node_->grad.size() > 0; }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    Eigen::Index rows() const { return node_->value.rows(); }
    Eigen::Index cols() const { return node_->value.cols(); }
    void zero_grad() { node_->grad.resize(0, 0); }

    const std::shared_ptr<Node<T>>& node() const { return node_; }
    explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

private:
    Tensor(Matrix<T> value, bool requires_grad) : node_(std::make_shared<Node<T>>()) {
        node_->value = std::move(value);
        node_->requires_grad = requires_grad;
    }

    std::shared_ptr<Node<T>> node_;
};

/// Creates the output node of an operation. The graph edge (and `backward`)
/// is only recorded when some input requires a gradient.
template <typename T, typename Backward>
Tensor<T> make_result(Matrix<T> value, std::vector<Tensor<T>> inputs, Backward&& backward) {
    auto node = std::make_shared<Node<T>>();
    node->value = std::move(value);
    for (const auto& in : inputs) {
        if (in.requires_grad()) node->requires_grad = true;
    }
    if (node->requires_grad) {
        node->inputs.reserve(inputs.size());
        for (const auto& in : inputs) node->inputs.push_back(in.node());
        node->backward = std::forward<Backward>(backward);
    }
    return Tensor<T>(std::move(node));
}

/// Reverse-mode sweep from a 1×1 `loss`, seeding d loss / d loss = 1.
template <typename T>
void backward(const Tensor<T>& loss);

/// Adds `g` into `node`'s gradient when the node participates in training.
template <typename T, typename Expr>
inline void accumulate(const std::shared_ptr<Node<T>>& node, const Expr& g) {
    if (node->requires_grad) node->grad_buffer() += g;
}

template <typename T>
struct NamedParameter {
    std::string name;
    Tensor<T> tensor;
};

template <typename T>
using ParameterList = std::vector<NamedParameter<T>>;

extern template void backward<float>(const Tensor<float>&);
extern template void backward<double>(const Tensor<double>&);

} // namespace dyneformer::nn
