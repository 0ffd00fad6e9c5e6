#include "dyneformer/nn/ops.hpp"

#include "dyneformer/errors.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <unordered_set>

namespace dyneformer::nn {

namespace {

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                             std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                             std::to_string(b.cols()));
    }
}

} // namespace

template <typename T>
void backward(const Tensor<T>& loss) {
    if (loss.rows() != 1 || loss.cols() != 1) throw DimensionError("backward needs a 1x1 loss");
    if (!loss.requires_grad()) return;

    // Iterative post-order DFS gives a topological order.
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> visited;
    std::vector<std::pair<Node<T>*, std::size_t>> stack{{loss.node().get(), 0}};
    visited.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node<T>* child = node->inputs[next++].get();
            if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    loss.node()->grad_buffer().setConstant(T(1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* node = *it;
        if (node->backward && node->grad.size() > 0) node->backward(*node);
    }
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.cols() != b.rows()) throw DimensionError("matmul: inner dimensions differ");
    Matrix<T> out = a.value() * b.value();
    return make_result<T>(std::move(out), {a, b}, [an = a.node(), bn = b.node()](const Node<T>& self) {
        if (an->requires_grad) an->grad_buffer().noalias() += self.grad * bn->value.transpose();
        if (bn->requires_grad) bn->grad_buffer().noalias() += an->value.transpose() * self.grad;
    });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    if (x.cols() != w.rows()) {
        throw DimensionError("linear: input width " + std::to_string(x.cols()) + " != weight rows " +
                             std::to_string(w.rows()));
    }
    if (b.rows() != 1 || b.cols() != w.cols()) throw DimensionError("linear: bias shape mismatch");
    Matrix<T> out(x.rows(), w.cols());
    out.noalias() = x.value() * w.value();
    out.rowwise() += b.value().row(0);
    return make_result<T>(std::move(out), {x, w, b},
                          [xn = x.node(), wn = w.node(), bn = b.node()](const Node<T>& self) {
                              if (xn->requires_grad) xn->grad_buffer().noalias() += self.grad * wn->value.transpose();
                              if (wn->requires_grad) wn->grad_buffer().noalias() += xn->value.transpose() * self.grad;
                              if (bn->requires_grad) bn->grad_buffer() += self.grad.colwise().sum();
                          });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "add");
    Matrix<T> out = a.value() + b.value();
    return make_result<T>(std::move(out), {a, b}, [an = a.node(), bn = b.node()](const Node<T>& self) {
        accumulate(an, self.grad);
        accumulate(bn, self.grad);
    });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "sub");
    Matrix<T> out = a.value() - b.value();
    return make_result<T>(std::move(out), {a, b}, [an = a.node(), bn = b.node()](const Node<T>& self) {
        accumulate(an, self.grad);
        accumulate(bn, -self.grad);
    });
}

template <typename T>
Tensor<T> hadamard(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "hadamard");
    Matrix<T> out = a.value().cwiseProduct(b.value());
    return make_result<T>(std::move(out), {a, b}, [an = a.node(), bn = b.node()](const Node<T>& self) {
        accumulate(an, self.grad.cwiseProduct(bn->value));
        accumulate(bn, self.grad.cwiseProduct(an->value));
    });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
    Matrix<T> out = a.value() * factor;
    return make_result<T>(std::move(out), {a},
                          [an = a.node(), factor](const Node<T>& self) { accumulate(an, self.grad * factor); });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    Matrix<T> out = x.value().cwiseMax(T(0));
    return make_result<T>(std::move(out), {x}, [xn = x.node()](const Node<T>& self) {
        accumulate(xn, (xn->value.array() > T(0)).select(self.grad, T(0)).matrix());
    });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
    const T inv_sqrt2 = T(0.70710678118654752440);
    Matrix<T> out = x.value().unaryExpr([inv_sqrt2](T v) { return T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2)); });
    return make_result<T>(std::move(out), {x}, [xn = x.node(), inv_sqrt2](const Node<T>& self) {
        const T inv_sqrt_2pi = T(0.39894228040143267794);
        Matrix<T> d = xn->value.unaryExpr([&](T v) {
            return T(0.5) * (T(1) + std::erf(v * inv_sqrt2)) + v * inv_sqrt_2pi * std::exp(T(-0.5) * v * v);
        });
        accumulate(xn, self.grad.cwiseProduct(d));
    });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
    Matrix<T> out = x.value().array().exp().matrix();
    return make_result<T>(std::move(out), {x}, [xn = x.node()](const Node<T>& self) {
        accumulate(xn, self.grad.cwiseProduct(self.value));
    });
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
    Matrix<T> out = x.value();
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        row.array() -= row.maxCoeff();
        row = row.array().exp().matrix();
        row /= row.sum();
    }
    return make_result<T>(std::move(out), {x}, [xn = x.node()](const Node<T>& self) {
        if (!xn->requires_grad) return;
        const auto& p = self.value;
        const auto& g = self.grad;
        Eigen::Matrix<T, Eigen::Dynamic, 1> dots = g.cwiseProduct(p).rowwise().sum();
        Matrix<T> d = p.cwiseProduct(g - dots.replicate(1, g.cols()));
        xn->grad_buffer() += d;
    });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
    const Eigen::Index n = x.rows();
    const Eigen::Index d = x.cols();
    if (gamma.rows() != 1 || gamma.cols() != d || beta.rows() != 1 || beta.cols() != d) {
        throw DimensionError("layer_norm: affine parameters must be 1 x " + std::to_string(d));
    }
    Matrix<T> xhat(n, d);
    Eigen::Matrix<T, Eigen::Dynamic, 1> inv_std(n);
    for (Eigen::Index r = 0; r < n; ++r) {
        const T mean = x.value().row(r).mean();
        const T var = (x.value().row(r).array() - mean).square().mean();
        inv_std(r) = T(1) / std::sqrt(var + eps);
        xhat.row(r) = (x.value().row(r).array() - mean) * inv_std(r);
    }
    Matrix<T> out = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() + beta.value().row(0).array();
    return make_result<T>(std::move(out), {x, gamma, beta},
                          [xn = x.node(), gn = gamma.node(), bn = beta.node(), xhat = std::move(xhat),
                           inv_std = std::move(inv_std)](const Node<T>& self) {
                              const auto& g = self.grad;
                              if (gn->requires_grad) gn->grad_buffer() += g.cwiseProduct(xhat).colwise().sum();
                              if (bn->requires_grad) bn->grad_buffer() += g.colwise().sum();
                              if (!xn->requires_grad) return;
                              Matrix<T> dxhat = g.array().rowwise() * gn->value.row(0).array();
                              const auto cols = static_cast<T>(dxhat.cols());
                              Eigen::Matrix<T, Eigen::Dynamic, 1> m1 = dxhat.rowwise().sum() / cols;
                              Eigen::Matrix<T, Eigen::Dynamic, 1> m2 = dxhat.cwiseProduct(xhat).rowwise().sum() / cols;
                              Matrix<T> dx = dxhat - m1.replicate(1, dxhat.cols()) -
                                             xhat.cwiseProduct(m2.replicate(1, dxhat.cols()));
                              dx.array().colwise() *= inv_std.array();
                              xn->grad_buffer() += dx;
                          });
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, T rate, std::mt19937_64* rng) {
    if (rng == nullptr || rate <= T(0)) return x;
    if (rate >= T(1)) throw ConfigError("dropout rate must be < 1");
    std::bernoulli_distribution keep(1.0 - static_cast<double>(rate));
    const T inv = T(1) / (T(1) - rate);
    Matrix<T> mask(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(*rng) ? inv : T(0);
    Matrix<T> out = x.value().cwiseProduct(mask);
    return make_result<T>(std::move(out), {x}, [xn = x.node(), mask = std::move(mask)](const Node<T>& self) {
        accumulate(xn, self.grad.cwiseProduct(mask));
    });
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, Eigen::Index begin, Eigen::Index count) {
    if (begin < 0 || count < 0 || begin + count > x.cols()) throw DimensionError("slice_cols out of range");
    Matrix<T> out = x.value().middleCols(begin, count);
    return make_result<T>(std::move(out), {x}, [xn = x.node(), begin, count](const Node<T>& self) {
        if (xn->requires_grad) xn->grad_buffer().middleCols(begin, count) += self.grad;
    });
}

template <typename T>
Tensor<T> concat_cols(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rows() != b.rows()) throw DimensionError("concat_cols: row counts differ");
    Matrix<T> out(a.rows(), a.cols() + b.cols());
    out.leftCols(a.cols()) = a.value();
    out.rightCols(b.cols()) = b.value();
    return make_result<T>(std::move(out), {a, b}, [an = a.node(), bn = b.node()](const Node<T>& self) {
        accumulate(an, self.grad.leftCols(an->value.cols()));
        accumulate(bn, self.grad.rightCols(bn->value.cols()));
    });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Eigen::Index rows, Eigen::Index cols) {
    if (rows * cols != x.rows() * x.cols()) throw DimensionError("reshape changes the element count");
    Matrix<T> out = Eigen::Map<const Matrix<T>>(x.value().data(), rows, cols);
    return make_result<T>(std::move(out), {x}, [xn = x.node()](const Node<T>& self) {
        if (!xn->requires_grad) return;
        auto& g = xn->grad_buffer();
        Eigen::Map<Matrix<T>>(g.data(), self.grad.rows(), self.grad.cols()) += self.grad;
    });
}

template <typename T>
Tensor<T> repeat_rows(const Tensor<T>& x, Eigen::Index times) {
    if (times < 1) throw DimensionError("repeat_rows needs times >= 1");
    Matrix<T> out(x.rows() * times, x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) out.middleRows(r * times, times) = x.value().row(r).replicate(times, 1);
    return make_result<T>(std::move(out), {x}, [xn = x.node(), times](const Node<T>& self) {
        if (!xn->requires_grad) return;
        auto& g = xn->grad_buffer();
        for (Eigen::Index r = 0; r < g.rows(); ++r) g.row(r) += self.grad.middleRows(r * times, times).colwise().sum();
    });
}

template <typename T>
Tensor<T> row_sum(const Tensor<T>& x) {
    Matrix<T> out = x.value().rowwise().sum();
    return make_result<T>(std::move(out), {x}, [xn = x.node()](const Node<T>& self) {
        accumulate(xn, self.grad.replicate(1, xn->value.cols()));
    });
}

template <typename T>
Tensor<T> interleave_blocks(const Tensor<T>& a, const Tensor<T>& b, Eigen::Index batch) {
    if (batch < 1 || a.rows() % batch != 0 || b.rows() % batch != 0 || a.cols() != b.cols()) {
        throw DimensionError("interleave_blocks: incompatible shapes");
    }
    const Eigen::Index na = a.rows() / batch;
    const Eigen::Index nb = b.rows() / batch;
    Matrix<T> out(a.rows() + b.rows(), a.cols());
    for (Eigen::Index s = 0; s < batch; ++s) {
        out.middleRows(s * (na + nb), na) = a.value().middleRows(s * na, na);
        out.middleRows(s * (na + nb) + na, nb) = b.value().middleRows(s * nb, nb);
    }
    return make_result<T>(std::move(out), {a, b}, [an = a.node(), bn = b.node(), batch, na, nb](const Node<T>& self) {
        for (Eigen::Index s = 0; s < batch; ++s) {
            if (an->requires_grad) an->grad_buffer().middleRows(s * na, na) += self.grad.middleRows(s * (na + nb), na);
            if (bn->requires_grad) {
                bn->grad_buffer().middleRows(s * nb, nb) += self.grad.middleRows(s * (na + nb) + na, nb);
            }
        }
    });
}

template <typename T>
Tensor<T> select_block_rows(const Tensor<T>& x, Eigen::Index batch, Eigen::Index begin, Eigen::Index count) {
    if (batch < 1 || x.rows() % batch != 0) throw DimensionError("select_block_rows: rows not divisible by batch");
    const Eigen::Index block = x.rows() / batch;
    if (begin < 0 || count < 0 || begin + count > block) throw DimensionError("select_block_rows out of range");
    Matrix<T> out(batch * count, x.cols());
    for (Eigen::Index s = 0; s < batch; ++s) out.middleRows(s * count, count) = x.value().middleRows(s * block + begin, count);
    return make_result<T>(std::move(out), {x}, [xn = x.node(), batch, block, begin, count](const Node<T>& self) {
        if (!xn->requires_grad) return;
        auto& g = xn->grad_buffer();
        for (Eigen::Index s = 0; s < batch; ++s) g.middleRows(s * block + begin, count) += self.grad.middleRows(s * count, count);
    });
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
    Matrix<T> out(1, 1);
    out(0, 0) = x.value().sum();
    return make_result<T>(std::move(out), {x}, [xn = x.node()](const Node<T>& self) {
        if (xn->requires_grad) xn->grad_buffer().array() += self.grad(0, 0);
    });
}

template <typename T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Matrix<T>& target) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols()) throw DimensionError("mse_loss: shape mismatch");
    Matrix<T> diff = pred.value() - target;
    const auto n = static_cast<T>(diff.size());
    Matrix<T> out(1, 1);
    out(0, 0) = diff.squaredNorm() / n;
    return make_result<T>(std::move(out), {pred}, [pn = pred.node(), diff = std::move(diff), n](const Node<T>& self) {
        accumulate(pn, diff * (T(2) * self.grad(0, 0) / n));
    });
}

template <typename T>
Tensor<T> weighted_sum(const Tensor<T>& x, const Matrix<T>& weights) {
    if (x.rows() != weights.rows() || x.cols() != weights.cols()) throw DimensionError("weighted_sum: shape mismatch");
    Matrix<T> out(1, 1);
    out(0, 0) = x.value().cwiseProduct(weights).sum();
    return make_result<T>(std::move(out), {x}, [xn = x.node(), weights](const Node<T>& self) {
        accumulate(xn, weights * self.grad(0, 0));
    });
}

template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, Eigen::Index batch,
                               Eigen::Index heads, bool causal) {
    const Eigen::Index d = q.cols();
    if (k.cols() != d || v.cols() != d || k.rows() != v.rows()) throw DimensionError("attention: q/k/v widths differ");
    if (heads < 1 || d % heads != 0) throw DimensionError("attention: width not divisible by heads");
    if (batch < 1 || q.rows() % batch != 0 || k.rows() % batch != 0) {
        throw DimensionError("attention: rows not divisible by batch");
    }
    const Eigen::Index tq = q.rows() / batch;
    const Eigen::Index tk = k.rows() / batch;
    if (causal && tq != tk) throw DimensionError("causal attention needs equal query/key lengths");
    const Eigen::Index dh = d / heads;
    const T factor = T(1) / std::sqrt(static_cast<T>(dh));

    Matrix<T> out(q.rows(), d);
    std::vector<Matrix<T>> probs(static_cast<std::size_t>(batch * heads));
    for (Eigen::Index s = 0; s < batch; ++s) {
        for (Eigen::Index h = 0; h < heads; ++h) {
            const auto qb = q.value().block(s * tq, h * dh, tq, dh);
            const auto kb = k.value().block(s * tk, h * dh, tk, dh);
            const auto vb = v.value().block(s * tk, h * dh, tk, dh);
            Matrix<T> scores(tq, tk);
            scores.noalias() = qb * kb.transpose();
            scores *= factor;
            for (Eigen::Index i = 0; i < tq; ++i) {
                auto row = scores.row(i);
                const Eigen::Index visible = causal ? i + 1 : tk;
                const T mx = row.head(visible).maxCoeff();
                row.head(visible) = (row.head(visible).array() - mx).exp().matrix();
                if (visible < tk) row.tail(tk - visible).setZero();
                row /= row.head(visible).sum();
            }
            out.block(s * tq, h * dh, tq, dh).noalias() = scores * vb;
            probs[static_cast<std::size_t>(s * heads + h)] = std::move(scores);
        }
    }
    return make_result<T>(
        std::move(out), {q, k, v},
        [qn = q.node(), kn = k.node(), vn = v.node(), probs = std::move(probs), batch, heads, tq, tk, dh,
         factor](const Node<T>& self) {
            for (Eigen::Index s = 0; s < batch; ++s) {
                for (Eigen::Index h = 0; h < heads; ++h) {
                    const auto& p = probs[static_cast<std::size_t>(s * heads + h)];
                    const auto g = self.grad.block(s * tq, h * dh, tq, dh);
                    const auto qb = qn->value.block(s * tq, h * dh, tq, dh);
                    const auto kb = kn->value.block(s * tk, h * dh, tk, dh);
                    const auto vb = vn->value.block(s * tk, h * dh, tk, dh);
                    if (vn->requires_grad) vn->grad_buffer().block(s * tk, h * dh, tk, dh).noalias() += p.transpose() * g;
                    if (!qn->requires_grad && !kn->requires_grad) continue;
                    Matrix<T> dp(tq, tk);
                    dp.noalias() = g * vb.transpose();
                    Eigen::Matrix<T, Eigen::Dynamic, 1> dots = dp.cwiseProduct(p).rowwise().sum();
                    Matrix<T> ds = p.cwiseProduct(dp - dots.replicate(1, tk)) * factor;
                    if (qn->requires_grad) qn->grad_buffer().block(s * tq, h * dh, tq, dh).noalias() += ds * kb;
                    if (kn->requires_grad) kn->grad_buffer().block(s * tk, h * dh, tk, dh).noalias() += ds.transpose() * qb;
                }
            }
        });
}

#define DYNEFORMER_INSTANTIATE_OPS(T)                                                                   \
    template void backward<T>(const Tensor<T>&);                                                        \
    template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                                   \
    template Tensor<T> linear<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                 \
    template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                                      \
    template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                                      \
    template Tensor<T> hadamard<T>(const Tensor<T>&, const Tensor<T>&);                                 \
    template Tensor<T> scale<T>(const Tensor<T>&, T);                                                   \
    template Tensor<T> relu<T>(const Tensor<T>&);                                                       \
    template Tensor<T> gelu<T>(const Tensor<T>&);                                                       \
    template Tensor<T> exp<T>(const Tensor<T>&);                                                        \
    template Tensor<T> softmax_rows<T>(const Tensor<T>&);                                               \
    template Tensor<T> layer_norm<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);          \
    template Tensor<T> dropout<T>(const Tensor<T>&, T, std::mt19937_64*);                               \
    template Tensor<T> slice_cols<T>(const Tensor<T>&, Eigen::Index, Eigen::Index);                     \
    template Tensor<T> concat_cols<T>(const Tensor<T>&, const Tensor<T>&);                              \
    template Tensor<T> reshape<T>(const Tensor<T>&, Eigen::Index, Eigen::Index);                        \
    template Tensor<T> repeat_rows<T>(const Tensor<T>&, Eigen::Index);                                  \
    template Tensor<T> row_sum<T>(const Tensor<T>&);                                                    \
    template Tensor<T> interleave_blocks<T>(const Tensor<T>&, const Tensor<T>&, Eigen::Index);          \
    template Tensor<T> select_block_rows<T>(const Tensor<T>&, Eigen::Index, Eigen::Index, Eigen::Index); \
    template Tensor<T> sum_all<T>(const Tensor<T>&);                                                    \
    template Tensor<T> mse_loss<T>(const Tensor<T>&, const Matrix<T>&);                                 \
    template Tensor<T> weighted_sum<T>(const Tensor<T>&, const Matrix<T>&);                             \
    template Tensor<T> multi_head_attention<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,    \
                                               Eigen::Index, Eigen::Index, bool);

DYNEFORMER_INSTANTIATE_OPS(float)
DYNEFORMER_INSTANTIATE_OPS(double)

#undef DYNEFORMER_INSTANTIATE_OPS

} // namespace dyneformer::nn
