#include "dyneformer/pool/vade.hpp"

#include "dyneformer/errors.hpp"
#include "dyneformer/nn/adam.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>

namespace dyneformer::pool {

using nn::Matrix;
using nn::Tensor;

namespace {

void check_finite(double loss, const char* phase) {
    if (!std::isfinite(loss)) throw TrainingDiverged(std::string("VaDE ") + phase + " loss is not finite");
}

nn::Linear<double> copy_linear(const nn::Linear<double>& src) {
    nn::Linear<double> out;
    out.weight = Tensor<double>::parameter(src.weight.value());
    out.bias = Tensor<double>::parameter(src.bias.value());
    return out;
}

std::vector<std::size_t> shuffled(std::size_t n, std::mt19937_64& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    return idx;
}

Matrix<double> gather_rows(const RowMatrix& x, const std::vector<std::size_t>& idx, std::size_t begin,
                           std::size_t end) {
    Matrix<double> out(static_cast<Eigen::Index>(end - begin), x.cols());
    for (std::size_t i = begin; i < end; ++i) out.row(static_cast<Eigen::Index>(i - begin)) = x.row(static_cast<Eigen::Index>(idx[i]));
    return out;
}

void check_windows(const RowMatrix& windows, int components) {
    if (components < 1) throw ConfigError("VaDE needs at least one component");
    if (windows.rows() < 10 * static_cast<Eigen::Index>(components)) {
        throw DataError("VaDE needs at least " + std::to_string(10 * components) + " windows for P=" +
                        std::to_string(components) + ", got " + std::to_string(windows.rows()));
    }
}

} // namespace

void VadeHyper::validate() const {
    if (latent_dim < 1 || hidden1 < 1 || hidden2 < 1) throw ConfigError("VaDE widths must be positive");
    if (pretrain_epochs < 0 || finetune_epochs < 0) throw ConfigError("VaDE epochs must be non-negative");
    if (batch_size < 1) throw ConfigError("VaDE batch_size must be >= 1");
    if (!(pretrain_lr > 0.0) || !(finetune_lr > 0.0)) throw ConfigError("VaDE learning rates must be > 0");
    if (!(recon_weight > 0.0)) throw ConfigError("VaDE recon_weight must be > 0");
}

VadeHyper VadeHyper::from_json(const nlohmann::json& j) {
    VadeHyper h;
    try {
        h.latent_dim = j.value("latent_dim", h.latent_dim);
        h.hidden1 = j.value("hidden1", h.hidden1);
        h.hidden2 = j.value("hidden2", h.hidden2);
        h.pretrain_epochs = j.value("pretrain_epochs", h.pretrain_epochs);
        h.finetune_epochs = j.value("finetune_epochs", h.finetune_epochs);
        h.batch_size = j.value("batch_size", h.batch_size);
        h.pretrain_lr = j.value("pretrain_lr", h.pretrain_lr);
        h.finetune_lr = j.value("finetune_lr", h.finetune_lr);
        h.recon_weight = j.value("recon_weight", h.recon_weight);
        h.em.max_iterations = j.value("em_max_iterations", h.em.max_iterations);
        h.em.restarts = j.value("em_restarts", h.em.restarts);
        h.em.variance_floor = j.value("em_variance_floor", h.em.variance_floor);
        h.em.relative_variance_floor = j.value("em_relative_variance_floor", h.em.relative_variance_floor);
        h.seed = j.value("seed", h.seed);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("vade config: ") + e.what());
    }
    h.validate();
    return h;
}

nlohmann::json VadeHyper::to_json() const {
    return {{"latent_dim", latent_dim},
            {"hidden1", hidden1},
            {"hidden2", hidden2},
            {"pretrain_epochs", pretrain_epochs},
            {"finetune_epochs", finetune_epochs},
            {"batch_size", batch_size},
            {"pretrain_lr", pretrain_lr},
            {"finetune_lr", finetune_lr},
            {"recon_weight", recon_weight},
            {"em_max_iterations", em.max_iterations},
            {"em_restarts", em.restarts},
            {"em_variance_floor", em.variance_floor},
            {"em_relative_variance_floor", em.relative_variance_floor},
            {"seed", seed}};
}

VadeNetwork::VadeNetwork(int input, const VadeHyper& hyper, std::mt19937_64& rng)
    : enc1(input, hyper.hidden1, rng), enc2(hyper.hidden1, hyper.hidden2, rng),
      enc_mean(hyper.hidden2, hyper.latent_dim, rng), enc_logvar(hyper.hidden2, hyper.latent_dim, rng),
      dec1(hyper.latent_dim, hyper.hidden2, rng), dec2(hyper.hidden2, hyper.hidden1, rng),
      dec_out(hyper.hidden1, input, rng), input_dim(input), latent_dim(hyper.latent_dim) {}

std::pair<Tensor<double>, Tensor<double>> VadeNetwork::encode(const Tensor<double>& x) const {
    auto h = nn::relu(enc2(nn::relu(enc1(x))));
    return {enc_mean(h), enc_logvar(h)};
}

Tensor<double> VadeNetwork::decode(const Tensor<double>& z) const { return dec_out(nn::relu(dec2(nn::relu(dec1(z))))); }

nn::ParameterList<double> VadeNetwork::parameters() const {
    nn::ParameterList<double> out;
    enc1.collect(out, "enc1");
    enc2.collect(out, "enc2");
    enc_mean.collect(out, "enc_mean");
    enc_logvar.collect(out, "enc_logvar");
    dec1.collect(out, "dec1");
    dec2.collect(out, "dec2");
    dec_out.collect(out, "dec_out");
    return out;
}

VadeNetwork VadeNetwork::clone() const {
    VadeNetwork out;
    out.enc1 = copy_linear(enc1);
    out.enc2 = copy_linear(enc2);
    out.enc_mean = copy_linear(enc_mean);
    out.enc_logvar = copy_linear(enc_logvar);
    out.dec1 = copy_linear(dec1);
    out.dec2 = copy_linear(dec2);
    out.dec_out = copy_linear(dec_out);
    out.input_dim = input_dim;
    out.latent_dim = latent_dim;
    return out;
}

RowMatrix VadeModel::encode_mean(const RowMatrix& windows) const {
    if (windows.cols() != input_dim()) {
        throw DimensionError("window length " + std::to_string(windows.cols()) + " != VaDE input width " +
                             std::to_string(input_dim()));
    }
    return network.encode(Tensor<double>::constant(windows)).first.value();
}

double VadeModel::reconstruction_mse(const RowMatrix& windows) const {
    const RowMatrix z = encode_mean(windows);
    const Matrix<double> rec = network.decode(Tensor<double>::constant(z)).value();
    return (rec - windows).squaredNorm() / static_cast<double>(windows.size());
}

VadeNetwork pretrain_autoencoder(const RowMatrix& windows, const VadeHyper& hyper, std::vector<double>* history) {
    hyper.validate();
    if (windows.rows() < 1) throw DataError("VaDE needs at least one window");
    std::mt19937_64 rng(hyper.seed);
    VadeNetwork net(static_cast<int>(windows.cols()), hyper, rng);
    nn::Adam<double> adam(net.parameters(), {.learning_rate = hyper.pretrain_lr});
    const auto n = static_cast<std::size_t>(windows.rows());
    const auto bs = static_cast<std::size_t>(hyper.batch_size);
    for (int epoch = 0; epoch < hyper.pretrain_epochs; ++epoch) {
        const auto idx = shuffled(n, rng);
        double total = 0.0;
        for (std::size_t b = 0; b < n; b += bs) {
            const std::size_t e = std::min(n, b + bs);
            const Matrix<double> x = gather_rows(windows, idx, b, e);
            auto xt = Tensor<double>::constant(x);
            auto loss = nn::mse_loss(net.decode(net.encode(xt).first), x);
            check_finite(loss.value()(0, 0), "pretraining");
            total += loss.value()(0, 0) * static_cast<double>(e - b);
            adam.zero_grad();
            nn::backward(loss);
            adam.step();
        }
        if (history) history->push_back(total / static_cast<double>(n));
    }
    return net;
}

VadeModel finetune_vade(const VadeNetwork& pretrained, const RowMatrix& windows, int components,
                        const VadeHyper& hyper) {
    hyper.validate();
    check_windows(windows, components);
    std::mt19937_64 rng(hyper.seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(components)));

    VadeModel model;
    model.network = pretrained.clone();
    const RowMatrix z0 = model.encode_mean(windows);
    model.gmm = fit_gmm_em(z0, components, rng, hyper.em);

    if (hyper.finetune_epochs == 0) return model;

    // The log-variance head is untouched by pretraining. Start it below every
    // component variance so no broad component captures all posteriors.
    model.network.enc_logvar.weight.mutable_value().setZero();
    model.network.enc_logvar.bias.mutable_value() =
        (model.gmm.variances.colwise().minCoeff().array() * 0.1).log().matrix();

    const Eigen::RowVectorXd floor = hyper.em.floor_for(z0);
    const Eigen::RowVectorXd log_floor = floor.array().log();
    auto pi_logits = Tensor<double>::parameter(model.gmm.weights.array().log().matrix().transpose());
    auto gmm_mean = Tensor<double>::parameter(model.gmm.means);
    auto gmm_logvar = Tensor<double>::parameter(model.gmm.variances.array().log().matrix());

    auto params = model.network.parameters();
    params.push_back({"gmm.pi_logits", pi_logits});
    params.push_back({"gmm.mean", gmm_mean});
    params.push_back({"gmm.logvar", gmm_logvar});
    nn::Adam<double> adam(params, {.learning_rate = hyper.finetune_lr});

    const auto n = static_cast<std::size_t>(windows.rows());
    const auto bs = static_cast<std::size_t>(hyper.batch_size);
    const double recon_scale = hyper.recon_weight * static_cast<double>(windows.cols());
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int epoch = 0; epoch < hyper.finetune_epochs; ++epoch) {
        const auto idx = shuffled(n, rng);
        double total = 0.0;
        for (std::size_t b = 0; b < n; b += bs) {
            const std::size_t e = std::min(n, b + bs);
            const Matrix<double> x = gather_rows(windows, idx, b, e);
            auto [mean, logvar] = model.network.encode(Tensor<double>::constant(x));
            Matrix<double> eps(mean.rows(), mean.cols());
            for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = normal(rng);
            auto z = nn::add(mean, nn::hadamard(nn::exp(nn::scale(logvar, 0.5)), Tensor<double>::constant(eps)));
            auto recon = nn::scale(nn::mse_loss(model.network.decode(z), x), recon_scale);
            auto loss = nn::add(recon, vade_prior_loss(mean, logvar, pi_logits, gmm_mean, gmm_logvar));
            check_finite(loss.value()(0, 0), "fine-tuning");
            total += loss.value()(0, 0) * static_cast<double>(e - b);
            adam.zero_grad();
            nn::backward(loss);
            adam.step();
            gmm_logvar.mutable_value() = gmm_logvar.value().cwiseMax(log_floor.replicate(components, 1));
        }
        model.finetune_loss.push_back(total / static_cast<double>(n));
    }

    Eigen::VectorXd logits = pi_logits.value().row(0).transpose();
    logits.array() -= logits.maxCoeff();
    model.gmm.weights = logits.array().exp();
    model.gmm.weights /= model.gmm.weights.sum();
    model.gmm.weights = model.gmm.weights.cwiseMax(1e-12);
    model.gmm.weights /= model.gmm.weights.sum();
    model.gmm.means = gmm_mean.value();
    model.gmm.variances = gmm_logvar.value().array().exp().matrix().cwiseMax(floor.replicate(components, 1));
    return model;
}

VadeModel train_vade(const RowMatrix& windows, int components, const VadeHyper& hyper) {
    check_windows(windows, components);
    std::vector<double> history;
    VadeNetwork net = pretrain_autoencoder(windows, hyper, &history);
    VadeModel model = finetune_vade(net, windows, components, hyper);
    model.pretrain_loss = std::move(history);
    return model;
}

ClusterAssignment assign_clusters(const VadeModel& model, const RowMatrix& windows) {
    const RowMatrix z = model.encode_mean(windows);
    ClusterAssignment out;
    out.responsibilities = model.gmm.responsibilities(z);
    out.labels.resize(static_cast<std::size_t>(z.rows()));
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        Eigen::Index arg = 0;
        out.responsibilities.row(i).maxCoeff(&arg);
        out.labels[static_cast<std::size_t>(i)] = static_cast<int>(arg);
    }
    return out;
}

double bic_from_gmm(const DiagGmm& gmm, const RowMatrix& latent) {
    const auto p = static_cast<double>(gmm.components());
    const auto j = static_cast<double>(gmm.dim());
    const double k = (p - 1.0) + 2.0 * p * j;
    return k * std::log(static_cast<double>(latent.rows())) - 2.0 * gmm.log_likelihood(latent);
}

double compute_bic(const VadeModel& model, const RowMatrix& windows) {
    return bic_from_gmm(model.gmm, model.encode_mean(windows));
}

int elbow_choice(const std::vector<int>& candidates, const std::vector<double>& bic, double tolerance) {
    if (candidates.empty()) throw ConfigError("pool size selection needs at least one candidate");
    if (candidates.size() != bic.size()) throw DimensionError("one BIC value per candidate expected");
    const double best = *std::min_element(bic.begin(), bic.end());
    const double threshold = best + tolerance * std::abs(best);
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (bic[i] <= threshold) return candidates[i];
    }
    return candidates.back();
}

PoolSizeSelection select_pool_size(const RowMatrix& windows, const std::vector<int>& candidates,
                                   const VadeHyper& hyper) {
    if (candidates.empty()) throw ConfigError("pool size selection needs at least one candidate");
    if (!std::is_sorted(candidates.begin(), candidates.end())) throw ConfigError("candidate P values must ascend");
    check_windows(windows, candidates.back());
    PoolSizeSelection out;
    out.candidates = candidates;
    const VadeNetwork pretrained = pretrain_autoencoder(windows, hyper, nullptr);
    for (int p : candidates) {
        const VadeModel model = finetune_vade(pretrained, windows, p, hyper);
        out.bic.push_back(compute_bic(model, windows));
        spdlog::debug("pool size P={} BIC={}", p, out.bic.back());
    }
    out.chosen = elbow_choice(candidates, out.bic);
    return out;
}

Tensor<double> vade_prior_loss(const Tensor<double>& mean, const Tensor<double>& logvar, const Tensor<double>& pi_logits,
                               const Tensor<double>& gmm_mean, const Tensor<double>& gmm_logvar) {
    const Eigen::Index b = mean.rows();
    const Eigen::Index j = mean.cols();
    const Eigen::Index p = gmm_mean.rows();
    if (logvar.rows() != b || logvar.cols() != j || gmm_mean.cols() != j || gmm_logvar.rows() != p ||
        gmm_logvar.cols() != j || pi_logits.rows() != 1 || pi_logits.cols() != p) {
        throw DimensionError("vade_prior_loss: inconsistent shapes");
    }
    const Eigen::RowVectorXd logits = pi_logits.value().row(0);
    const double lse_logits = logits.maxCoeff() + std::log((logits.array() - logits.maxCoeff()).exp().sum());
    const Eigen::RowVectorXd log_pi = logits.array() - lse_logits;

    RowMatrix inv_var = (-gmm_logvar.value().array()).exp();
    RowMatrix a(b, p); // A_c per sample
    for (Eigen::Index n = 0; n < b; ++n) {
        const Eigen::RowVectorXd var_q = logvar.value().row(n).array().exp();
        for (Eigen::Index c = 0; c < p; ++c) {
            const Eigen::RowVectorXd diff = mean.value().row(n) - gmm_mean.value().row(c);
            a(n, c) = 0.5 * (gmm_logvar.value().row(c).array() + var_q.array() * inv_var.row(c).array() +
                             diff.array().square() * inv_var.row(c).array())
                                .sum();
        }
    }
    RowMatrix scores = (-a).rowwise() + log_pi;
    const Eigen::VectorXd lse = row_logsumexp(scores);
    RowMatrix gamma = (scores.colwise() - lse).array().exp();

    double total = 0.0;
    for (Eigen::Index n = 0; n < b; ++n) total += -lse(n) - 0.5 * (1.0 + logvar.value().row(n).array()).sum();
    Matrix<double> out(1, 1);
    out(0, 0) = total / static_cast<double>(b);

    return nn::make_result<double>(
        std::move(out), {mean, logvar, pi_logits, gmm_mean, gmm_logvar},
        [mn = mean.node(), lvn = logvar.node(), pin = pi_logits.node(), gmn = gmm_mean.node(),
         glvn = gmm_logvar.node(), gamma = std::move(gamma), inv_var = std::move(inv_var), log_pi,
         b](const nn::Node<double>& self) {
            const double g = self.grad(0, 0) / static_cast<double>(b);
            const Eigen::Index p = gamma.cols();
            Matrix<double> d_mean = Matrix<double>::Zero(mn->value.rows(), mn->value.cols());
            Matrix<double> d_logvar = Matrix<double>::Constant(lvn->value.rows(), lvn->value.cols(), -0.5 * g);
            Matrix<double> d_gmean = Matrix<double>::Zero(gmn->value.rows(), gmn->value.cols());
            Matrix<double> d_glogvar = Matrix<double>::Zero(glvn->value.rows(), glvn->value.cols());
            for (Eigen::Index n = 0; n < gamma.rows(); ++n) {
                const Eigen::RowVectorXd var_q = lvn->value.row(n).array().exp();
                for (Eigen::Index c = 0; c < p; ++c) {
                    const double w = g * gamma(n, c);
                    const Eigen::RowVectorXd diff = mn->value.row(n) - gmn->value.row(c);
                    const Eigen::RowVectorXd scaled = diff.array() * inv_var.row(c).array();
                    const Eigen::RowVectorXd ratio = var_q.array() * inv_var.row(c).array();
                    d_mean.row(n) += w * scaled;
                    d_gmean.row(c) -= w * scaled;
                    d_logvar.row(n) += 0.5 * w * ratio;
                    d_glogvar.row(c) += 0.5 * w * (1.0 - ratio.array() - diff.array() * scaled.array()).matrix();
                }
            }
            nn::accumulate(mn, d_mean);
            nn::accumulate(lvn, d_logvar);
            nn::accumulate(gmn, d_gmean);
            nn::accumulate(glvn, d_glogvar);
            if (pin->requires_grad) {
                // d/d log π_c = −Σ_n γ_nc, then through the log-softmax.
                const Eigen::RowVectorXd d_logpi = -g * gamma.colwise().sum();
                const Eigen::RowVectorXd pi = log_pi.array().exp();
                pin->grad_buffer().row(0) += d_logpi - pi * d_logpi.sum();
            }
        });
}

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) throw DimensionError("ARI labelings differ in length");
    const auto n = static_cast<double>(a.size());
    if (a.size() < 2) return 1.0;
    std::map<std::pair<int, int>, double> joint;
    std::map<int, double> rows, cols;
    for (std::size_t i = 0; i < a.size(); ++i) {
        joint[{a[i], b[i]}] += 1.0;
        rows[a[i]] += 1.0;
        cols[b[i]] += 1.0;
    }
    auto choose2 = [](double x) { return x * (x - 1.0) / 2.0; };
    double index = 0.0, sum_rows = 0.0, sum_cols = 0.0;
    for (const auto& [_, v] : joint) index += choose2(v);
    for (const auto& [_, v] : rows) sum_rows += choose2(v);
    for (const auto& [_, v] : cols) sum_cols += choose2(v);
    const double expected = sum_rows * sum_cols / choose2(n);
    const double max_index = 0.5 * (sum_rows + sum_cols);
    if (max_index == expected) return 1.0;
    return (index - expected) / (max_index - expected);
}

} // namespace dyneformer::pool
