#pragma once

#include "dyneformer/nn/layers.hpp"
#include "dyneformer/pool/gmm.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <vector>

namespace dyneformer::pool {

struct VadeHyper {
    int latent_dim = 10;
    int hidden1 = 256;
    int hidden2 = 64;
    int pretrain_epochs = 60;   // reconstruction-only autoencoder phase
    int finetune_epochs = 20;   // joint ELBO phase; 0 keeps the AE + EM model
    int batch_size = 64;
    double pretrain_lr = 1e-3;
    double finetune_lr = 5e-4;
    double recon_weight = 10.0; // weight of the summed squared reconstruction error in the ELBO
    EmConfig em{.relative_variance_floor = 0.03};
    std::uint64_t seed = 0;

    void validate() const; // throws ConfigError
    static VadeHyper from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

/// Encoder widths in → hidden1 → hidden2 → (mean, log-variance); decoder mirrors.
struct VadeNetwork {
    nn::Linear<double> enc1, enc2, enc_mean, enc_logvar;
    nn::Linear<double> dec1, dec2, dec_out;
    int input_dim = 0;
    int latent_dim = 0;

    VadeNetwork() = default;
    VadeNetwork(int input, const VadeHyper& hyper, std::mt19937_64& rng);

    /// Returns (mean, logvar) tensors of shape n × latent.
    std::pair<nn::Tensor<double>, nn::Tensor<double>> encode(const nn::Tensor<double>& x) const;
    nn::Tensor<double> decode(const nn::Tensor<double>& z) const;
    nn::ParameterList<double> parameters() const;
    VadeNetwork clone() const;
};

struct VadeModel {
    VadeNetwork network;
    DiagGmm gmm;
    std::vector<double> pretrain_loss;  // per-epoch mean reconstruction MSE
    std::vector<double> finetune_loss;  // per-epoch mean ELBO loss

    int input_dim() const noexcept { return network.input_dim; }
    int latent_dim() const noexcept { return network.latent_dim; }

    /// Latent means (no sampling) of the rows of `windows`. Throws DimensionError.
    RowMatrix encode_mean(const RowMatrix& windows) const;
    /// Mean squared reconstruction error of decode(encode_mean(x)).
    double reconstruction_mse(const RowMatrix& windows) const;
};

struct ClusterAssignment {
    std::vector<int> labels;  // argmax responsibility
    RowMatrix responsibilities; // n × P
};

/// Phase 1 only: reconstruction-pretrained autoencoder.
VadeNetwork pretrain_autoencoder(const RowMatrix& windows, const VadeHyper& hyper, std::vector<double>* history);

/// Phases 2 and 3 on top of a pretrained network (which is copied).
VadeModel finetune_vade(const VadeNetwork& pretrained, const RowMatrix& windows, int components,
                        const VadeHyper& hyper);

/// Full three-phase training. Throws DataError with fewer than 10·P windows
/// and TrainingDiverged on a non-finite loss.
VadeModel train_vade(const RowMatrix& windows, int components, const VadeHyper& hyper);

ClusterAssignment assign_clusters(const VadeModel& model, const RowMatrix& windows);

/// k·ln n − 2·ln L̂ with k = (P − 1) + 2·P·J, L̂ the mixture likelihood of the latent means.
double compute_bic(const VadeModel& model, const RowMatrix& windows);
double bic_from_gmm(const DiagGmm& gmm, const RowMatrix& latent);

struct PoolSizeSelection {
    int chosen = 0;
    std::vector<int> candidates;
    std::vector<double> bic;
};

/// Smallest candidate whose BIC is within `tolerance`·|min BIC| of the minimum.
int elbow_choice(const std::vector<int>& candidates, const std::vector<double>& bic, double tolerance = 0.01);

/// Trains one VaDE per candidate (sharing the reconstruction pretraining) and
/// applies `elbow_choice`. Throws ConfigError on an empty candidate list.
PoolSizeSelection select_pool_size(const RowMatrix& windows, const std::vector<int>& candidates,
                                   const VadeHyper& hyper);

/// Mean over the batch of the VaDE prior term with optimal cluster posteriors:
/// −log Σ_c exp(log π_c − A_c) − ½ Σ_j (1 + logvar_j), where
/// A_c = ½ Σ_j [log σ²_cj + exp(logvar_j)/σ²_cj + (mean_j − μ_cj)²/σ²_cj] and
/// π = softmax(pi_logits).
nn::Tensor<double> vade_prior_loss(const nn::Tensor<double>& mean, const nn::Tensor<double>& logvar,
                                   const nn::Tensor<double>& pi_logits, const nn::Tensor<double>& gmm_mean,
                                   const nn::Tensor<double>& gmm_logvar);

/// Adjusted Rand index of two labelings of the same items.
double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b);

} // namespace dyneformer::pool
