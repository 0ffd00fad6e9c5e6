#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>

namespace dyneformer::pool {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Diagonal-covariance Gaussian mixture.
struct DiagGmm {
    Eigen::VectorXd weights; // P, positive, sums to 1
    RowMatrix means;         // P × J
    RowMatrix variances;     // P × J, positive

    Eigen::Index components() const noexcept { return weights.size(); }
    Eigen::Index dim() const noexcept { return means.cols(); }

    /// n × P matrix of log(π_c) + log N(z_n; μ_c, σ²_c).
    RowMatrix joint_log_density(const RowMatrix& z) const;
    /// n × P posterior responsibilities; rows sum to 1.
    RowMatrix responsibilities(const RowMatrix& z) const;
    /// Σ_n log Σ_c π_c N(z_n; μ_c, σ²_c).
    double log_likelihood(const RowMatrix& z) const;

    void validate() const; // throws StateError
};

struct EmConfig {
    int max_iterations = 300;
    double tolerance = 1e-8; // on the mean per-point log-likelihood
    int restarts = 5;
    double variance_floor = 1e-6;
    /// Additional per-dimension floor as a fraction of the data variance.
    double relative_variance_floor = 0.0;

    /// Effective per-dimension variance floor for the points `z`.
    Eigen::RowVectorXd floor_for(const RowMatrix& z) const;
};

/// Fits a P-component diagonal GMM by EM from k-means++ seeds, keeping the
/// best of `restarts` runs. Throws DataError when z has fewer than P rows.
DiagGmm fit_gmm_em(const RowMatrix& z, int components, std::mt19937_64& rng, const EmConfig& config = {});

/// log Σ exp(x) along each row.
Eigen::VectorXd row_logsumexp(const RowMatrix& x);

} // namespace dyneformer::pool
