#include "dyneformer/pool/gmm.hpp"

#include "dyneformer/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace dyneformer::pool {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

// k-means++ seeding followed by a few Lloyd steps; returns P × J centres.
RowMatrix kmeans_init(const RowMatrix& z, int k, std::mt19937_64& rng) {
    const Eigen::Index n = z.rows();
    RowMatrix centres(k, z.cols());
    std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
    centres.row(0) = z.row(first(rng));
    Eigen::VectorXd d2 = (z.rowwise() - centres.row(0)).rowwise().squaredNorm();
    for (int c = 1; c < k; ++c) {
        const double total = d2.sum();
        Eigen::Index pick = 0;
        if (total > 0.0) {
            std::uniform_real_distribution<double> u(0.0, total);
            double r = u(rng);
            for (pick = 0; pick < n - 1; ++pick) {
                r -= d2(pick);
                if (r <= 0.0) break;
            }
        } else {
            pick = first(rng);
        }
        centres.row(c) = z.row(pick);
        d2 = d2.cwiseMin((z.rowwise() - centres.row(c)).rowwise().squaredNorm());
    }
    std::vector<Eigen::Index> label(static_cast<std::size_t>(n));
    for (int iter = 0; iter < 10; ++iter) {
        for (Eigen::Index i = 0; i < n; ++i) {
            (centres.rowwise() - z.row(i)).rowwise().squaredNorm().minCoeff(&label[static_cast<std::size_t>(i)]);
        }
        RowMatrix sums = RowMatrix::Zero(k, z.cols());
        Eigen::VectorXd counts = Eigen::VectorXd::Zero(k);
        for (Eigen::Index i = 0; i < n; ++i) {
            sums.row(label[static_cast<std::size_t>(i)]) += z.row(i);
            counts(label[static_cast<std::size_t>(i)]) += 1.0;
        }
        for (int c = 0; c < k; ++c) {
            if (counts(c) > 0) centres.row(c) = sums.row(c) / counts(c);
        }
    }
    return centres;
}

struct EmResult {
    DiagGmm gmm;
    double log_likelihood = -std::numeric_limits<double>::infinity();
};

EmResult run_em(const RowMatrix& z, int k, std::mt19937_64& rng, const EmConfig& config) {
    const Eigen::Index n = z.rows();
    const Eigen::RowVectorXd floor = config.floor_for(z);
    Eigen::RowVectorXd global_var = (z.rowwise() - z.colwise().mean()).colwise().squaredNorm() / static_cast<double>(n);
    global_var = global_var.cwiseMax(floor);

    DiagGmm gmm;
    gmm.weights = Eigen::VectorXd::Constant(k, 1.0 / k);
    gmm.means = kmeans_init(z, k, rng);
    gmm.variances = global_var.replicate(k, 1);

    double previous = -std::numeric_limits<double>::infinity();
    double current = previous;
    for (int iter = 0; iter < config.max_iterations; ++iter) {
        RowMatrix log_joint = gmm.joint_log_density(z);
        Eigen::VectorXd lse = row_logsumexp(log_joint);
        current = lse.sum();
        RowMatrix resp = (log_joint.colwise() - lse).array().exp().matrix();

        Eigen::VectorXd nk = resp.colwise().sum().transpose();
        for (int c = 0; c < k; ++c) {
            if (nk(c) < 1e-10) {
                // Re-seed a dead component on the worst-explained point.
                Eigen::Index worst = 0;
                lse.minCoeff(&worst);
                gmm.means.row(c) = z.row(worst);
                gmm.variances.row(c) = global_var;
                nk(c) = 1e-10;
                continue;
            }
            const Eigen::RowVectorXd mean = resp.col(c).transpose() * z / nk(c);
            const Eigen::RowVectorXd var =
                (resp.col(c).transpose() * (z.rowwise() - mean).cwiseAbs2()) / nk(c);
            gmm.means.row(c) = mean;
            gmm.variances.row(c) = var.cwiseMax(floor);
        }
        gmm.weights = nk / nk.sum();
        gmm.weights = gmm.weights.cwiseMax(1e-12);
        gmm.weights /= gmm.weights.sum();

        if (std::abs(current - previous) / static_cast<double>(n) < config.tolerance) break;
        previous = current;
    }
    return EmResult{gmm, gmm.log_likelihood(z)};
}

} // namespace

Eigen::RowVectorXd EmConfig::floor_for(const RowMatrix& z) const {
    Eigen::RowVectorXd out = Eigen::RowVectorXd::Constant(z.cols(), variance_floor);
    if (relative_variance_floor > 0.0 && z.rows() > 0) {
        const Eigen::RowVectorXd var =
            (z.rowwise() - z.colwise().mean()).colwise().squaredNorm() / static_cast<double>(z.rows());
        out = out.cwiseMax(relative_variance_floor * var);
    }
    return out;
}

Eigen::VectorXd row_logsumexp(const RowMatrix& x) {
    Eigen::VectorXd out(x.rows());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const double mx = x.row(r).maxCoeff();
        if (!std::isfinite(mx)) {
            out(r) = mx;
            continue;
        }
        out(r) = mx + std::log((x.row(r).array() - mx).exp().sum());
    }
    return out;
}

RowMatrix DiagGmm::joint_log_density(const RowMatrix& z) const {
    if (z.cols() != dim()) {
        throw DimensionError("gmm: latent width " + std::to_string(z.cols()) + " != " + std::to_string(dim()));
    }
    const Eigen::Index p = components();
    RowMatrix out(z.rows(), p);
    for (Eigen::Index c = 0; c < p; ++c) {
        const Eigen::RowVectorXd inv_var = variances.row(c).cwiseInverse();
        const double log_norm = -0.5 * (static_cast<double>(dim()) * kLog2Pi + variances.row(c).array().log().sum());
        const Eigen::VectorXd quad = ((z.rowwise() - means.row(c)).cwiseAbs2().array().rowwise() * inv_var.array())
                                         .rowwise()
                                         .sum();
        out.col(c) = (std::log(weights(c)) + log_norm) - 0.5 * quad.array();
    }
    return out;
}

RowMatrix DiagGmm::responsibilities(const RowMatrix& z) const {
    RowMatrix lj = joint_log_density(z);
    const Eigen::VectorXd lse = row_logsumexp(lj);
    return (lj.colwise() - lse).array().exp().matrix();
}

double DiagGmm::log_likelihood(const RowMatrix& z) const { return row_logsumexp(joint_log_density(z)).sum(); }

void DiagGmm::validate() const {
    if (weights.size() == 0) throw StateError("gmm has no components");
    if (means.rows() != weights.size() || variances.rows() != weights.size() || variances.cols() != means.cols()) {
        throw StateError("gmm parameter shapes disagree");
    }
    if ((weights.array() <= 0.0).any() || std::abs(weights.sum() - 1.0) > 1e-9) {
        throw StateError("gmm weights must be positive and sum to 1");
    }
    if ((variances.array() <= 0.0).any()) throw StateError("gmm variances must be positive");
}

DiagGmm fit_gmm_em(const RowMatrix& z, int components, std::mt19937_64& rng, const EmConfig& config) {
    if (components < 1) throw ConfigError("gmm needs at least one component");
    if (z.rows() < components) {
        throw DataError("gmm: " + std::to_string(z.rows()) + " points for " + std::to_string(components) +
                        " components");
    }
    EmResult best;
    for (int r = 0; r < std::max(1, config.restarts); ++r) {
        EmResult run = run_em(z, components, rng, config);
        if (run.log_likelihood > best.log_likelihood) best = std::move(run);
    }
    return best.gmm;
}

} // namespace dyneformer::pool
