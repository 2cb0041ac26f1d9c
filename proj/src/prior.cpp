#include "icl/prior.hpp"

#include <cmath>

#include "icl/linalg.hpp"

namespace icl {

GaussianPrior::GaussianPrior(Vec mean, Mat cov) : mean_(std::move(mean)) {
    require_shape(cov.rows() == mean_.size() && cov.cols() == mean_.size(),
                  "GaussianPrior: covariance must be d x d");
    if (mean_.size() == 0) throw ConfigError("GaussianPrior: dimension must be >= 1");
    if (!mean_.allFinite() || !cov.allFinite()) throw NumericError("GaussianPrior: non-finite parameters");
    cov_ = linalg::clamp_psd(cov);
    Eigen::SelfAdjointEigenSolver<Mat> es(cov_);
    Vec root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    sqrt_cov_ = es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

GaussianPrior GaussianPrior::standard(Eigen::Index d) {
    return GaussianPrior(Vec::Zero(d), Mat::Identity(d, d));
}

GaussianPrior GaussianPrior::skewed(Eigen::Index d) {
    Vec ev(d);
    for (Eigen::Index i = 0; i < d; ++i) ev[i] = 1.0 / static_cast<double>((i + 1) * (i + 1));
    ev *= static_cast<double>(d) / ev.sum();
    return GaussianPrior(Vec::Zero(d), ev.asDiagonal());
}

Vec GaussianPrior::sample(Rng& rng) const {
    return mean_ + sqrt_cov_ * standard_normal(dim(), rng);
}

DiscreteTaskSet::DiscreteTaskSet(std::vector<Vec> tasks_, double noise_var_)
    : tasks(std::move(tasks_)), noise_var(noise_var_) {
    if (tasks.empty()) throw ConfigError("DiscreteTaskSet: need K >= 1 tasks");
    if (!(noise_var > 0.0)) throw ConfigError("DiscreteTaskSet: noise variance must be > 0");
    for (const auto& w : tasks)
        require_shape(w.size() == tasks.front().size(), "DiscreteTaskSet: tasks differ in dimension");
}

std::vector<GaussianPrior> gmm_pinned_first_coordinate(Eigen::Index d, double shift) {
    Mat cov = Mat::Identity(d, d);
    cov(0, 0) = 0.0;
    Vec mu = Vec::Zero(d);
    mu[0] = shift;
    std::vector<GaussianPrior> out;
    out.emplace_back(mu, cov);
    out.emplace_back(-mu, cov);
    return out;
}

}  // namespace icl
