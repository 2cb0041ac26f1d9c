#pragma once

#include <vector>

#include "icl/core.hpp"

namespace icl {

/// Gaussian prior N(mean, cov) over weight vectors. The covariance may be
/// singular (the GMM experiments pin the first coordinate with zero variance).
class GaussianPrior {
public:
    GaussianPrior(Vec mean, Mat cov);

    static GaussianPrior standard(Eigen::Index d);

    /// Covariance with eigenvalues proportional to 1/i^2, scaled to trace d.
    static GaussianPrior skewed(Eigen::Index d);

    const Vec& mean() const { return mean_; }
    const Mat& cov() const { return cov_; }
    /// Symmetric square root of cov().
    const Mat& sqrt_cov() const { return sqrt_cov_; }
    Eigen::Index dim() const { return mean_.size(); }

    Vec sample(Rng& rng) const;

private:
    Vec mean_;
    Mat cov_;
    Mat sqrt_cov_;  // symmetric square root, used for sampling
};

/// Finite prior over K weight vectors with Gaussian observation noise.
struct DiscreteTaskSet {
    DiscreteTaskSet(std::vector<Vec> tasks, double noise_var);

    std::vector<Vec> tasks;
    double noise_var;

    Eigen::Index dim() const { return tasks.front().size(); }
};

/// The two-component mixture used in the GMM experiments: means (+-shift, 0, ...),
/// shared covariance equal to the identity with the top-left entry zeroed.
std::vector<GaussianPrior> gmm_pinned_first_coordinate(Eigen::Index d, double shift = 3.0);

}  // namespace icl
