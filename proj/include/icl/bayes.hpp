#pragma once

#include <vector>

#include "icl/core.hpp"
#include "icl/prior.hpp"

namespace icl::bayes {

/// Observation variance used to regularize noiseless likelihoods when
/// computing evidences and mixture weights.
inline constexpr double kEvidenceNoiseVar = 1e-6;

/// Posterior mean mu + Sigma X^T (X Sigma X^T + eps2 I)^+ (y - X mu).
/// With eps2 -> 0 and prior N(0, I) this is the minimum-norm interpolant.
Vec gaussian_pme(const GaussianPrior& prior, const Mat& X, const Vec& y, double noise_var);

/// Noiseless limit eps2 -> 0 of gaussian_pme: mu + S (X S)^+ (y - X mu) with
/// S = Sigma^{1/2}, solved by SVD so the design's conditioning is not squared.
Vec gaussian_pme_noiseless(const GaussianPrior& prior, const Mat& X, const Vec& y);

/// log N(y; X mu, X Sigma X^T + eps2 I). Zero for an empty prompt.
double gaussian_log_evidence(const GaussianPrior& prior, const Mat& X, const Vec& y, double noise_var);

struct MixturePosterior {
    Vec beta;
    std::vector<Vec> component_means;
    Vec combined_mean;
};

/// PME under sum_i alpha_i N(mu_i, Sigma_i): beta_i is proportional to
/// alpha_i p_i(y | X), normalized in log space.
MixturePosterior mixture_pme(const std::vector<GaussianPrior>& components, const std::vector<double>& alpha,
                             const Mat& X, const Vec& y, double noise_var = kEvidenceNoiseVar);

/// PME under a uniform prior over a finite task set with Gaussian noise.
Vec dmmse_pme(const DiscreteTaskSet& tasks, const Mat& X, const Vec& y);

/// (X^T X + sigma2 I)^{-1} X^T y.
Vec ridge_pme(double noise_var, const Mat& X, const Vec& y);

/// Copies of (X, y) with the pairs in a canonical (lexicographic) order, so that
/// estimators are exactly invariant to the order of in-context examples.
std::pair<Mat, Vec> canonical_order(const Mat& X, const Vec& y);

}  // namespace icl::bayes
