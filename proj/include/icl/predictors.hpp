#pragma once

#include <optional>
#include <string>
#include <vector>

#include "icl/baselines.hpp"
#include "icl/bayes.hpp"
#include "icl/posterior.hpp"
#include "icl/predictor.hpp"
#include "icl/prior.hpp"
#include "icl/tasks.hpp"

/// Ready-made in-process predictors built from the Bayesian engine, the
/// convex baselines and the samplers.
namespace icl::bridge::predictors {

PredictorHandle zero();
/// prompt -> w, prediction w^T query.
PredictorHandle gaussian_pme(const GaussianPrior& prior, double noise_var);  // noise_var 0: noiseless limit
/// Gaussian prior over the coefficients of a feature expansion.
PredictorHandle gaussian_pme_features(const FeatureMap& phi, const GaussianPrior& prior, double noise_var);
PredictorHandle mixture_pme(const std::vector<GaussianPrior>& components, const std::vector<double>& alpha,
                            double noise_var = bayes::kEvidenceNoiseVar);
PredictorHandle mixture_pme_features(const FeatureMap& phi, const std::vector<GaussianPrior>& components,
                                     const std::vector<double>& alpha, double noise_var = bayes::kEvidenceNoiseVar);
PredictorHandle dmmse(const DiscreteTaskSet& tasks);
PredictorHandle ridge(double noise_var);
PredictorHandle ols();
PredictorHandle ols_features(const FeatureMap& phi);
PredictorHandle lasso_features(const FeatureMap& phi, double alpha);
PredictorHandle linf();
PredictorHandle nuclear(int q);
PredictorHandle tree(int depth);
PredictorHandle mlp(const baselines::MlpOptions& opts);
PredictorHandle enumeration(const posterior::DiscreteSupport& support, double noise_var = posterior::kSamplerNoiseVar);
PredictorHandle mcmc(const posterior::McmcTarget& target, const posterior::SamplerConfig& config);

/// Gaussian (or Gaussian-mixture) description of a family of functions that
/// are linear in `features`.
struct GaussianView {
    FeatureMap features;
    std::vector<GaussianPrior> components;
    std::vector<double> alpha;
};

/// Exact Gaussian view of a linear family, or nullopt when its prior is not a
/// Gaussian mixture (sign vectors, low rank, trees, nets, discrete task sets).
std::optional<GaussianView> gaussian_view(const FunctionFamilySpec& family);

/// Gaussian view of a whole mixture, when all families share a feature map
/// (Fourier families are embedded into the full basis of the largest N).
std::optional<GaussianView> gaussian_view(const MixtureSpec& mixture);

/// Bayes-optimal predictor for prompts drawn from `mixture`: closed form when
/// a Gaussian view exists, dMMSE for discrete task sets, exact enumeration for
/// small sign/Z supports and MCMC otherwise. Throws UnsupportedVariant for
/// trees and nets.
PredictorHandle bayes_optimal(const MixtureSpec& mixture, const posterior::SamplerConfig& sampler = {});

/// Parses "name[:arg[:arg...]]". Names: zero, ols, ridge:s2, gaussian-pme[:s2],
/// pme, ols-features, lasso[:alpha], linf, nuclear:q, tree:depth,
/// mlp[:hidden[:steps]], mcmc[:n_samples]. `pme`, `ols-features` and `lasso`
/// need the prompts' mixture.
PredictorHandle from_spec(const std::string& spec, const MixtureSpec* mixture = nullptr);

}  // namespace icl::bridge::predictors
