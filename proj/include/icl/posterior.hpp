#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "icl/core.hpp"
#include "icl/prior.hpp"

namespace icl::posterior {

/// Likelihood variance used by the samplers unless configured otherwise.
inline constexpr double kSamplerNoiseVar = 1e-4;
/// Largest support enumerate_discrete_pme accepts.
inline constexpr std::uint64_t kMaxEnumeration = std::uint64_t{1} << 24;

/// w = z repeated `repeats` times, z ranging over values^free_dim.
/// Sign vectors: values {-1, 1}, repeats 1. Z task: values {-2, -1, 1, 2}, repeats 2.
struct ProductSupport {
    std::vector<double> values;
    int free_dim = 0;
    int repeats = 1;

    static ProductSupport sign_vectors(int d);
    static ProductSupport z_task(int d);

    int dim() const { return free_dim * repeats; }
    /// values.size()^free_dim, saturating at UINT64_MAX.
    std::uint64_t size() const;
    Vec expand(const Vec& z) const;
};

using DiscreteSupport = std::variant<std::vector<Vec>, ProductSupport>;

/// Exact PME under a uniform prior on the support and likelihood
/// exp(-||y - X w||^2 / (2 noise_var)). Throws CapacityError above kMaxEnumeration.
Vec enumerate_discrete_pme(const DiscreteSupport& support, const Mat& X, const Vec& y,
                           double noise_var = kSamplerNoiseVar);

struct SamplerConfig {
    std::int64_t n_samples = 20000;  // iterations per chain, burn-in included
    std::int64_t burn_in = 5000;
    double step_size = 0.1;
    double noise_var = kSamplerNoiseVar;
    std::uint64_t seed = 0;
    int chains = 4;

    void validate() const;
    nlohmann::json to_json() const;
};

/// Target for the Metropolis sampler. The chain state is theta; the
/// likelihood sees to_weights(theta).
struct McmcTarget {
    enum class Move {
        AdaptiveRandomWalk,  // Gaussian random walk, covariance adapted during burn-in
        CrankNicolson,       // pCN, requires a Gaussian prior on theta
        DiscreteProduct,     // single-site resampling mixed with independent prior draws
    };

    Move move = Move::AdaptiveRandomWalk;
    int state_dim = 0;
    std::function<Vec(Rng&)> sample_prior;
    /// Needed by AdaptiveRandomWalk only.
    std::function<double(const Vec&)> log_prior;
    std::function<Vec(const Vec&)> to_weights;
    /// pCN prior (theta ~ N(mean, cov)).
    Vec prior_mean;
    Mat prior_sqrt_cov;
    /// Value set per coordinate for DiscreteProduct.
    std::vector<double> values;

    static McmcTarget gaussian(const GaussianPrior& prior, Move move = Move::AdaptiveRandomWalk);
    /// theta = (A, B) row-major, A, B in R^{q x r} standard normal; w = vec(A B^T).
    static McmcTarget low_rank(int q, int r, Move move = Move::AdaptiveRandomWalk);
    static McmcTarget discrete(const ProductSupport& support);
    /// Generic continuous prior given by a sampler and a log density.
    static McmcTarget custom(int state_dim, std::function<Vec(Rng&)> sample_prior,
                             std::function<double(const Vec&)> log_prior);
};

struct Diagnostics {
    double acceptance_rate = 0.0;
    double min_ess = 0.0;
    double max_rhat = 1.0;
    Vec ess;
    Vec rhat;
    /// Monte-Carlo standard error of each posterior-mean coordinate.
    Vec mc_stderr;
    std::vector<std::string> warnings;

    bool converged() const { return max_rhat <= 1.1; }
    nlohmann::json to_json() const;
};

struct McmcResult {
    Vec mean;
    Diagnostics diagnostics;
};

/// Post-burn-in sample mean of w over `chains` independent chains run in parallel.
McmcResult mcmc_pme(const McmcTarget& target, const Mat& X, const Vec& y, const SamplerConfig& config = {});

/// Random-walk variant for an arbitrary continuous prior.
McmcResult mcmc_pme(std::function<Vec(Rng&)> prior_sampler, std::function<double(const Vec&)> prior_log_density,
                    const Mat& X, const Vec& y, const SamplerConfig& config = {});

/// Split-chain R-hat and multi-chain effective sample size of one scalar
/// quantity; `draws` holds one row per chain.
struct ChainSummary {
    double rhat;
    double ess;
    double variance;
};
ChainSummary summarize_chains(const Mat& draws);

}  // namespace icl::posterior
