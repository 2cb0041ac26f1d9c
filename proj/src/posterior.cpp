#include "icl/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <exception>
#include <limits>
#include <numeric>
#include <thread>
#include <type_traits>

#include <unsupported/Eigen/FFT>

#include "icl/bayes.hpp"
#include "icl/json_util.hpp"

namespace icl::posterior {

// ---------------------------------------------------------------------------
// Enumeration

ProductSupport ProductSupport::sign_vectors(int d) {
    if (d < 1) throw ConfigError("sign vector support: d must be >= 1");
    return {{-1.0, 1.0}, d, 1};
}

ProductSupport ProductSupport::z_task(int d) {
    if (d < 2 || d % 2 != 0) throw ConfigError("z task support: d must be even and >= 2");
    return {{-2.0, -1.0, 1.0, 2.0}, d / 2, 2};
}

std::uint64_t ProductSupport::size() const {
    std::uint64_t n = 1;
    const auto v = static_cast<std::uint64_t>(values.size());
    for (int i = 0; i < free_dim; ++i) {
        if (v != 0 && n > std::numeric_limits<std::uint64_t>::max() / v) return std::numeric_limits<std::uint64_t>::max();
        n *= v;
    }
    return n;
}

Vec ProductSupport::expand(const Vec& z) const {
    Vec w(dim());
    for (int r = 0; r < repeats; ++r) w.segment(static_cast<Eigen::Index>(r) * free_dim, free_dim) = z;
    return w;
}

namespace {

/// Streaming log-sum-exp weighted average.
class WeightedMean {
public:
    explicit WeightedMean(Eigen::Index dim) : sum_(Vec::Zero(dim)) {}

    void add(double log_weight, const Vec& v) {
        if (log_weight > top_) {
            const double scale = std::exp(top_ - log_weight);
            total_ *= scale;
            sum_ *= scale;
            top_ = log_weight;
        }
        const double e = std::exp(log_weight - top_);
        total_ += e;
        sum_ += e * v;
    }

    Vec mean() const {
        if (!(total_ > 0)) throw NumericError("enumeration: every support point has zero weight");
        return sum_ / total_;
    }

private:
    double top_ = -std::numeric_limits<double>::infinity();
    double total_ = 0.0;
    Vec sum_;
};

Vec enumerate_list(const std::vector<Vec>& support, const Mat& X, const Vec& y, double noise_var) {
    if (support.empty()) throw ConfigError("enumeration: empty support");
    if (support.size() > kMaxEnumeration)
        throw CapacityError("enumeration: support has " + std::to_string(support.size()) +
                            " points, above the 2^24 guard; use mcmc_pme instead");
    const Eigen::Index d = support.front().size();
    require_shape(X.rows() == 0 || X.cols() == d, "enumeration: X columns != support dimension");
    WeightedMean acc(d);
    for (const Vec& w : support) {
        require_shape(w.size() == d, "enumeration: support vectors differ in length");
        acc.add(X.rows() ? -(y - X * w).squaredNorm() / (2.0 * noise_var) : 0.0, w);
    }
    return acc.mean();
}

Vec enumerate_product(const ProductSupport& s, const Mat& X, const Vec& y, double noise_var) {
    if (s.values.empty() || s.free_dim < 1 || s.repeats < 1) throw ConfigError("enumeration: malformed product support");
    const std::uint64_t total = s.size();
    if (total > kMaxEnumeration)
        throw CapacityError("enumeration: support has " + std::to_string(total) +
                            " points, above the 2^24 guard; use mcmc_pme instead");
    require_shape(X.rows() == 0 || X.cols() == s.dim(), "enumeration: X columns != support dimension");
    const int m = s.free_dim;
    const auto nv = s.values.size();
    if (X.rows() == 0) {
        const double mean = std::accumulate(s.values.begin(), s.values.end(), 0.0) / static_cast<double>(nv);
        return Vec::Constant(s.dim(), mean);
    }
    // w = z repeated, so X w = Xz z with Xz the sum of the column blocks
    Mat Xz = Mat::Zero(X.rows(), m);
    for (int r = 0; r < s.repeats; ++r) Xz += X.middleCols(static_cast<Eigen::Index>(r) * m, m);

    std::vector<std::size_t> digit(static_cast<std::size_t>(m), 0);
    Vec z = Vec::Constant(m, s.values[0]);
    Vec resid = y - Xz * z;
    WeightedMean acc(m);
    for (std::uint64_t count = 0; count < total; ++count) {
        acc.add(-resid.squaredNorm() / (2.0 * noise_var), z);
        // odometer step with incremental residual update
        for (int j = 0; j < m; ++j) {
            const double old = z[j];
            auto& dj = digit[static_cast<std::size_t>(j)];
            const bool carry = dj + 1 == nv;
            dj = carry ? 0 : dj + 1;
            z[j] = s.values[dj];
            resid.noalias() -= (z[j] - old) * Xz.col(j);
            if (!carry) break;
        }
        if ((count & 1023) == 1023) resid = y - Xz * z;  // bound rounding drift
    }
    return s.expand(acc.mean());
}

}  // namespace

Vec enumerate_discrete_pme(const DiscreteSupport& support, const Mat& X0, const Vec& y0, double noise_var) {
    require_shape(X0.rows() == y0.size(), "enumeration: X rows != len(y)");
    if (!(noise_var > 0)) throw ConfigError("enumeration: likelihood variance must be > 0");
    const auto [X, y] = bayes::canonical_order(X0, y0);
    return std::visit(
        [&](const auto& s) -> Vec {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, ProductSupport>)
                return enumerate_product(s, X, y, noise_var);
            else
                return enumerate_list(s, X, y, noise_var);
        },
        support);
}

// ---------------------------------------------------------------------------
// Configuration and targets

void SamplerConfig::validate() const {
    if (burn_in < 0) throw ConfigError("sampler: burn_in must be >= 0");
    if (n_samples <= burn_in) throw ConfigError("sampler: n_samples must exceed burn_in");
    if (!(noise_var > 0)) throw ConfigError("sampler: likelihood variance must be > 0");
    if (!(step_size > 0)) throw ConfigError("sampler: step_size must be > 0");
    if (chains < 1) throw ConfigError("sampler: chains must be >= 1");
}

nlohmann::json SamplerConfig::to_json() const {
    return {{"n_samples", n_samples}, {"burn_in", burn_in}, {"step_size", step_size},
            {"noise_var", noise_var}, {"seed", seed},       {"chains", chains}};
}

nlohmann::json Diagnostics::to_json() const {
    return {{"acceptance_rate", acceptance_rate},
            {"min_ess", min_ess},
            {"max_rhat", max_rhat},
            {"ess", icl::to_json(ess)},
            {"rhat", icl::to_json(rhat)},
            {"mc_stderr", icl::to_json(mc_stderr)},
            {"converged", converged()},
            {"warnings", warnings}};
}

McmcTarget McmcTarget::gaussian(const GaussianPrior& prior, Move move) {
    if (move == Move::DiscreteProduct) throw ConfigError("gaussian target: discrete moves need a discrete prior");
    // whitened coordinates: w = mean + sqrt(cov) theta, theta ~ N(0, I)
    McmcTarget t;
    t.move = move;
    const auto d = static_cast<int>(prior.dim());
    t.state_dim = d;
    t.sample_prior = [d](Rng& rng) { return standard_normal(d, rng); };
    t.log_prior = [](const Vec& theta) { return -0.5 * theta.squaredNorm(); };
    t.to_weights = [mean = prior.mean(), S = prior.sqrt_cov()](const Vec& theta) -> Vec { return mean + S * theta; };
    t.prior_mean = Vec::Zero(d);
    t.prior_sqrt_cov = Mat::Identity(d, d);
    return t;
}

McmcTarget McmcTarget::low_rank(int q, int r, Move move) {
    if (q < 1 || r < 1 || r > q) throw ConfigError("low-rank target: need 1 <= r <= q");
    if (move == Move::DiscreteProduct) throw ConfigError("low-rank target: discrete moves need a discrete prior");
    McmcTarget t;
    t.move = move;
    const int n = 2 * q * r;
    t.state_dim = n;
    t.sample_prior = [n](Rng& rng) { return standard_normal(n, rng); };
    t.log_prior = [](const Vec& theta) { return -0.5 * theta.squaredNorm(); };
    t.to_weights = [q, r](const Vec& theta) -> Vec {
        using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
        const RowMat A = Eigen::Map<const RowMat>(theta.data(), q, r);
        const RowMat B = Eigen::Map<const RowMat>(theta.data() + q * r, q, r);
        const RowMat W = A * B.transpose();
        return Eigen::Map<const Vec>(W.data(), q * q);
    };
    t.prior_mean = Vec::Zero(n);
    t.prior_sqrt_cov = Mat::Identity(n, n);
    return t;
}

McmcTarget McmcTarget::discrete(const ProductSupport& support) {
    if (support.values.size() < 2 || support.free_dim < 1) throw ConfigError("discrete target: malformed support");
    McmcTarget t;
    t.move = Move::DiscreteProduct;
    t.state_dim = support.free_dim;
    t.values = support.values;
    t.sample_prior = [support](Rng& rng) {
        Vec z(support.free_dim);
        std::uniform_int_distribution<std::size_t> pick(0, support.values.size() - 1);
        for (int j = 0; j < support.free_dim; ++j) z[j] = support.values[pick(rng)];
        return z;
    };
    t.to_weights = [support](const Vec& z) { return support.expand(z); };
    return t;
}

McmcTarget McmcTarget::custom(int state_dim, std::function<Vec(Rng&)> sample_prior,
                              std::function<double(const Vec&)> log_prior) {
    if (state_dim < 1) throw ConfigError("custom target: state_dim must be >= 1");
    McmcTarget t;
    t.state_dim = state_dim;
    t.sample_prior = std::move(sample_prior);
    t.log_prior = std::move(log_prior);
    t.to_weights = [](const Vec& theta) { return theta; };
    return t;
}

// ---------------------------------------------------------------------------
// Chain diagnostics

namespace {

/// Autocovariance at lags 0..n-1 (biased, divided by n) via zero-padded FFT.
Vec autocovariance(const Vec& x) {
    const Eigen::Index n = x.size();
    Eigen::Index len = 1;
    while (len < 2 * n) len <<= 1;
    std::vector<double> buf(static_cast<std::size_t>(len), 0.0);
    const double mean = x.mean();
    for (Eigen::Index i = 0; i < n; ++i) buf[static_cast<std::size_t>(i)] = x[i] - mean;
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> freq;
    fft.fwd(freq, buf);
    for (auto& f : freq) f = std::norm(f);
    std::vector<double> back;
    fft.inv(back, freq);
    Vec out(n);
    for (Eigen::Index t = 0; t < n; ++t) out[t] = back[static_cast<std::size_t>(t)] / static_cast<double>(n);
    return out;
}

}  // namespace

ChainSummary summarize_chains(const Mat& draws) {
    if (draws.rows() < 1 || draws.cols() < 4) throw ConfigError("summarize_chains: need >= 1 chain of >= 4 draws");
    // split every chain in half
    const Eigen::Index n = draws.cols() / 2;
    const Eigen::Index M = 2 * draws.rows();
    Mat split(M, n);
    for (Eigen::Index c = 0; c < draws.rows(); ++c) {
        split.row(2 * c) = draws.row(c).head(n);
        split.row(2 * c + 1) = draws.row(c).segment(n, n);
    }
    const double nn = static_cast<double>(n);
    const Vec means = split.rowwise().mean();
    Vec vars(M);
    for (Eigen::Index c = 0; c < M; ++c) vars[c] = (split.row(c).array() - means[c]).square().sum() / (nn - 1.0);
    const double W = vars.mean();
    const double B = M > 1 ? nn * (means.array() - means.mean()).square().sum() / static_cast<double>(M - 1) : 0.0;
    const double var_plus = (nn - 1.0) / nn * W + B / nn;
    const double scale = std::max(1.0, means.cwiseAbs().maxCoeff());
    const double tiny = 1e-24 * scale * scale;

    ChainSummary out{1.0, static_cast<double>(M) * nn, var_plus};
    if (W <= tiny) {
        out.rhat = B <= tiny ? 1.0 : std::numeric_limits<double>::infinity();
        return out;
    }
    out.rhat = std::sqrt(var_plus / W);

    Vec mean_acov = Vec::Zero(n);
    for (Eigen::Index c = 0; c < M; ++c) mean_acov += autocovariance(split.row(c).transpose());
    mean_acov /= static_cast<double>(M);
    auto rho = [&](Eigen::Index t) { return 1.0 - (W - mean_acov[t]) / var_plus; };

    // Geyer initial monotone sequence
    double tau = -1.0;
    double prev_pair = std::numeric_limits<double>::infinity();
    for (Eigen::Index t = 0; t + 1 < n; t += 2) {
        double pair = rho(t) + rho(t + 1);
        if (pair <= 0) break;
        pair = std::min(pair, prev_pair);
        tau += 2.0 * pair;
        prev_pair = pair;
    }
    const double total = static_cast<double>(M) * nn;
    tau = std::max(tau, 1.0 / std::log10(std::max(total, 10.0)));
    out.ess = total / tau;
    return out;
}

// ---------------------------------------------------------------------------
// Metropolis chains

namespace {

struct ChainOutput {
    Mat draws;  // kept x dim(w)
    std::int64_t accepted = 0;
};

class Chain {
public:
    Chain(const McmcTarget& target, const Mat& X, const Vec& y, const SamplerConfig& cfg, std::uint64_t seed)
        : t_(target), X_(X), y_(y), cfg_(cfg), rng_(seed) {}

    ChainOutput run() {
        theta_ = t_.sample_prior(rng_);
        require_shape(theta_.size() == t_.state_dim, "mcmc: prior sample has wrong dimension");
        ll_ = log_likelihood(theta_);
        lp_ = t_.move == McmcTarget::Move::AdaptiveRandomWalk ? t_.log_prior(theta_) : 0.0;
        const int m = t_.state_dim;
        proposal_chol_ = Mat::Identity(m, m) * cfg_.step_size;

        const Eigen::Index kept = cfg_.n_samples - cfg_.burn_in;
        ChainOutput out;
        for (std::int64_t it = 0; it < cfg_.n_samples; ++it) {
            const bool accepted = step(it);
            if (it < cfg_.burn_in) {
                if (t_.move == McmcTarget::Move::AdaptiveRandomWalk) adapt(it, accepted);
                continue;
            }
            const Vec w = t_.to_weights(theta_);
            if (out.draws.size() == 0) out.draws.resize(kept, w.size());
            out.draws.row(it - cfg_.burn_in) = w.transpose();
            out.accepted += accepted;
        }
        return out;
    }

private:
    double log_likelihood(const Vec& theta) const {
        if (X_.rows() == 0) return 0.0;
        return -(y_ - X_ * t_.to_weights(theta)).squaredNorm() / (2.0 * cfg_.noise_var);
    }

    bool step(std::int64_t) {
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        Vec prop;
        double lp_prop = 0.0;
        switch (t_.move) {
            case McmcTarget::Move::AdaptiveRandomWalk:
                prop = theta_ + std::exp(log_lambda_) * (proposal_chol_ * standard_normal(theta_.size(), rng_));
                lp_prop = t_.log_prior(prop);
                break;
            case McmcTarget::Move::CrankNicolson: {
                const double beta = std::min(cfg_.step_size, 1.0);
                prop = t_.prior_mean + std::sqrt(1.0 - beta * beta) * (theta_ - t_.prior_mean) +
                       beta * (t_.prior_sqrt_cov * standard_normal(theta_.size(), rng_));
                break;
            }
            case McmcTarget::Move::DiscreteProduct:
                if (unif(rng_) < 0.5) {
                    prop = theta_;
                    std::uniform_int_distribution<Eigen::Index> coord(0, theta_.size() - 1);
                    const Eigen::Index j = coord(rng_);
                    std::vector<double> others;
                    for (double v : t_.values)
                        if (v != theta_[j]) others.push_back(v);
                    std::uniform_int_distribution<std::size_t> pick(0, others.size() - 1);
                    prop[j] = others[pick(rng_)];
                } else {
                    prop = t_.sample_prior(rng_);
                }
                break;
        }
        if (!std::isfinite(lp_prop) && t_.move == McmcTarget::Move::AdaptiveRandomWalk) return false;
        const double ll_prop = log_likelihood(prop);
        const double log_alpha = (ll_prop + lp_prop) - (ll_ + lp_);
        if (std::log(unif(rng_)) < log_alpha) {
            theta_ = std::move(prop);
            ll_ = ll_prop;
            lp_ = lp_prop;
            return true;
        }
        return false;
    }

    /// Robbins-Monro scale toward 0.234 acceptance plus an empirical
    /// covariance from the later half of the burn-in seen so far.
    void adapt(std::int64_t it, bool accepted) {
        log_lambda_ += ((accepted ? 1.0 : 0.0) - 0.234) / std::sqrt(static_cast<double>(it + 1));
        log_lambda_ = std::clamp(log_lambda_, -30.0, 10.0);
        history_.push_back(theta_);
        const auto n = static_cast<std::int64_t>(history_.size());
        const int m = t_.state_dim;
        if (n < std::max<std::int64_t>(200, 4 * m) || n % 100 != 0) return;
        const std::int64_t start = n / 2;
        Vec mean = Vec::Zero(m);
        for (std::int64_t i = start; i < n; ++i) mean += history_[static_cast<std::size_t>(i)];
        mean /= static_cast<double>(n - start);
        Mat C = Mat::Zero(m, m);
        for (std::int64_t i = start; i < n; ++i) {
            const Vec dv = history_[static_cast<std::size_t>(i)] - mean;
            C.noalias() += dv * dv.transpose();
        }
        C /= static_cast<double>(n - start - 1);
        const double jitter = 1e-10 * std::max(C.trace() / m, 1e-20);
        C.diagonal().array() += jitter;
        Eigen::LLT<Mat> llt(C * (2.38 * 2.38 / m));
        if (llt.info() != Eigen::Success) return;
        const Mat L = llt.matrixL();
        if (!L.allFinite() || L.diagonal().minCoeff() <= 0) return;
        if (!covariance_adapted_) log_lambda_ = 0.0;
        covariance_adapted_ = true;
        proposal_chol_ = L;
    }

    const McmcTarget& t_;
    const Mat& X_;
    const Vec& y_;
    const SamplerConfig& cfg_;
    Rng rng_;
    Vec theta_;
    double ll_ = 0.0;
    double lp_ = 0.0;
    double log_lambda_ = 0.0;
    bool covariance_adapted_ = false;
    Mat proposal_chol_;
    std::vector<Vec> history_;
};

}  // namespace

McmcResult mcmc_pme(const McmcTarget& target, const Mat& X0, const Vec& y0, const SamplerConfig& config) {
    config.validate();
    require_shape(X0.rows() == y0.size(), "mcmc: X rows != len(y)");
    if (!target.sample_prior || !target.to_weights) throw ConfigError("mcmc: target lacks a prior sampler");
    if (target.move == McmcTarget::Move::AdaptiveRandomWalk && !target.log_prior)
        throw ConfigError("mcmc: random walk needs a prior log density");
    if (target.move == McmcTarget::Move::CrankNicolson && target.prior_sqrt_cov.rows() != target.state_dim)
        throw ConfigError("mcmc: Crank-Nicolson moves need a Gaussian prior on the state");
    if (config.n_samples - config.burn_in < 4) throw ConfigError("mcmc: need at least 4 kept samples per chain");
    const auto [X, y] = bayes::canonical_order(X0, y0);

    std::vector<ChainOutput> outputs(static_cast<std::size_t>(config.chains));
    std::vector<std::exception_ptr> errors(outputs.size());
    std::vector<std::thread> workers;
    for (std::size_t c = 0; c < outputs.size(); ++c) {
        workers.emplace_back([&, c] {
            try {
                Chain chain(target, X, y, config, child_seed(config.seed, c));
                outputs[c] = chain.run();
            } catch (...) {
                errors[c] = std::current_exception();
            }
        });
    }
    for (auto& w : workers) w.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);

    const Eigen::Index kept = config.n_samples - config.burn_in;
    const Eigen::Index dim = outputs.front().draws.cols();
    McmcResult res;
    res.mean = Vec::Zero(dim);
    Diagnostics& dg = res.diagnostics;
    dg.ess.resize(dim);
    dg.rhat.resize(dim);
    dg.mc_stderr.resize(dim);
    std::int64_t accepted = 0;
    for (const auto& o : outputs) {
        res.mean += o.draws.colwise().sum().transpose();
        accepted += o.accepted;
    }
    const double total = static_cast<double>(kept) * config.chains;
    res.mean /= total;
    dg.acceptance_rate = static_cast<double>(accepted) / total;

    Mat per_chain(config.chains, kept);
    for (Eigen::Index j = 0; j < dim; ++j) {
        for (int c = 0; c < config.chains; ++c) per_chain.row(c) = outputs[static_cast<std::size_t>(c)].draws.col(j).transpose();
        const ChainSummary s = summarize_chains(per_chain);
        dg.ess[j] = s.ess;
        dg.rhat[j] = s.rhat;
        dg.mc_stderr[j] = std::sqrt(std::max(s.variance, 0.0) / s.ess);
    }
    dg.min_ess = dg.ess.minCoeff();
    dg.max_rhat = dg.rhat.maxCoeff();
    if (!dg.converged())
        dg.warnings.push_back("split R-hat " + std::to_string(dg.max_rhat) + " exceeds 1.1; chains have not mixed");
    if (dg.acceptance_rate < 0.01) dg.warnings.push_back("acceptance rate below 1%");
    return res;
}

McmcResult mcmc_pme(std::function<Vec(Rng&)> prior_sampler, std::function<double(const Vec&)> prior_log_density,
                    const Mat& X, const Vec& y, const SamplerConfig& config) {
    Rng probe(config.seed);
    const auto dim = static_cast<int>(prior_sampler(probe).size());
    return mcmc_pme(McmcTarget::custom(dim, std::move(prior_sampler), std::move(prior_log_density)), X, y, config);
}

}  // namespace icl::posterior
