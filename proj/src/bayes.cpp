#include "icl/bayes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "icl/linalg.hpp"

namespace icl::bayes {

namespace {

void check_prompt(const Mat& X, const Vec& y, Eigen::Index d) {
    require_shape(X.rows() == y.size(), "prompt: X has " + std::to_string(X.rows()) + " rows but y has " +
                                            std::to_string(y.size()) + " entries");
    require_shape(X.rows() == 0 || X.cols() == d, "prompt: X has " + std::to_string(X.cols()) +
                                                      " columns, estimator expects " + std::to_string(d));
}

}  // namespace

std::pair<Mat, Vec> canonical_order(const Mat& X, const Vec& y) {
    std::vector<Eigen::Index> order(static_cast<std::size_t>(X.rows()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        for (Eigen::Index j = 0; j < X.cols(); ++j)
            if (X(a, j) != X(b, j)) return X(a, j) < X(b, j);
        return y[a] < y[b];
    });
    Mat Xs(X.rows(), X.cols());
    Vec ys(y.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        Xs.row(static_cast<Eigen::Index>(i)) = X.row(order[i]);
        ys[static_cast<Eigen::Index>(i)] = y[order[i]];
    }
    return {std::move(Xs), std::move(ys)};
}

Vec gaussian_pme(const GaussianPrior& prior, const Mat& X0, const Vec& y0, double noise_var) {
    check_prompt(X0, y0, prior.dim());
    if (!(noise_var > 0)) throw ConfigError("gaussian_pme: likelihood variance must be > 0");
    if (X0.rows() == 0) return prior.mean();
    auto [X, y] = canonical_order(X0, y0);
    const Mat SXt = prior.cov() * X.transpose();
    Mat C = X * SXt;
    C.diagonal().array() += noise_var;
    const Vec r = y - X * prior.mean();
    return prior.mean() + SXt * linalg::sym_pinv_solve(C, r);
}

Vec gaussian_pme_noiseless(const GaussianPrior& prior, const Mat& X0, const Vec& y0) {
    check_prompt(X0, y0, prior.dim());
    if (X0.rows() == 0) return prior.mean();
    auto [X, y] = canonical_order(X0, y0);
    const Mat& S = prior.sqrt_cov();
    return prior.mean() + S * linalg::min_norm_lstsq(X * S, y - X * prior.mean());
}

double gaussian_log_evidence(const GaussianPrior& prior, const Mat& X0, const Vec& y0, double noise_var) {
    check_prompt(X0, y0, prior.dim());
    if (!(noise_var > 0)) throw ConfigError("gaussian_log_evidence: likelihood variance must be > 0");
    if (!X0.allFinite() || !y0.allFinite()) throw NumericError("gaussian_log_evidence: non-finite prompt");
    if (X0.rows() == 0) return 0.0;
    auto [X, y] = canonical_order(X0, y0);
    Mat C = X * prior.cov() * X.transpose();
    C.diagonal().array() += noise_var;
    Eigen::SelfAdjointEigenSolver<Mat> es(C);
    if (es.info() != Eigen::Success) throw NumericError("gaussian_log_evidence: eigendecomposition failed");
    const Vec r = y - X * prior.mean();
    const Vec proj = es.eigenvectors().transpose() * r;
    double quad = 0.0;
    double logdet = 0.0;
    for (Eigen::Index i = 0; i < proj.size(); ++i) {
        // C >= noise_var * I, so every eigenvalue is strictly positive up to rounding
        const double lambda = std::max(es.eigenvalues()[i], noise_var * 0.5);
        quad += proj[i] * proj[i] / lambda;
        logdet += std::log(lambda);
    }
    const double k = static_cast<double>(X.rows());
    return -0.5 * (quad + logdet + k * std::log(2.0 * std::numbers::pi));
}

MixturePosterior mixture_pme(const std::vector<GaussianPrior>& components, const std::vector<double>& alpha,
                             const Mat& X, const Vec& y, double noise_var) {
    if (components.empty()) throw ConfigError("mixture_pme: no components");
    if (components.size() != alpha.size()) throw ConfigError("mixture_pme: |components| != |alpha|");
    const double total = std::accumulate(alpha.begin(), alpha.end(), 0.0);
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("mixture_pme: alpha must sum to 1");
    for (const auto& c : components)
        require_shape(c.dim() == components.front().dim(), "mixture_pme: components differ in dimension");

    const std::size_t m = components.size();
    MixturePosterior post;
    post.beta.resize(static_cast<Eigen::Index>(m));
    Vec logw(static_cast<Eigen::Index>(m));
    for (std::size_t i = 0; i < m; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        logw[ii] = alpha[i] > 0 ? std::log(alpha[i]) + gaussian_log_evidence(components[i], X, y, noise_var)
                                : -std::numeric_limits<double>::infinity();
        post.component_means.push_back(gaussian_pme(components[i], X, y, noise_var));
    }
    const double top = logw.maxCoeff();
    if (!std::isfinite(top)) throw NumericError("mixture_pme: every component has zero posterior weight");
    for (Eigen::Index i = 0; i < logw.size(); ++i) post.beta[i] = std::exp(logw[i] - top);
    post.beta /= post.beta.sum();

    post.combined_mean = Vec::Zero(components.front().dim());
    for (std::size_t i = 0; i < m; ++i) post.combined_mean += post.beta[static_cast<Eigen::Index>(i)] * post.component_means[i];
    return post;
}

Vec dmmse_pme(const DiscreteTaskSet& tasks, const Mat& X0, const Vec& y0) {
    check_prompt(X0, y0, tasks.dim());
    const auto K = static_cast<Eigen::Index>(tasks.tasks.size());
    Mat W(K, tasks.dim());
    for (Eigen::Index j = 0; j < K; ++j) W.row(j) = tasks.tasks[static_cast<std::size_t>(j)].transpose();
    if (X0.rows() == 0) return W.colwise().mean().transpose();
    auto [X, y] = canonical_order(X0, y0);
    // residuals: K x k
    Mat R = (W * X.transpose()).rowwise() - y.transpose();
    Vec logits = -R.rowwise().squaredNorm() / (2.0 * tasks.noise_var);
    logits.array() -= logits.maxCoeff();
    Vec p = logits.array().exp();
    p /= p.sum();
    return W.transpose() * p;
}

Vec ridge_pme(double noise_var, const Mat& X0, const Vec& y0) {
    if (!(noise_var > 0)) throw ConfigError("ridge_pme: noise variance must be > 0");
    require_shape(X0.rows() == y0.size(), "ridge_pme: X rows != len(y)");
    const Eigen::Index d = X0.cols();
    if (X0.rows() == 0) return Vec::Zero(d);
    auto [X, y] = canonical_order(X0, y0);
    Mat A = X.transpose() * X;
    A.diagonal().array() += noise_var;
    return A.ldlt().solve(X.transpose() * y);
}

}  // namespace icl::bayes
