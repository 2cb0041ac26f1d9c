#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "icl/core.hpp"
#include "icl/feature_map.hpp"

namespace icl::baselines {

struct SolverReport {
    Vec solution;
    double objective = 0.0;
    /// ||X w - y||_inf for constrained solvers, ||X w - y||_2 for least squares.
    double feasibility_residual = 0.0;
    std::int64_t iterations = 0;
    bool converged = false;
    /// Solver-specific optimality measure: normal-equation residual (OLS),
    /// max KKT violation (Lasso), duality gap (L-inf LP), max(primal, dual)
    /// residual (ADMM).
    double certificate = 0.0;
};

/// Least-squares solution of minimum L2 norm (SVD based).
SolverReport ols_min_norm(const Mat& X, const Vec& y);

/// ols_min_norm on the feature-expanded design matrix.
SolverReport ols_on_features(const FeatureMap& phi, const Mat& X, const Vec& y);

struct LassoOptions {
    double tol = 1e-10;             // max coordinate update at convergence
    std::int64_t max_sweeps = 100000;
};

/// Penalty used for the multi-task monomial and Fourier comparisons.
inline constexpr double kLassoAlphaMultitask = 0.1;
/// Penalty used for the single fixed-S monomial task.
inline constexpr double kLassoAlphaSingleMonomial = 0.01;

/// Cyclic coordinate descent on 1/2 ||y - X w||^2 + alpha ||w||_1.
/// `objective_trace`, when given, receives the objective after every sweep.
SolverReport lasso(const Mat& X, const Vec& y, double alpha, const LassoOptions& opts = {},
                   std::vector<double>* objective_trace = nullptr);

/// Max KKT violation of w for the Lasso problem.
double lasso_kkt_violation(const Mat& X, const Vec& y, const Vec& w, double alpha);

/// One tuning problem: fit on (X, y), score squared error on (X_eval, y_eval).
struct TuningTask {
    Mat X;
    Vec y;
    Mat X_eval;
    Vec y_eval;
};

struct LassoTuning {
    double alpha;
    std::vector<double> grid_losses;  // mean squared error per grid entry
};

LassoTuning lasso_tune(std::span<const TuningTask> tasks, std::span<const double> grid,
                       const LassoOptions& opts = {});

/// Tuning batches given as whole prompts: each is fit on all rows but the last
/// and scored on the last.
double lasso_tune(std::span<const Mat> X_batches, std::span<const Vec> y_batches, std::span<const double> grid);

/// min ||w||_inf s.t. X w = y, solved as an LP by two-phase primal simplex
/// with Bland's rule. Throws InfeasibleError if the constraints are inconsistent.
SolverReport linf_min(const Mat& X, const Vec& y);

struct AdmmOptions {
    double rho = 1.0;
    double tol = 1e-8;
    std::int64_t max_iter = 200000;
};

/// min ||W||_* s.t. <X_i, W> = y_i with X_i the row-major q x q reshape of row i.
/// solution holds vec(W) (row-major).
SolverReport nuclear_norm_min(const Mat& X, const Vec& y, int q, const AdmmOptions& opts = {});

/// Nuclear norm of the row-major q x q reshape of w.
double nuclear_norm(const Vec& w, int q);

/// Regression tree grown greedily by variance reduction.
class TreePredictor {
public:
    double operator()(const Vec& x) const;
    int depth() const;
    std::size_t leaf_count() const;

private:
    struct Node {
        int feature = -1;  // -1 marks a leaf
        double threshold = 0.0;
        double value = 0.0;
        int left = -1;
        int right = -1;
    };
    std::vector<Node> nodes_;

    friend TreePredictor greedy_tree_fit(const Mat& X, const Vec& y, int depth);
};

TreePredictor greedy_tree_fit(const Mat& X, const Vec& y, int depth);

/// Parameters of f(x) = a^T ReLU(W x + b) + c.
struct MlpParams {
    Mat W;
    Vec b;
    Vec a;
    double c = 0.0;

    static MlpParams init(int d, int hidden, std::uint64_t seed);
    double operator()(const Vec& x) const;
};

/// Mean squared error and its gradient with respect to every parameter.
double mlp_loss_and_grad(const MlpParams& params, const Mat& X, const Vec& y, MlpParams* grad);

struct MlpOptions {
    int hidden = 100;
    int steps = 100;
    double lr = 5e-3;
    std::uint64_t seed = 0;
};

struct MlpFit {
    MlpParams params;
    double initial_loss;
    double final_loss;

    double operator()(const Vec& x) const { return params(x); }
};

/// Full-batch Adam on the squared error. Throws NumericError on divergence.
MlpFit mlp_fit(const Mat& X, const Vec& y, const MlpOptions& opts = {});

}  // namespace icl::baselines
