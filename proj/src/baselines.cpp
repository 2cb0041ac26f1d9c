#include "icl/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

#include "icl/bayes.hpp"
#include "icl/linalg.hpp"

namespace icl::baselines {

SolverReport ols_min_norm(const Mat& X0, const Vec& y0) {
    require_shape(X0.rows() == y0.size(), "ols: X rows != len(y)");
    const auto [X, y] = bayes::canonical_order(X0, y0);
    SolverReport rep;
    rep.solution = linalg::min_norm_lstsq(X, y);
    const Vec r = X * rep.solution - y;
    rep.objective = r.squaredNorm();
    rep.feasibility_residual = r.norm();
    rep.certificate = X.rows() ? (X.transpose() * r).cwiseAbs().maxCoeff() : 0.0;
    rep.iterations = 1;
    rep.converged = true;
    return rep;
}

SolverReport ols_on_features(const FeatureMap& phi, const Mat& X, const Vec& y) {
    require_shape(X.rows() == 0 || X.cols() == phi.input_dim(),
                  "ols_on_features: inputs have " + std::to_string(X.cols()) + " columns, feature map expects " +
                      std::to_string(phi.input_dim()));
    if (X.rows() == 0) return ols_min_norm(Mat(0, phi.size()), y);
    return ols_min_norm(phi.expand(X), y);
}

// ---------------------------------------------------------------------------
// Lasso

namespace {

double soft_threshold(double v, double t) {
    if (v > t) return v - t;
    if (v < -t) return v + t;
    return 0.0;
}

}  // namespace

double lasso_kkt_violation(const Mat& X, const Vec& y, const Vec& w, double alpha) {
    const Vec g = X.transpose() * (y - X * w);
    double worst = 0.0;
    for (Eigen::Index j = 0; j < w.size(); ++j) {
        double v = w[j] != 0.0 ? std::abs(g[j] - alpha * (w[j] > 0 ? 1.0 : -1.0))
                               : std::max(0.0, std::abs(g[j]) - alpha);
        worst = std::max(worst, v);
    }
    return worst;
}

SolverReport lasso(const Mat& X0, const Vec& y0, double alpha, const LassoOptions& opts,
                   std::vector<double>* objective_trace) {
    require_shape(X0.rows() == y0.size(), "lasso: X rows != len(y)");
    const auto [X, y] = bayes::canonical_order(X0, y0);
    if (!(alpha >= 0)) throw ConfigError("lasso: alpha must be >= 0");
    const Eigen::Index d = X.cols();
    SolverReport rep;
    Vec w = Vec::Zero(d);
    Vec r = y;
    const Vec col_sq = X.colwise().squaredNorm();
    auto objective = [&] { return 0.5 * r.squaredNorm() + alpha * w.lpNorm<1>(); };

    for (rep.iterations = 0; rep.iterations < opts.max_sweeps;) {
        double max_step = 0.0;
        for (Eigen::Index j = 0; j < d; ++j) {
            if (col_sq[j] == 0.0) continue;
            const double rho = X.col(j).dot(r) + col_sq[j] * w[j];
            const double next = soft_threshold(rho, alpha) / col_sq[j];
            const double step = next - w[j];
            if (step != 0.0) {
                r.noalias() -= step * X.col(j);
                w[j] = next;
                max_step = std::max(max_step, std::abs(step));
            }
        }
        ++rep.iterations;
        if (objective_trace) objective_trace->push_back(objective());
        if (max_step < opts.tol) {
            rep.converged = true;
            break;
        }
    }
    if (!w.allFinite()) throw NumericError("lasso: non-finite iterate");
    rep.objective = objective();
    rep.feasibility_residual = r.norm();
    rep.certificate = lasso_kkt_violation(X, y, w, alpha);
    rep.solution = std::move(w);
    return rep;
}

LassoTuning lasso_tune(std::span<const TuningTask> tasks, std::span<const double> grid, const LassoOptions& opts) {
    if (grid.empty()) throw ConfigError("lasso_tune: empty grid");
    LassoTuning out{grid.front(), {}};
    if (grid.size() == 1) {
        out.grid_losses.push_back(0.0);
        return out;
    }
    double best = std::numeric_limits<double>::infinity();
    for (double alpha : grid) {
        double sum = 0.0;
        std::size_t count = 0;
        for (const auto& t : tasks) {
            Vec w = lasso(t.X, t.y, alpha, opts).solution;
            sum += (t.X_eval * w - t.y_eval).squaredNorm();
            count += static_cast<std::size_t>(t.y_eval.size());
        }
        const double loss = count ? sum / static_cast<double>(count) : 0.0;
        out.grid_losses.push_back(loss);
        if (loss < best) {
            best = loss;
            out.alpha = alpha;
        }
    }
    return out;
}

double lasso_tune(std::span<const Mat> X_batches, std::span<const Vec> y_batches, std::span<const double> grid) {
    require_shape(X_batches.size() == y_batches.size(), "lasso_tune: batch count mismatch");
    std::vector<TuningTask> tasks;
    for (std::size_t i = 0; i < X_batches.size(); ++i) {
        const Mat& X = X_batches[i];
        const Vec& y = y_batches[i];
        require_shape(X.rows() == y.size() && X.rows() >= 1, "lasso_tune: malformed batch");
        const Eigen::Index k = X.rows() - 1;
        tasks.push_back({X.topRows(k), y.head(k), X.bottomRows(1), y.tail(1)});
    }
    return lasso_tune(tasks, grid).alpha;
}

// ---------------------------------------------------------------------------
// Simplex for the L-inf problem

namespace {

struct LpSolution {
    Vec x;
    double dual_gap;
    double dual_infeasibility;
    std::int64_t iterations;
};

class Tableau {
public:
    Tableau(Mat T, std::vector<int> basis) : T_(std::move(T)), basis_(std::move(basis)) {}

    Eigen::Index rows() const { return T_.rows() - 1; }
    Eigen::Index rhs_col() const { return T_.cols() - 1; }

    void pivot(Eigen::Index row, Eigen::Index col) {
        T_.row(row) /= T_(row, col);
        for (Eigen::Index i = 0; i < T_.rows(); ++i) {
            if (i == row) continue;
            const double f = T_(i, col);
            if (f != 0.0) T_.row(i) -= f * T_.row(row);
        }
        basis_[static_cast<std::size_t>(row)] = static_cast<int>(col);
        ++iterations;
    }

    /// Bland's rule over columns [0, ncols). Returns false if unbounded.
    bool optimize(Eigen::Index ncols, double tol) {
        for (;;) {
            Eigen::Index enter = -1;
            for (Eigen::Index j = 0; j < ncols; ++j)
                if (T_(rows(), j) < -tol) {
                    enter = j;
                    break;
                }
            if (enter < 0) return true;
            Eigen::Index leave = -1;
            double best = std::numeric_limits<double>::infinity();
            for (Eigen::Index i = 0; i < rows(); ++i) {
                const double a = T_(i, enter);
                if (a <= tol) continue;
                const double ratio = T_(i, rhs_col()) / a;
                if (ratio < best - 1e-12 ||
                    (ratio <= best + 1e-12 && leave >= 0 &&
                     basis_[static_cast<std::size_t>(i)] < basis_[static_cast<std::size_t>(leave)])) {
                    best = std::min(best, ratio);
                    leave = i;
                }
            }
            if (leave < 0) return false;
            pivot(leave, enter);
        }
    }

    Mat& data() { return T_; }
    std::vector<int>& basis() { return basis_; }
    std::int64_t iterations = 0;

private:
    Mat T_;
    std::vector<int> basis_;
};

/// min c^T x s.t. A x = b, x >= 0 (two-phase, Bland's rule).
LpSolution simplex_standard(Mat A, Vec b, const Vec& c) {
    const Eigen::Index m = A.rows(), n = A.cols();
    for (Eigen::Index i = 0; i < m; ++i)
        if (b[i] < 0) {
            A.row(i) *= -1.0;
            b[i] = -b[i];
        }
    const double scale = std::max({1.0, A.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff()});
    const double tol = 1e-10 * scale;

    Mat T = Mat::Zero(m + 1, n + m + 1);
    T.topLeftCorner(m, n) = A;
    T.block(0, n, m, m).setIdentity();
    T.col(n + m).head(m) = b;
    // phase-1 reduced costs: minimize the sum of artificials
    T.row(m).head(n) = -A.colwise().sum();
    T(m, n + m) = -b.sum();
    std::vector<int> basis(static_cast<std::size_t>(m));
    std::iota(basis.begin(), basis.end(), static_cast<int>(n));
    Tableau tab(std::move(T), std::move(basis));
    tab.optimize(n + m, tol);

    const double phase1 = -tab.data()(m, n + m);
    if (phase1 > 1e-8 * std::max(1.0, b.lpNorm<1>()))
        throw InfeasibleError("linf_min: constraints X w = y are infeasible", phase1);

    // drive artificials out of the basis; rows where that is impossible are redundant
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < m; ++i) {
        if (tab.basis()[static_cast<std::size_t>(i)] < n) {
            keep.push_back(i);
            continue;
        }
        Eigen::Index col = -1;
        for (Eigen::Index j = 0; j < n; ++j)
            if (std::abs(tab.data()(i, j)) > tol) {
                col = j;
                break;
            }
        if (col >= 0) {
            tab.pivot(i, col);
            keep.push_back(i);
        }
    }

    // phase 2 on the kept rows and original columns
    const auto mk = static_cast<Eigen::Index>(keep.size());
    Mat T2 = Mat::Zero(mk + 1, n + 1);
    std::vector<int> basis2;
    for (Eigen::Index r = 0; r < mk; ++r) {
        T2.row(r).head(n) = tab.data().row(keep[static_cast<std::size_t>(r)]).head(n);
        T2(r, n) = tab.data()(keep[static_cast<std::size_t>(r)], n + m);
        basis2.push_back(tab.basis()[static_cast<std::size_t>(keep[static_cast<std::size_t>(r)])]);
    }
    T2.row(mk).head(n) = c.transpose();
    for (Eigen::Index r = 0; r < mk; ++r) {
        const double cb = c[basis2[static_cast<std::size_t>(r)]];
        if (cb != 0.0) T2.row(mk) -= cb * T2.row(r);
    }
    Tableau tab2(std::move(T2), std::move(basis2));
    tab2.iterations = tab.iterations;
    if (!tab2.optimize(n, tol)) throw NumericError("linf_min: LP is unbounded");

    // recompute the basic solution and the duals from the original data
    Mat B(mk, mk);
    Vec bk(mk), cB(mk);
    Mat Ak(mk, n);
    for (Eigen::Index r = 0; r < mk; ++r) {
        Ak.row(r) = A.row(keep[static_cast<std::size_t>(r)]);
        bk[r] = b[keep[static_cast<std::size_t>(r)]];
    }
    for (Eigen::Index r = 0; r < mk; ++r) {
        const int col = tab2.basis()[static_cast<std::size_t>(r)];
        B.col(r) = Ak.col(col);
        cB[r] = c[col];
    }
    LpSolution sol;
    sol.x = Vec::Zero(n);
    if (mk > 0) {
        Eigen::FullPivLU<Mat> lu(B);
        Vec xB = lu.solve(bk);
        for (Eigen::Index r = 0; r < mk; ++r) sol.x[tab2.basis()[static_cast<std::size_t>(r)]] = xB[r];
        Vec dual = lu.transpose().solve(cB);
        Vec reduced = c - Ak.transpose() * dual;
        sol.dual_infeasibility = std::max(0.0, -reduced.minCoeff());
        sol.dual_gap = std::abs(c.dot(sol.x) - bk.dot(dual));
    } else {
        sol.dual_infeasibility = std::max(0.0, -c.minCoeff());
        sol.dual_gap = 0.0;
    }
    sol.iterations = tab2.iterations;
    return sol;
}

}  // namespace

SolverReport linf_min(const Mat& X0, const Vec& y0) {
    require_shape(X0.rows() == y0.size(), "linf_min: X rows != len(y)");
    const auto [X, y] = bayes::canonical_order(X0, y0);
    const Eigen::Index k = X.rows(), d = X.cols();
    SolverReport rep;
    if (k == 0) {
        rep.solution = Vec::Zero(d);
        rep.converged = true;
        return rep;
    }
    // variables z = [t, a (d), s (d)] >= 0 with w = t 1 - a and 2t - a - s = 0 (w >= -t)
    const Eigen::Index n = 2 * d + 1;
    Mat A = Mat::Zero(k + d, n);
    Vec b = Vec::Zero(k + d);
    A.block(0, 0, k, 1) = X.rowwise().sum();
    A.block(0, 1, k, d) = -X;
    b.head(k) = y;
    for (Eigen::Index i = 0; i < d; ++i) {
        A(k + i, 0) = 2.0;
        A(k + i, 1 + i) = -1.0;
        A(k + i, 1 + d + i) = -1.0;
    }
    Vec c = Vec::Zero(n);
    c[0] = 1.0;

    LpSolution lp = simplex_standard(A, b, c);
    const double t = lp.x[0];
    rep.solution = Vec::Constant(d, t) - lp.x.segment(1, d);
    rep.objective = rep.solution.cwiseAbs().maxCoeff();
    rep.feasibility_residual = (X * rep.solution - y).cwiseAbs().maxCoeff();
    rep.iterations = lp.iterations;
    rep.certificate = std::max(lp.dual_gap, lp.dual_infeasibility);
    rep.converged = rep.certificate <= 1e-8;
    return rep;
}

// ---------------------------------------------------------------------------
// Nuclear norm ADMM

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Vec svt(const Vec& v, int q, double tau) {
    RowMat M = Eigen::Map<const RowMat>(v.data(), q, q);
    Eigen::JacobiSVD<Mat> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Vec s = (svd.singularValues().array() - tau).cwiseMax(0.0);
    RowMat out = svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
    return Eigen::Map<const Vec>(out.data(), q * q);
}

}  // namespace

double nuclear_norm(const Vec& w, int q) {
    require_shape(w.size() == static_cast<Eigen::Index>(q) * q, "nuclear_norm: length != q^2");
    RowMat M = Eigen::Map<const RowMat>(w.data(), q, q);
    return Eigen::JacobiSVD<Mat>(M).singularValues().sum();
}

SolverReport nuclear_norm_min(const Mat& X0, const Vec& y0, int q, const AdmmOptions& opts) {
    require_shape(X0.rows() == y0.size(), "nuclear_norm_min: X rows != len(y)");
    const auto [X, y] = bayes::canonical_order(X0, y0);
    if (q < 1 || X.cols() != static_cast<Eigen::Index>(q) * q)
        throw ShapeError("nuclear_norm_min: need d = q^2 columns");
    const Eigen::Index d = X.cols();
    SolverReport rep;
    if (X.rows() == 0) {
        rep.solution = Vec::Zero(d);
        rep.converged = true;
        return rep;
    }

    // affine projection onto {w : X w = y}: w = v - V_r V_r^T v + X^+ y
    Eigen::JacobiSVD<Mat> svd(X, Eigen::ComputeFullV);
    const Eigen::Index r = linalg::rank(X);
    const Mat Vr = svd.matrixV().leftCols(r);
    const Vec w0 = linalg::min_norm_lstsq(X, y);
    auto project = [&](const Vec& v) -> Vec { return v - Vr * (Vr.transpose() * v) + w0; };

    double rho = opts.rho;
    Vec z = w0, u = Vec::Zero(d), w = w0;
    for (rep.iterations = 1; rep.iterations <= opts.max_iter; ++rep.iterations) {
        w = project(z - u);
        const Vec z_prev = z;
        z = svt(w + u, static_cast<int>(q), 1.0 / rho);
        u += w - z;
        const double primal = (w - z).norm();
        const double dual = rho * (z - z_prev).norm();
        rep.certificate = std::max(primal, dual);
        if (primal <= opts.tol && dual <= opts.tol) {
            rep.converged = true;
            break;
        }
        if (primal > 10.0 * dual) {
            rho *= 2.0;
            u /= 2.0;
        } else if (dual > 10.0 * primal) {
            rho /= 2.0;
            u *= 2.0;
        }
    }
    rep.iterations = std::min(rep.iterations, opts.max_iter);
    rep.solution = project(z);
    if (!rep.solution.allFinite()) throw NumericError("nuclear_norm_min: non-finite iterate");
    rep.objective = nuclear_norm(rep.solution, q);
    rep.feasibility_residual = (X * rep.solution - y).cwiseAbs().maxCoeff();
    return rep;
}

// ---------------------------------------------------------------------------
// Greedy regression tree

double TreePredictor::operator()(const Vec& x) const {
    if (nodes_.empty()) return 0.0;
    int i = 0;
    while (nodes_[static_cast<std::size_t>(i)].feature >= 0) {
        const Node& n = nodes_[static_cast<std::size_t>(i)];
        require_shape(n.feature < x.size(), "tree predictor: input dimension mismatch");
        i = x[n.feature] <= n.threshold ? n.left : n.right;
    }
    return nodes_[static_cast<std::size_t>(i)].value;
}

std::size_t TreePredictor::leaf_count() const {
    return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.feature < 0; }));
}

int TreePredictor::depth() const {
    std::function<int(int)> rec = [&](int i) -> int {
        const Node& n = nodes_[static_cast<std::size_t>(i)];
        return n.feature < 0 ? 0 : 1 + std::max(rec(n.left), rec(n.right));
    };
    return nodes_.empty() ? 0 : rec(0);
}

TreePredictor greedy_tree_fit(const Mat& X, const Vec& y, int depth) {
    require_shape(X.rows() == y.size(), "greedy_tree_fit: X rows != len(y)");
    if (depth < 1) throw ConfigError("greedy_tree_fit: depth must be >= 1");
    TreePredictor tree;
    if (X.rows() == 0) return tree;

    using Index = std::vector<Eigen::Index>;
    std::function<int(const Index&, int)> grow = [&](const Index& idx, int remaining) -> int {
        double sum = 0.0;
        for (auto i : idx) sum += y[i];
        const double mean = sum / static_cast<double>(idx.size());
        const int me = static_cast<int>(tree.nodes_.size());
        tree.nodes_.push_back({-1, 0.0, mean, -1, -1});
        if (remaining == 0 || idx.size() < 2) return me;

        double parent_sse = 0.0;
        for (auto i : idx) parent_sse += (y[i] - mean) * (y[i] - mean);
        double best_sse = parent_sse;
        int best_feature = -1;
        double best_threshold = 0.0;
        Index order = idx;
        for (Eigen::Index f = 0; f < X.cols(); ++f) {
            std::sort(order.begin(), order.end(), [&](auto a, auto b) { return X(a, f) < X(b, f); });
            // running sums give left/right SSE for every split position
            double ls = 0, lss = 0, ts = 0, tss = 0;
            for (auto i : order) {
                ts += y[i];
                tss += y[i] * y[i];
            }
            for (std::size_t s = 0; s + 1 < order.size(); ++s) {
                ls += y[order[s]];
                lss += y[order[s]] * y[order[s]];
                const double xl = X(order[s], f), xr = X(order[s + 1], f);
                if (xl == xr) continue;
                const double nl = static_cast<double>(s + 1), nr = static_cast<double>(order.size() - s - 1);
                const double rs = ts - ls, rss = tss - lss;
                const double sse = (lss - ls * ls / nl) + (rss - rs * rs / nr);
                if (sse < best_sse - 1e-12 * std::max(1.0, parent_sse)) {
                    best_sse = sse;
                    best_feature = static_cast<int>(f);
                    best_threshold = 0.5 * (xl + xr);
                }
            }
        }
        if (best_feature < 0) return me;
        Index left, right;
        for (auto i : idx) (X(i, best_feature) <= best_threshold ? left : right).push_back(i);
        const int l = grow(left, remaining - 1);
        const int r = grow(right, remaining - 1);
        auto& node = tree.nodes_[static_cast<std::size_t>(me)];
        node.feature = best_feature;
        node.threshold = best_threshold;
        node.left = l;
        node.right = r;
        return me;
    };
    Index all(static_cast<std::size_t>(X.rows()));
    std::iota(all.begin(), all.end(), Eigen::Index{0});
    grow(all, depth);
    return tree;
}

// ---------------------------------------------------------------------------
// 2-layer MLP

MlpParams MlpParams::init(int d, int hidden, std::uint64_t seed) {
    if (d < 1 || hidden < 1) throw ConfigError("mlp: need d >= 1 and hidden >= 1");
    Rng rng(seed);
    MlpParams p;
    p.W = standard_normal(hidden, d, rng) / std::sqrt(static_cast<double>(d));
    p.b = Vec::Zero(hidden);
    p.a = standard_normal(hidden, rng) / std::sqrt(static_cast<double>(hidden));
    p.c = 0.0;
    return p;
}

double MlpParams::operator()(const Vec& x) const { return a.dot((W * x + b).cwiseMax(0.0)) + c; }

double mlp_loss_and_grad(const MlpParams& p, const Mat& X, const Vec& y, MlpParams* grad) {
    require_shape(X.rows() == y.size() && X.cols() == p.W.cols(), "mlp: data shape mismatch");
    const double n = static_cast<double>(X.rows());
    if (X.rows() == 0) {
        if (grad) *grad = MlpParams{Mat::Zero(p.W.rows(), p.W.cols()), Vec::Zero(p.b.size()), Vec::Zero(p.a.size()), 0.0};
        return 0.0;
    }
    const Mat H = (X * p.W.transpose()).rowwise() + p.b.transpose();
    const Mat G = H.cwiseMax(0.0);
    const Vec f = (G * p.a).array() + p.c;
    const Vec err = f - y;
    const double loss = err.squaredNorm() / n;
    if (grad) {
        const Vec e = 2.0 * err / n;
        grad->a = G.transpose() * e;
        grad->c = e.sum();
        const Mat D = ((e * p.a.transpose()).array() * (H.array() > 0.0).cast<double>()).matrix();
        grad->W = D.transpose() * X;
        grad->b = D.colwise().sum().transpose();
    }
    return loss;
}

MlpFit mlp_fit(const Mat& X, const Vec& y, const MlpOptions& opts) {
    if (opts.steps < 1) throw ConfigError("mlp_fit: steps must be >= 1");
    require_shape(X.rows() == y.size(), "mlp_fit: X rows != len(y)");
    MlpFit fit{MlpParams::init(static_cast<int>(X.cols()), opts.hidden, opts.seed), 0.0, 0.0};
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    MlpParams m{Mat::Zero(opts.hidden, X.cols()), Vec::Zero(opts.hidden), Vec::Zero(opts.hidden), 0.0};
    MlpParams v = m;
    MlpParams g;
    auto& p = fit.params;
    for (int t = 1; t <= opts.steps; ++t) {
        const double loss = mlp_loss_and_grad(p, X, y, &g);
        if (!std::isfinite(loss)) throw NumericError("mlp_fit: loss diverged at step " + std::to_string(t));
        if (t == 1) fit.initial_loss = loss;
        const double c1 = 1.0 - std::pow(beta1, t), c2 = 1.0 - std::pow(beta2, t);
        auto update = [&](auto& param, auto& mom, auto& var, const auto& grad) {
            mom = beta1 * mom + (1 - beta1) * grad;
            var = beta2 * var + (1 - beta2) * grad.cwiseProduct(grad);
            param -= (opts.lr * (mom / c1).array() / ((var / c2).array().sqrt() + eps)).matrix();
        };
        update(p.W, m.W, v.W, g.W);
        update(p.b, m.b, v.b, g.b);
        update(p.a, m.a, v.a, g.a);
        m.c = beta1 * m.c + (1 - beta1) * g.c;
        v.c = beta2 * v.c + (1 - beta2) * g.c * g.c;
        p.c -= opts.lr * (m.c / c1) / (std::sqrt(v.c / c2) + eps);
    }
    fit.final_loss = mlp_loss_and_grad(p, X, y, nullptr);
    if (!std::isfinite(fit.final_loss)) throw NumericError("mlp_fit: loss diverged");
    return fit;
}

}  // namespace icl::baselines
