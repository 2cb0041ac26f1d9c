#include "icl/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace icl::linalg {

namespace {

Eigen::SelfAdjointEigenSolver<Mat> eig(const Mat& A) {
    require_shape(A.rows() == A.cols(), "sym_pinv: matrix is not square");
    Eigen::SelfAdjointEigenSolver<Mat> es(A);
    if (es.info() != Eigen::Success) throw NumericError("symmetric eigendecomposition failed");
    return es;
}

double cutoff_for(const Vec& lambda, double rel_cutoff) {
    double lmax = lambda.size() ? lambda.cwiseAbs().maxCoeff() : 0.0;
    return rel_cutoff * lmax;
}

struct Svd {
    Mat U, V;
    Vec s;
};

/// Jacobi SVD throughout: Eigen's divide-and-conquer BDCSVD returns wrong
/// singular values on exactly structured rank-deficient inputs such as Haar
/// design matrices with repeated rows.
Svd thin_svd(const Mat& X, bool vectors) {
    const unsigned opts = vectors ? Eigen::ComputeThinU | Eigen::ComputeThinV : 0;
    Eigen::JacobiSVD<Mat> jac(X, opts);
    if (!jac.singularValues().allFinite()) throw NumericError("svd failed to produce finite values");
    return vectors ? Svd{jac.matrixU(), jac.matrixV(), jac.singularValues()} : Svd{{}, {}, jac.singularValues()};
}

/// Singular values below max(rows, cols) * eps * s_max are treated as zero.
double rank_cutoff(const Mat& X, const Vec& s) {
    return s.size() ? s.maxCoeff() * static_cast<double>(std::max(X.rows(), X.cols())) *
                          std::numeric_limits<double>::epsilon()
                    : 0.0;
}

}  // namespace

Vec sym_pinv_solve(const Mat& A, const Vec& b, double rel_cutoff) {
    require_shape(A.rows() == b.size(), "sym_pinv_solve: rhs length mismatch");
    if (A.rows() == 0) return Vec(0);
    auto es = eig(A);
    const Vec& lambda = es.eigenvalues();
    const Mat& V = es.eigenvectors();
    double tol = cutoff_for(lambda, rel_cutoff);
    Vec coeff = V.transpose() * b;
    for (Eigen::Index i = 0; i < lambda.size(); ++i)
        coeff[i] = lambda[i] > tol ? coeff[i] / lambda[i] : 0.0;
    return V * coeff;
}

double sym_pseudo_logdet(const Mat& A, Eigen::Index* rank, double rel_cutoff) {
    if (A.rows() == 0) {
        if (rank) *rank = 0;
        return 0.0;
    }
    auto es = eig(A);
    const Vec& lambda = es.eigenvalues();
    double tol = cutoff_for(lambda, rel_cutoff);
    double logdet = 0.0;
    Eigen::Index r = 0;
    for (double l : lambda) {
        if (l > tol) {
            logdet += std::log(l);
            ++r;
        }
    }
    if (rank) *rank = r;
    return logdet;
}

Vec min_norm_lstsq(const Mat& X, const Vec& y) {
    require_shape(X.rows() == y.size(), "lstsq: X rows != len(y)");
    if (X.rows() == 0) return Vec::Zero(X.cols());
    const Svd svd = thin_svd(X, true);
    const double tol = rank_cutoff(X, svd.s);
    Vec coeff = svd.U.transpose() * y;
    for (Eigen::Index i = 0; i < coeff.size(); ++i) coeff[i] = svd.s[i] > tol ? coeff[i] / svd.s[i] : 0.0;
    return svd.V * coeff;
}

Eigen::Index rank(const Mat& X) {
    if (X.size() == 0) return 0;
    const Vec s = thin_svd(X, false).s;
    const double tol = rank_cutoff(X, s);
    return (s.array() > tol).count();
}

Mat null_space(const Mat& X) {
    const Eigen::Index d = X.cols();
    if (X.rows() == 0) return Mat::Identity(d, d);
    Eigen::JacobiSVD<Mat> svd(X, Eigen::ComputeFullV);
    Eigen::Index r = rank(X);
    return svd.matrixV().rightCols(d - r);
}

Mat clamp_psd(const Mat& S) {
    require_shape(S.rows() == S.cols(), "covariance must be square");
    if ((S - S.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, S.cwiseAbs().maxCoeff()))
        throw ConfigError("covariance is not symmetric");
    auto es = eig(S);
    Vec lambda = es.eigenvalues();
    if (lambda.size() && lambda.minCoeff() < -1e-10)
        throw ConfigError("covariance has a negative eigenvalue below -1e-10");
    if (lambda.size() == 0 || lambda.minCoeff() >= 0.0) return S;
    lambda = lambda.cwiseMax(0.0);
    return es.eigenvectors() * lambda.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace icl::linalg
