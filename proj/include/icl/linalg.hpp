#pragma once

#include "icl/core.hpp"

namespace icl::linalg {

/// Default relative eigenvalue cutoff for pseudo-inverses.
inline constexpr double kRelCutoff = 1e-12;

/// Solves A z = b for symmetric PSD A via eigendecomposition, discarding
/// eigenvalues below rel_cutoff * lambda_max (pseudo-inverse solution).
Vec sym_pinv_solve(const Mat& A, const Vec& b, double rel_cutoff = kRelCutoff);

/// Returns log det of A restricted to eigenvalues above the cutoff, and the
/// count of retained eigenvalues through `rank`.
double sym_pseudo_logdet(const Mat& A, Eigen::Index* rank = nullptr,
                         double rel_cutoff = kRelCutoff);

/// Minimum-norm least-squares solution of X w ~ y via SVD.
Vec min_norm_lstsq(const Mat& X, const Vec& y);

/// Numerical rank with the same cutoff convention as numpy.linalg.matrix_rank.
Eigen::Index rank(const Mat& X);

/// Orthonormal basis of the null space of X (columns).
Mat null_space(const Mat& X);

/// Clamps eigenvalues in [-1e-10, 0) to zero; throws for anything more negative.
Mat clamp_psd(const Mat& S);

}  // namespace icl::linalg
