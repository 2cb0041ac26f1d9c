#pragma once

#include <cstdint>

#include "icl/core.hpp"
#include "icl/predictor.hpp"
#include "icl/tasks.hpp"

namespace icl::probe {

struct ProbeResult {
    Vec w_probe;
    /// ||X' w_probe - y'||_2 over the probe queries.
    double residual = 0.0;
    Eigen::Index n_queries = 0;
    Mat query_xs;
    Vec predictions;
};

/// Queries the predictor at `query_xs` with the context held fixed and fits
/// y' = X' w by minimum-norm least squares.
ProbeResult probe_weights(const bridge::PredictorHandle& predictor, const Mat& xs, const Vec& ys, const Mat& query_xs);

/// As above with n_queries (0 means 2d) fresh inputs drawn from `input`.
ProbeResult probe_weights(const bridge::PredictorHandle& predictor, const Mat& xs, const Vec& ys,
                          const InputDistribution& input, Eigen::Index n_queries, std::uint64_t seed);

inline constexpr int kDefaultGridSize = 256;

struct Spectrum {
    Vec a;      // a[0] is the constant term
    Vec b;      // b[0] = 0
    Vec power;  // a[n]^2 + b[n]^2
};

/// m evenly spaced grid points x_i = -L + 2 L i / m on [-L, L).
Vec dft_grid(double L, int m);

/// Least-squares projection of values on dft_grid(L, m) onto
/// {1, cos(n pi x / L), sin(n pi x / L)}, n = 1..N. Requires m >= 2N + 1.
Spectrum spectrum_from_values(const Vec& values, int N, double L);

/// Evaluates a scalar-input predictor on the grid with the context fixed.
Spectrum dft_spectrum(const bridge::PredictorHandle& predictor, const Mat& xs, const Vec& ys, int N, double L,
                      int m = kDefaultGridSize);

/// Mean of squared coordinate differences.
double weight_mse(const Vec& a, const Vec& b);

}  // namespace icl::probe
