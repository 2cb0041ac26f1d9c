#include "icl/probe.hpp"

#include <cmath>
#include <numbers>

#include "icl/baselines.hpp"

namespace icl::probe {

ProbeResult probe_weights(const bridge::PredictorHandle& predictor, const Mat& xs, const Vec& ys, const Mat& query_xs) {
    const Eigen::Index d = xs.cols();
    require_shape(query_xs.cols() == d, "probe_weights: query dimension differs from the context");
    if (query_xs.rows() < d)
        throw ConfigError("probe_weights: need at least d = " + std::to_string(d) + " queries, got " +
                          std::to_string(query_xs.rows()));
    ProbeResult out;
    out.n_queries = query_xs.rows();
    out.query_xs = query_xs;
    out.predictions.resize(out.n_queries);
    for (Eigen::Index i = 0; i < out.n_queries; ++i) {
        try {
            out.predictions[i] = predictor.predict(xs, ys, query_xs.row(i).transpose());
        } catch (const bridge::PredictorError& e) {
            throw bridge::PredictorError("probe query " + std::to_string(i) + ": " + e.what(), e.request);
        }
    }
    auto fit = baselines::ols_min_norm(query_xs, out.predictions);
    out.w_probe = std::move(fit.solution);
    out.residual = (query_xs * out.w_probe - out.predictions).norm();
    return out;
}

ProbeResult probe_weights(const bridge::PredictorHandle& predictor, const Mat& xs, const Vec& ys,
                          const InputDistribution& input, Eigen::Index n_queries, std::uint64_t seed) {
    require_shape(input.dim == xs.cols(), "probe_weights: input distribution dimension differs from the context");
    if (n_queries == 0) n_queries = 2 * xs.cols();
    Rng rng(seed);
    return probe_weights(predictor, xs, ys, input.sample(n_queries, rng));
}

Vec dft_grid(double L, int m) {
    if (m < 1) throw ConfigError("dft grid needs m >= 1");
    if (!(L > 0)) throw ConfigError("dft grid needs L > 0");
    Vec x(m);
    for (int i = 0; i < m; ++i) x[i] = -L + 2.0 * L * i / m;
    return x;
}

Spectrum spectrum_from_values(const Vec& values, int N, double L) {
    const auto m = static_cast<int>(values.size());
    if (N < 0) throw ConfigError("spectrum: N must be >= 0");
    if (m < 2 * N + 1)
        throw ConfigError("spectrum under-resolved: m = " + std::to_string(m) + " < 2N + 1 = " +
                          std::to_string(2 * N + 1));
    const Vec x = dft_grid(L, m);
    Mat B(m, 2 * N + 1);
    for (int i = 0; i < m; ++i) {
        B(i, 0) = 1.0;
        for (int n = 1; n <= N; ++n) {
            const double t = n * std::numbers::pi * x[i] / L;
            B(i, n) = std::cos(t);
            B(i, N + n) = std::sin(t);
        }
    }
    const Vec c = baselines::ols_min_norm(B, values).solution;
    Spectrum s;
    s.a = Vec::Zero(N + 1);
    s.b = Vec::Zero(N + 1);
    s.a[0] = c[0];
    for (int n = 1; n <= N; ++n) {
        s.a[n] = c[n];
        s.b[n] = c[N + n];
    }
    s.power = s.a.array().square() + s.b.array().square();
    return s;
}

Spectrum dft_spectrum(const bridge::PredictorHandle& predictor, const Mat& xs, const Vec& ys, int N, double L, int m) {
    require_shape(xs.cols() == 1, "dft_spectrum needs a scalar-input predictor context");
    if (m < 2 * N + 1)
        throw ConfigError("spectrum under-resolved: m = " + std::to_string(m) + " < 2N + 1 = " +
                          std::to_string(2 * N + 1));
    const Vec grid = dft_grid(L, m);
    Vec values(m);
    for (int i = 0; i < m; ++i) {
        try {
            values[i] = predictor.predict(xs, ys, Vec::Constant(1, grid[i]));
        } catch (const bridge::PredictorError& e) {
            throw bridge::PredictorError("grid point " + std::to_string(i) + ": " + e.what(), e.request);
        }
    }
    return spectrum_from_values(values, N, L);
}

double weight_mse(const Vec& a, const Vec& b) {
    require_shape(a.size() == b.size(), "weight_mse: dimensions differ (" + std::to_string(a.size()) + " vs " +
                                            std::to_string(b.size()) + ")");
    if (a.size() == 0) return 0.0;
    return (a - b).squaredNorm() / static_cast<double>(a.size());
}

}  // namespace icl::probe
