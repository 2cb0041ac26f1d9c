#pragma once

#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "icl/core.hpp"

namespace icl {

/// Basis expansions used by the nonlinear regression families and by the
/// OLS-on-features baselines.
namespace features {

/// x itself.
struct Identity {
    int d;
};

/// [1, cos(n pi x / L) for n in freqs, sin(n pi x / L) for n in freqs], scalar x.
struct Fourier {
    std::vector<int> freqs;
    double L;
};

/// x_i * x_j for each listed (i, j), 0-based with i <= j.
struct Monomial {
    int d;
    std::vector<std::pair<int, int>> pairs;
};

/// [1, x_1..x_d, all x_i x_j with i <= j].
struct Poly2 {
    int d;
};

/// Constant function plus psi_{n,k} for n = 0..levels, 0 <= k < 2^n, on [0, 1].
struct Haar {
    int levels;
};

/// sqrt(2/D) cos(omega_i^T x + delta_i).
struct RandomFourier {
    Mat omega;  // D x d
    Vec delta;  // D
};

}  // namespace features

class FeatureMap {
public:
    using Variant = std::variant<features::Identity, features::Fourier, features::Monomial,
                                 features::Poly2, features::Haar, features::RandomFourier>;

    FeatureMap(Variant v);

    static FeatureMap identity(int d) { return FeatureMap(features::Identity{d}); }
    /// Full Fourier basis of max frequency N (2N + 1 features).
    static FeatureMap fourier(int N, double L);
    static FeatureMap fourier_subset(std::vector<int> freqs, double L);
    /// Every degree-2 monomial in d variables, d(d+1)/2 features.
    static FeatureMap all_monomials(int d);
    static FeatureMap monomials(int d, std::vector<std::pair<int, int>> pairs);
    static FeatureMap poly2(int d) { return FeatureMap(features::Poly2{d}); }
    static FeatureMap haar(int levels = 3) { return FeatureMap(features::Haar{levels}); }
    static FeatureMap random_fourier(Mat omega, Vec delta);

    int input_dim() const;
    int size() const;

    Vec operator()(const Vec& x) const;
    /// Row-wise expansion of a k x input_dim design matrix.
    Mat expand(const Mat& X) const;

    const Variant& variant() const { return v_; }

    nlohmann::json to_json() const;
    static FeatureMap from_json(const nlohmann::json& j);

private:
    Variant v_;
};

/// Haar mother wavelet: 1 on [0, 1/2), -1 on [1/2, 1), 0 elsewhere.
double haar_psi(double x);

}  // namespace icl
