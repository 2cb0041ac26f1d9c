#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "icl/core.hpp"
#include "icl/feature_map.hpp"
#include "icl/prior.hpp"

namespace icl {

/// Function family definitions. Each struct holds the family's prior
/// parameters; FunctionFamilySpec wraps one of them plus the normalize flag.
namespace family {

struct DenseLinear {
    GaussianPrior prior;
    /// Observation noise variance added to prompt outputs (0 = noiseless).
    double noise_var = 0.0;
};

/// N(0, Sigma) with eigenvalues proportional to 1/i^2.
struct SkewedCovLinear {
    int d;
};

/// s coordinates ~ N(0, 1) on a uniformly random support, the rest zero.
struct SparseLinear {
    int d;
    int s;
};

/// w uniform on {-1, +1}^d.
struct SignVector {
    int d;
};

/// w = z || z with z uniform on {-2, -1, 1, 2}^(d/2).
struct ZConcat {
    int d;
};

/// w = vec(A B^T), A, B in R^{q x r} standard normal; row-major flattening.
struct LowRank {
    int q;
    int r;
};

struct GMMLinear {
    std::vector<GaussianPrior> components;
    std::vector<double> alpha;
};

struct FourierSeries {
    int N;
    double L;
};

/// Fourier series restricted to the frequencies in S (intercept always present).
struct FourierSubset {
    std::vector<int> S;
    int N;
    double L;
};

/// Features frozen at construction: omega is D x d, delta has length D.
struct RandomFourierFeatures {
    Mat omega;
    Vec delta;
};

/// Pairs are 0-based (i <= j).
struct MonomialSubset {
    std::vector<std::pair<int, int>> S;
    int d;
};

struct HaarWavelet {
    int levels = 3;
};

/// Full binary tree, random split coordinate per node, threshold 0, N(0,1) leaves.
struct DecisionTree {
    int depth;
    int d;
};

/// f(x) = sum_i a_i ReLU(w_i^T x).
struct TwoLayerNN {
    int r;
    int d;
};

struct NoisyLinearDiscrete {
    std::vector<Vec> W;
    double noise_var;
};

}  // namespace family

using FamilyVariant =
    std::variant<family::DenseLinear, family::SkewedCovLinear, family::SparseLinear, family::SignVector,
                 family::ZConcat, family::LowRank, family::GMMLinear, family::FourierSeries,
                 family::FourierSubset, family::RandomFourierFeatures, family::MonomialSubset,
                 family::HaarWavelet, family::DecisionTree, family::TwoLayerNN, family::NoisyLinearDiscrete>;

struct FunctionFamilySpec {
    FamilyVariant variant;
    bool normalize = false;
    /// Label reported as Prompt::family_id; defaults to the variant name.
    std::string id;

    FunctionFamilySpec(FamilyVariant v, bool normalize = false, std::string id = {});

    /// Input dimension of the family (1 for scalar-input families).
    int input_dim() const;
    std::string kind() const;

    /// Throws ConfigError naming the violated bound.
    void validate() const;

    nlohmann::json to_json() const;
    static FunctionFamilySpec from_json(const nlohmann::json& j);
};

/// Draws omega ~ N(0, I_d) and delta ~ U(0, 2 pi) once.
family::RandomFourierFeatures make_rff(int d, int D, std::uint64_t seed);

/// One sampled function: linear in a feature map, a decision tree or a ReLU net.
class Function {
public:
    struct Linear {
        FeatureMap features;
        Vec w;
    };
    struct Tree {
        int depth;
        std::vector<int> split_coord;  // 2^depth - 1 internal nodes, heap order
        Vec leaves;                    // 2^depth values
    };
    struct Net {
        Mat W;  // r x d
        Vec a;  // r
    };
    using Body = std::variant<Linear, Tree, Net>;

    Function(Body body, double noise_var = 0.0, int component = -1);

    /// Noiseless value f(x).
    double operator()(const Vec& x) const;
    Vec evaluate(const Mat& X) const;

    const Body& body() const { return body_; }
    /// Observation noise variance added to prompt outputs.
    double noise_var() const { return noise_var_; }
    /// Mixture component / task index the function was drawn from, or -1.
    int component() const { return component_; }

    /// Weight vector for linear functions; throws for trees and nets.
    const Vec& weights() const;

    nlohmann::json to_json() const;
    static Function from_json(const nlohmann::json& j);

private:
    Body body_;
    double noise_var_;
    int component_;
};

Function sample_function(const FunctionFamilySpec& spec, std::uint64_t seed);
Function sample_function(const FunctionFamilySpec& spec, Rng& rng);

/// Output-scale constants: sqrt(d) dense and sign vector, sqrt(s) sparse,
/// N Fourier, sqrt(|S|) monomials, 1 trees, sqrt(d r / 2) ReLU nets.
double normalization_constant(const FunctionFamilySpec& spec);

/// The feature map under which a linear family is linear in w (identity for
/// plain linear regression). Throws UnsupportedVariant for trees and nets.
FeatureMap family_features(const FunctionFamilySpec& spec);

}  // namespace icl
