#pragma once

#include <cstdint>
#include <iterator>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace icl {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Rng = std::mt19937_64;

/// Invalid family / mixture / solver configuration.
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Operand dimensions do not agree.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Non-finite values or a numerically degenerate result.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct UnsupportedVariant : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Problem exceeds a hard size guard (e.g. enumeration support).
struct CapacityError : std::length_error {
    using std::length_error::length_error;
};

struct InfeasibleError : std::runtime_error {
    InfeasibleError(const std::string& what, double residual)
        : std::runtime_error(what), residual(residual) {}
    double residual;
};

/// splitmix64 finalizer, used to derive independent child seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t child_seed(std::uint64_t parent, std::uint64_t index) {
    return mix_seed(mix_seed(parent) ^ (index * 0xd1342543de82ef95ULL + 1));
}

inline Vec standard_normal(Eigen::Index n, Rng& rng) {
    std::normal_distribution<double> normal;
    Vec v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = normal(rng);
    return v;
}

inline Mat standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    std::normal_distribution<double> normal;
    Mat m(rows, cols);
    // row-major fill so a k-row prefix does not depend on the total row count
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
    return m;
}

/// Index drawn with probability proportional to `weights` (which sum to 1).
template <class Weights>
int sample_categorical(const Weights& weights, Rng& rng) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double u = unif(rng);
    double acc = 0.0;
    int last_positive = -1;
    for (std::size_t i = 0; i < std::size(weights); ++i) {
        acc += weights[i];
        if (weights[i] > 0) last_positive = static_cast<int>(i);
        if (u < acc) return static_cast<int>(i);
    }
    return last_positive;  // rounding slack at the top end
}

inline void require_shape(bool ok, const std::string& what) {
    if (!ok) throw ShapeError(what);
}

}  // namespace icl
