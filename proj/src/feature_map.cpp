#include "icl/feature_map.hpp"

#include "icl/json_util.hpp"

#include <cmath>
#include <numbers>

namespace icl {

using nlohmann::json;

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void check_scalar(const Vec& x, const char* name) {
    require_shape(x.size() == 1, std::string(name) + " features expect scalar inputs");
}

}  // namespace

double haar_psi(double x) {
    if (x >= 0.0 && x < 0.5) return 1.0;
    if (x >= 0.5 && x < 1.0) return -1.0;
    return 0.0;
}

FeatureMap::FeatureMap(Variant v) : v_(std::move(v)) {
    std::visit(overloaded{
                   [](const features::Identity& f) {
                       if (f.d < 1) throw ConfigError("identity features: d must be >= 1");
                   },
                   [](const features::Fourier& f) {
                       if (!(f.L > 0)) throw ConfigError("fourier features: L must be > 0");
                       for (int n : f.freqs)
                           if (n < 1) throw ConfigError("fourier features: frequencies must be >= 1");
                   },
                   [](const features::Monomial& f) {
                       for (auto [i, j] : f.pairs)
                           if (i < 0 || j < i || j >= f.d)
                               throw ConfigError("monomial features: need 1 <= i <= j <= d");
                   },
                   [](const features::Poly2& f) {
                       if (f.d < 1) throw ConfigError("poly2 features: d must be >= 1");
                   },
                   [](const features::Haar& f) {
                       if (f.levels < 0 || f.levels > 20) throw ConfigError("haar features: levels out of range");
                   },
                   [](const features::RandomFourier& f) {
                       require_shape(f.omega.rows() == f.delta.size(), "rff: omega rows != len(delta)");
                       if (f.omega.rows() < 1) throw ConfigError("rff: need D >= 1 features");
                   },
               },
               v_);
}

FeatureMap FeatureMap::fourier(int N, double L) {
    if (N < 1) throw ConfigError("fourier features: N must be >= 1");
    std::vector<int> freqs(N);
    for (int n = 1; n <= N; ++n) freqs[n - 1] = n;
    return FeatureMap(features::Fourier{std::move(freqs), L});
}

FeatureMap FeatureMap::fourier_subset(std::vector<int> freqs, double L) {
    return FeatureMap(features::Fourier{std::move(freqs), L});
}

FeatureMap FeatureMap::all_monomials(int d) {
    std::vector<std::pair<int, int>> pairs;
    for (int i = 0; i < d; ++i)
        for (int j = i; j < d; ++j) pairs.emplace_back(i, j);
    return FeatureMap(features::Monomial{d, std::move(pairs)});
}

FeatureMap FeatureMap::monomials(int d, std::vector<std::pair<int, int>> pairs) {
    return FeatureMap(features::Monomial{d, std::move(pairs)});
}

FeatureMap FeatureMap::random_fourier(Mat omega, Vec delta) {
    return FeatureMap(features::RandomFourier{std::move(omega), std::move(delta)});
}

int FeatureMap::input_dim() const {
    return std::visit(overloaded{
                          [](const features::Identity& f) { return f.d; },
                          [](const features::Fourier&) { return 1; },
                          [](const features::Monomial& f) { return f.d; },
                          [](const features::Poly2& f) { return f.d; },
                          [](const features::Haar&) { return 1; },
                          [](const features::RandomFourier& f) { return static_cast<int>(f.omega.cols()); },
                      },
                      v_);
}

int FeatureMap::size() const {
    return std::visit(overloaded{
                          [](const features::Identity& f) { return f.d; },
                          [](const features::Fourier& f) { return 1 + 2 * static_cast<int>(f.freqs.size()); },
                          [](const features::Monomial& f) { return static_cast<int>(f.pairs.size()); },
                          [](const features::Poly2& f) { return 1 + f.d + f.d * (f.d + 1) / 2; },
                          [](const features::Haar& f) { return 1 << (f.levels + 1); },
                          [](const features::RandomFourier& f) { return static_cast<int>(f.omega.rows()); },
                      },
                      v_);
}

Vec FeatureMap::operator()(const Vec& x) const {
    require_shape(x.size() == input_dim(), "feature map: input dimension mismatch");
    return std::visit(
        overloaded{
            [&](const features::Identity&) -> Vec { return x; },
            [&](const features::Fourier& f) -> Vec {
                check_scalar(x, "fourier");
                const auto m = static_cast<Eigen::Index>(f.freqs.size());
                Vec out(1 + 2 * m);
                out[0] = 1.0;
                for (Eigen::Index i = 0; i < m; ++i) {
                    double arg = f.freqs[i] * std::numbers::pi * x[0] / f.L;
                    out[1 + i] = std::cos(arg);
                    out[1 + m + i] = std::sin(arg);
                }
                return out;
            },
            [&](const features::Monomial& f) -> Vec {
                Vec out(f.pairs.size());
                for (std::size_t t = 0; t < f.pairs.size(); ++t)
                    out[t] = x[f.pairs[t].first] * x[f.pairs[t].second];
                return out;
            },
            [&](const features::Poly2& f) -> Vec {
                Vec out(1 + f.d + f.d * (f.d + 1) / 2);
                out[0] = 1.0;
                out.segment(1, f.d) = x;
                Eigen::Index t = 1 + f.d;
                for (int i = 0; i < f.d; ++i)
                    for (int j = i; j < f.d; ++j) out[t++] = x[i] * x[j];
                return out;
            },
            [&](const features::Haar& f) -> Vec {
                check_scalar(x, "haar");
                Vec out(1 << (f.levels + 1));
                out[0] = 1.0;
                Eigen::Index t = 1;
                for (int n = 0; n <= f.levels; ++n) {
                    double scale = std::pow(2.0, n / 2.0);
                    for (int k = 0; k < (1 << n); ++k)
                        out[t++] = scale * haar_psi(std::ldexp(x[0], n) - k);
                }
                return out;
            },
            [&](const features::RandomFourier& f) -> Vec {
                const double scale = std::sqrt(2.0 / static_cast<double>(f.omega.rows()));
                Vec arg = f.omega * x + f.delta;
                return scale * arg.array().cos().matrix();
            },
        },
        v_);
}

Mat FeatureMap::expand(const Mat& X) const {
    require_shape(X.rows() == 0 || X.cols() == input_dim(), "feature map: design matrix width mismatch");
    Mat out(X.rows(), size());
    for (Eigen::Index i = 0; i < X.rows(); ++i) out.row(i) = (*this)(X.row(i).transpose()).transpose();
    return out;
}

json FeatureMap::to_json() const {
    return std::visit(
        overloaded{
            [](const features::Identity& f) { return json{{"kind", "identity"}, {"d", f.d}}; },
            [](const features::Fourier& f) { return json{{"kind", "fourier"}, {"freqs", f.freqs}, {"L", f.L}}; },
            [](const features::Monomial& f) {
                json pairs = json::array();
                for (auto [i, j] : f.pairs) pairs.push_back({i + 1, j + 1});
                return json{{"kind", "monomial"}, {"d", f.d}, {"pairs", pairs}};
            },
            [](const features::Poly2& f) { return json{{"kind", "poly2"}, {"d", f.d}}; },
            [](const features::Haar& f) { return json{{"kind", "haar"}, {"levels", f.levels}}; },
            [](const features::RandomFourier& f) {
                return json{{"kind", "rff"}, {"omega", icl::to_json(f.omega)}, {"delta", icl::to_json(f.delta)}};
            },
        },
        v_);
}

FeatureMap FeatureMap::from_json(const json& j) {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "identity") return identity(j.at("d").get<int>());
    if (kind == "fourier") return fourier_subset(j.at("freqs").get<std::vector<int>>(), j.at("L").get<double>());
    if (kind == "monomial") {
        std::vector<std::pair<int, int>> pairs;
        for (const auto& p : j.at("pairs")) pairs.emplace_back(p.at(0).get<int>() - 1, p.at(1).get<int>() - 1);
        return monomials(j.at("d").get<int>(), std::move(pairs));
    }
    if (kind == "poly2") return poly2(j.at("d").get<int>());
    if (kind == "haar") return haar(j.at("levels").get<int>());
    if (kind == "rff") {
        return random_fourier(mat_from_json(j.at("omega")), vec_from_json(j.at("delta")));
    }
    throw ConfigError("unknown feature map kind: " + kind);
}

}  // namespace icl
