#include "icl/function_family.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "icl/json_util.hpp"

namespace icl {

using nlohmann::json;

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void need(bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
}

json prior_json(const GaussianPrior& p) { return {{"mean", to_json(p.mean())}, {"cov", to_json(p.cov())}}; }

GaussianPrior prior_from_json(const json& j) {
    Vec mean = vec_from_json(j.at("mean"));
    return GaussianPrior(mean, mat_from_json(j.at("cov"), mean.size()));
}

}  // namespace

FunctionFamilySpec::FunctionFamilySpec(FamilyVariant v, bool normalize_, std::string id_)
    : variant(std::move(v)), normalize(normalize_), id(std::move(id_)) {
    validate();
    if (id.empty()) id = kind();
}

std::string FunctionFamilySpec::kind() const {
    return std::visit(overloaded{
                          [](const family::DenseLinear&) { return "dense"; },
                          [](const family::SkewedCovLinear&) { return "skewed"; },
                          [](const family::SparseLinear&) { return "sparse"; },
                          [](const family::SignVector&) { return "sign"; },
                          [](const family::ZConcat&) { return "z"; },
                          [](const family::LowRank&) { return "lowrank"; },
                          [](const family::GMMLinear&) { return "gmm"; },
                          [](const family::FourierSeries&) { return "fourier"; },
                          [](const family::FourierSubset&) { return "fourier-subset"; },
                          [](const family::RandomFourierFeatures&) { return "rff"; },
                          [](const family::MonomialSubset&) { return "monomial"; },
                          [](const family::HaarWavelet&) { return "haar"; },
                          [](const family::DecisionTree&) { return "tree"; },
                          [](const family::TwoLayerNN&) { return "nn"; },
                          [](const family::NoisyLinearDiscrete&) { return "nlr"; },
                      },
                      variant);
}

int FunctionFamilySpec::input_dim() const {
    return std::visit(overloaded{
                          [](const family::DenseLinear& f) { return static_cast<int>(f.prior.dim()); },
                          [](const family::SkewedCovLinear& f) { return f.d; },
                          [](const family::SparseLinear& f) { return f.d; },
                          [](const family::SignVector& f) { return f.d; },
                          [](const family::ZConcat& f) { return f.d; },
                          [](const family::LowRank& f) { return f.q * f.q; },
                          [](const family::GMMLinear& f) { return static_cast<int>(f.components.front().dim()); },
                          [](const family::FourierSeries&) { return 1; },
                          [](const family::FourierSubset&) { return 1; },
                          [](const family::RandomFourierFeatures& f) { return static_cast<int>(f.omega.cols()); },
                          [](const family::MonomialSubset& f) { return f.d; },
                          [](const family::HaarWavelet&) { return 1; },
                          [](const family::DecisionTree& f) { return f.d; },
                          [](const family::TwoLayerNN& f) { return f.d; },
                          [](const family::NoisyLinearDiscrete& f) { return static_cast<int>(f.W.front().size()); },
                      },
                      variant);
}

void FunctionFamilySpec::validate() const {
    std::visit(
        overloaded{
            [](const family::DenseLinear& f) { need(f.noise_var >= 0, "dense: noise variance must be >= 0"); },
            [](const family::SkewedCovLinear& f) { need(f.d >= 1, "skewed: d must be >= 1"); },
            [](const family::SparseLinear& f) {
                need(f.d >= 1, "sparse: d must be >= 1");
                need(f.s >= 1 && f.s <= f.d, "sparse: need 1 <= s <= d (s=" + std::to_string(f.s) +
                                                  ", d=" + std::to_string(f.d) + ")");
            },
            [](const family::SignVector& f) { need(f.d >= 1, "sign: d must be >= 1"); },
            [](const family::ZConcat& f) { need(f.d >= 2 && f.d % 2 == 0, "z: d must be even and >= 2"); },
            [](const family::LowRank& f) {
                need(f.q >= 1, "lowrank: q must be >= 1");
                need(f.r >= 1 && f.r <= f.q, "lowrank: need 1 <= r <= q");
            },
            [](const family::GMMLinear& f) {
                need(!f.components.empty(), "gmm: need at least one component");
                need(f.components.size() == f.alpha.size(), "gmm: |components| != |alpha|");
                double sum = 0.0;
                for (double a : f.alpha) {
                    need(a >= 0.0, "gmm: alpha entries must be >= 0");
                    sum += a;
                }
                need(std::abs(sum - 1.0) <= 1e-9, "gmm: alpha must sum to 1");
                for (const auto& c : f.components)
                    need(c.dim() == f.components.front().dim(), "gmm: components differ in dimension");
            },
            [](const family::FourierSeries& f) {
                need(f.N >= 1, "fourier: N must be >= 1");
                need(f.L > 0, "fourier: L must be > 0");
            },
            [](const family::FourierSubset& f) {
                need(f.N >= 1 && f.L > 0, "fourier-subset: need N >= 1 and L > 0");
                for (int n : f.S) need(n >= 1 && n <= f.N, "fourier-subset: S must be a subset of {1..N}");
                auto sorted = f.S;
                std::sort(sorted.begin(), sorted.end());
                need(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(),
                     "fourier-subset: S has repeated frequencies");
            },
            [](const family::RandomFourierFeatures& f) {
                need(f.omega.rows() >= 1 && f.omega.cols() >= 1, "rff: need D >= 1 and d >= 1");
                need(f.delta.size() == f.omega.rows(), "rff: len(delta) != D");
            },
            [](const family::MonomialSubset& f) {
                need(f.d >= 1 && !f.S.empty(), "monomial: need d >= 1 and nonempty S");
                for (auto [i, j] : f.S) need(i >= 0 && i <= j && j < f.d, "monomial: need 1 <= i <= j <= d");
            },
            [](const family::HaarWavelet& f) { need(f.levels >= 0 && f.levels <= 20, "haar: levels out of range"); },
            [](const family::DecisionTree& f) {
                need(f.depth >= 1 && f.depth <= 20, "tree: depth must be in [1, 20]");
                need(f.d >= 1, "tree: d must be >= 1");
            },
            [](const family::TwoLayerNN& f) { need(f.r >= 1 && f.d >= 1, "nn: need r >= 1 and d >= 1"); },
            [](const family::NoisyLinearDiscrete& f) {
                need(!f.W.empty(), "nlr: need K >= 1 tasks");
                need(f.noise_var > 0, "nlr: noise variance must be > 0");
                for (const auto& w : f.W) need(w.size() == f.W.front().size(), "nlr: tasks differ in dimension");
            },
        },
        variant);
}

json FunctionFamilySpec::to_json() const {
    json j = std::visit(
        overloaded{
            [](const family::DenseLinear& f) {
                json j{{"prior", prior_json(f.prior)}};
                if (f.noise_var > 0) j["noise_var"] = f.noise_var;
                return j;
            },
            [](const family::SkewedCovLinear& f) { return json{{"d", f.d}}; },
            [](const family::SparseLinear& f) { return json{{"d", f.d}, {"s", f.s}}; },
            [](const family::SignVector& f) { return json{{"d", f.d}}; },
            [](const family::ZConcat& f) { return json{{"d", f.d}}; },
            [](const family::LowRank& f) { return json{{"q", f.q}, {"r", f.r}}; },
            [](const family::GMMLinear& f) {
                json comps = json::array();
                for (const auto& c : f.components) comps.push_back(prior_json(c));
                return json{{"components", comps}, {"alpha", f.alpha}};
            },
            [](const family::FourierSeries& f) { return json{{"N", f.N}, {"L", f.L}}; },
            [](const family::FourierSubset& f) { return json{{"S", f.S}, {"N", f.N}, {"L", f.L}}; },
            [](const family::RandomFourierFeatures& f) {
                return json{{"omega", icl::to_json(f.omega)}, {"delta", icl::to_json(f.delta)}};
            },
            [](const family::MonomialSubset& f) {
                json pairs = json::array();
                for (auto [i, j] : f.S) pairs.push_back({i + 1, j + 1});
                return json{{"S", pairs}, {"d", f.d}};
            },
            [](const family::HaarWavelet& f) { return json{{"levels", f.levels}}; },
            [](const family::DecisionTree& f) { return json{{"depth", f.depth}, {"d", f.d}}; },
            [](const family::TwoLayerNN& f) { return json{{"r", f.r}, {"d", f.d}}; },
            [](const family::NoisyLinearDiscrete& f) {
                json W = json::array();
                for (const auto& w : f.W) W.push_back(icl::to_json(w));
                return json{{"W", W}, {"noise_var", f.noise_var}};
            },
        },
        variant);
    j["kind"] = kind();
    j["normalize"] = normalize;
    j["id"] = id;
    return j;
}

FunctionFamilySpec FunctionFamilySpec::from_json(const json& j) {
    const auto kind = j.at("kind").get<std::string>();
    const bool norm = j.value("normalize", false);
    const std::string id = j.value("id", std::string{});
    auto make = [&](FamilyVariant v) { return FunctionFamilySpec(std::move(v), norm, id); };
    auto d = [&] { return j.at("d").get<int>(); };
    if (kind == "dense") {
        const double noise = j.value("noise_var", 0.0);
        if (j.contains("prior")) return make(family::DenseLinear{prior_from_json(j.at("prior")), noise});
        return make(family::DenseLinear{GaussianPrior::standard(d()), noise});
    }
    if (kind == "skewed") return make(family::SkewedCovLinear{d()});
    if (kind == "sparse") return make(family::SparseLinear{d(), j.at("s").get<int>()});
    if (kind == "sign") return make(family::SignVector{d()});
    if (kind == "z") return make(family::ZConcat{d()});
    if (kind == "lowrank") return make(family::LowRank{j.at("q").get<int>(), j.at("r").get<int>()});
    if (kind == "gmm") {
        std::vector<GaussianPrior> comps;
        if (j.contains("components")) {
            for (const auto& c : j.at("components")) comps.push_back(prior_from_json(c));
        } else {
            comps = gmm_pinned_first_coordinate(d(), j.value("shift", 3.0));
        }
        auto alpha = j.contains("alpha") ? j.at("alpha").get<std::vector<double>>()
                                         : std::vector<double>(comps.size(), 1.0 / static_cast<double>(comps.size()));
        return make(family::GMMLinear{std::move(comps), std::move(alpha)});
    }
    if (kind == "fourier") return make(family::FourierSeries{j.at("N").get<int>(), j.at("L").get<double>()});
    if (kind == "fourier-subset")
        return make(family::FourierSubset{j.at("S").get<std::vector<int>>(), j.at("N").get<int>(),
                                          j.at("L").get<double>()});
    if (kind == "rff") {
        if (j.contains("omega")) return make(family::RandomFourierFeatures{mat_from_json(j.at("omega")),
                                                                           vec_from_json(j.at("delta"))});
        return make(make_rff(d(), j.at("D").get<int>(), j.value("feature_seed", std::uint64_t{0})));
    }
    if (kind == "monomial") {
        std::vector<std::pair<int, int>> S;
        for (const auto& p : j.at("S")) S.emplace_back(p.at(0).get<int>() - 1, p.at(1).get<int>() - 1);
        return make(family::MonomialSubset{std::move(S), d()});
    }
    if (kind == "haar") return make(family::HaarWavelet{j.value("levels", 3)});
    if (kind == "tree") return make(family::DecisionTree{j.value("depth", 4), d()});
    if (kind == "nn") return make(family::TwoLayerNN{j.at("r").get<int>(), d()});
    if (kind == "nlr") {
        std::vector<Vec> W;
        for (const auto& w : j.at("W")) W.push_back(vec_from_json(w));
        return make(family::NoisyLinearDiscrete{std::move(W), j.at("noise_var").get<double>()});
    }
    throw ConfigError("unknown function family kind: " + kind);
}

family::RandomFourierFeatures make_rff(int d, int D, std::uint64_t seed) {
    if (d < 1 || D < 1) throw ConfigError("rff: need d >= 1 and D >= 1");
    Rng rng(seed);
    Mat omega = standard_normal(D, d, rng);
    std::uniform_real_distribution<double> unif(0.0, 2.0 * std::numbers::pi);
    Vec delta(D);
    for (int i = 0; i < D; ++i) delta[i] = unif(rng);
    return {std::move(omega), std::move(delta)};
}

// ---------------------------------------------------------------------------

Function::Function(Body body, double noise_var, int component)
    : body_(std::move(body)), noise_var_(noise_var), component_(component) {}

double Function::operator()(const Vec& x) const {
    return std::visit(overloaded{
                          [&](const Linear& f) { return f.w.dot(f.features(x)); },
                          [&](const Tree& t) {
                              std::size_t node = 0;
                              for (int level = 0; level < t.depth; ++level) {
                                  int c = t.split_coord[node];
                                  require_shape(c < x.size(), "tree: input dimension mismatch");
                                  node = 2 * node + (x[c] > 0.0 ? 2 : 1);
                              }
                              std::size_t first_leaf = (std::size_t{1} << t.depth) - 1;
                              return t.leaves[static_cast<Eigen::Index>(node - first_leaf)];
                          },
                          [&](const Net& n) {
                              require_shape(x.size() == n.W.cols(), "nn: input dimension mismatch");
                              return n.a.dot((n.W * x).cwiseMax(0.0));
                          },
                      },
                      body_);
}

Vec Function::evaluate(const Mat& X) const {
    Vec out(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) out[i] = (*this)(X.row(i).transpose());
    return out;
}

const Vec& Function::weights() const {
    if (const auto* lin = std::get_if<Linear>(&body_)) return lin->w;
    throw UnsupportedVariant("weights(): function is not linear in a feature map");
}

json Function::to_json() const {
    json j = std::visit(overloaded{
                            [](const Linear& f) {
                                return json{{"kind", "linear"}, {"features", f.features.to_json()},
                                            {"w", icl::to_json(f.w)}};
                            },
                            [](const Tree& t) {
                                return json{{"kind", "tree"}, {"depth", t.depth}, {"split_coord", t.split_coord},
                                            {"leaves", icl::to_json(t.leaves)}};
                            },
                            [](const Net& n) {
                                return json{{"kind", "net"}, {"W", icl::to_json(n.W)}, {"a", icl::to_json(n.a)}};
                            },
                        },
                        body_);
    j["noise_var"] = noise_var_;
    j["component"] = component_;
    return j;
}

Function Function::from_json(const json& j) {
    const auto kind = j.at("kind").get<std::string>();
    const double noise = j.value("noise_var", 0.0);
    const int comp = j.value("component", -1);
    if (kind == "linear")
        return Function(Linear{FeatureMap::from_json(j.at("features")), vec_from_json(j.at("w"))}, noise, comp);
    if (kind == "tree")
        return Function(Tree{j.at("depth").get<int>(), j.at("split_coord").get<std::vector<int>>(),
                             vec_from_json(j.at("leaves"))},
                        noise, comp);
    if (kind == "net") return Function(Net{mat_from_json(j.at("W")), vec_from_json(j.at("a"))}, noise, comp);
    throw ConfigError("unknown function kind: " + kind);
}

// ---------------------------------------------------------------------------

double normalization_constant(const FunctionFamilySpec& spec) {
    return std::visit(
        overloaded{
            [](const family::DenseLinear& f) { return std::sqrt(static_cast<double>(f.prior.dim())); },
            [](const family::SparseLinear& f) { return std::sqrt(static_cast<double>(f.s)); },
            [](const family::SignVector& f) { return std::sqrt(static_cast<double>(f.d)); },
            [](const family::FourierSeries& f) { return static_cast<double>(f.N); },
            [](const family::FourierSubset& f) { return static_cast<double>(f.N); },
            [](const family::MonomialSubset& f) { return std::sqrt(static_cast<double>(f.S.size())); },
            [](const family::DecisionTree&) { return 1.0; },
            [](const family::TwoLayerNN& f) { return std::sqrt(f.d * f.r / 2.0); },
            [&](const auto&) -> double {
                throw UnsupportedVariant("no normalization constant defined for family '" + spec.kind() + "'");
            },
        },
        spec.variant);
}

FeatureMap family_features(const FunctionFamilySpec& spec) {
    return std::visit(overloaded{
                          [](const family::FourierSeries& f) { return FeatureMap::fourier(f.N, f.L); },
                          [](const family::FourierSubset& f) { return FeatureMap::fourier_subset(f.S, f.L); },
                          [](const family::RandomFourierFeatures& f) {
                              return FeatureMap::random_fourier(f.omega, f.delta);
                          },
                          [](const family::MonomialSubset& f) { return FeatureMap::monomials(f.d, f.S); },
                          [](const family::HaarWavelet& f) { return FeatureMap::haar(f.levels); },
                          [&](const family::DecisionTree&) -> FeatureMap {
                              throw UnsupportedVariant("decision trees have no linear feature map");
                          },
                          [&](const family::TwoLayerNN&) -> FeatureMap {
                              throw UnsupportedVariant("ReLU nets have no linear feature map");
                          },
                          [&](const auto&) { return FeatureMap::identity(spec.input_dim()); },
                      },
                      spec.variant);
}

Function sample_function(const FunctionFamilySpec& spec, std::uint64_t seed) {
    Rng rng(seed);
    return sample_function(spec, rng);
}

Function sample_function(const FunctionFamilySpec& spec, Rng& rng) {
    spec.validate();
    const double scale = spec.normalize ? 1.0 / normalization_constant(spec) : 1.0;
    auto linear = [&](Vec w, double noise = 0.0, int comp = -1) {
        return Function(Function::Linear{family_features(spec), std::move(w) * scale}, noise, comp);
    };
    return std::visit(
        overloaded{
            [&](const family::DenseLinear& f) { return linear(f.prior.sample(rng), f.noise_var); },
            [&](const family::SkewedCovLinear& f) { return linear(GaussianPrior::skewed(f.d).sample(rng)); },
            [&](const family::SparseLinear& f) {
                std::vector<int> idx(f.d);
                std::iota(idx.begin(), idx.end(), 0);
                // partial Fisher-Yates: first s entries are a uniform s-subset
                for (int i = 0; i < f.s; ++i) {
                    std::uniform_int_distribution<int> pick(i, f.d - 1);
                    std::swap(idx[i], idx[pick(rng)]);
                }
                Vec w = Vec::Zero(f.d);
                std::normal_distribution<double> normal;
                for (int i = 0; i < f.s; ++i) w[idx[i]] = normal(rng);
                return linear(std::move(w));
            },
            [&](const family::SignVector& f) {
                std::bernoulli_distribution coin(0.5);
                Vec w(f.d);
                for (int i = 0; i < f.d; ++i) w[i] = coin(rng) ? 1.0 : -1.0;
                return linear(std::move(w));
            },
            [&](const family::ZConcat& f) {
                static constexpr double kLevels[] = {-2.0, -1.0, 1.0, 2.0};
                std::uniform_int_distribution<int> pick(0, 3);
                const int half = f.d / 2;
                Vec w(f.d);
                for (int i = 0; i < half; ++i) w[i] = w[half + i] = kLevels[pick(rng)];
                return linear(std::move(w));
            },
            [&](const family::LowRank& f) {
                Mat A = standard_normal(f.q, f.r, rng);
                Mat B = standard_normal(f.q, f.r, rng);
                Mat W = A * B.transpose();
                Vec w(f.q * f.q);
                for (int i = 0; i < f.q; ++i)
                    for (int j = 0; j < f.q; ++j) w[i * f.q + j] = W(i, j);
                return linear(std::move(w));
            },
            [&](const family::GMMLinear& f) {
                int c = sample_categorical(f.alpha, rng);
                return linear(f.components[static_cast<std::size_t>(c)].sample(rng), 0.0, c);
            },
            [&](const family::FourierSeries& f) { return linear(standard_normal(2 * f.N + 1, rng)); },
            [&](const family::FourierSubset& f) {
                return linear(standard_normal(2 * static_cast<Eigen::Index>(f.S.size()) + 1, rng));
            },
            [&](const family::RandomFourierFeatures& f) { return linear(standard_normal(f.omega.rows(), rng)); },
            [&](const family::MonomialSubset& f) {
                return linear(standard_normal(static_cast<Eigen::Index>(f.S.size()), rng));
            },
            [&](const family::HaarWavelet& f) { return linear(standard_normal(Eigen::Index{1} << (f.levels + 1), rng)); },
            [&](const family::DecisionTree& f) {
                const std::size_t internal = (std::size_t{1} << f.depth) - 1;
                std::uniform_int_distribution<int> coord(0, f.d - 1);
                std::vector<int> split(internal);
                for (auto& s : split) s = coord(rng);
                Vec leaves = standard_normal(Eigen::Index{1} << f.depth, rng) * scale;
                return Function(Function::Tree{f.depth, std::move(split), std::move(leaves)});
            },
            [&](const family::TwoLayerNN& f) {
                Mat W = standard_normal(f.r, f.d, rng);
                Vec a = standard_normal(f.r, rng);
                // unnormalized: a ~ N(0, 2/r); normalized: unit-variance a divided by sqrt(d r / 2)
                a *= spec.normalize ? scale : std::sqrt(2.0 / f.r);
                return Function(Function::Net{std::move(W), std::move(a)});
            },
            [&](const family::NoisyLinearDiscrete& f) {
                std::uniform_int_distribution<int> pick(0, static_cast<int>(f.W.size()) - 1);
                int t = pick(rng);
                return linear(f.W[static_cast<std::size_t>(t)], f.noise_var, t);
            },
        },
        spec.variant);
}

}  // namespace icl
