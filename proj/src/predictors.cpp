#include "icl/predictors.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <sstream>

#include "icl/bayes.hpp"

namespace icl::bridge::predictors {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

/// Wraps a weight estimator on the raw design into a predictor.
PredictorHandle weights(std::string name, std::function<Vec(const Mat&, const Vec&)> fit) {
    return in_process(std::move(name), [fit = std::move(fit)](const Mat& xs, const Vec& ys, const Vec& q) {
        return q.dot(fit(xs, ys));
    });
}

}  // namespace

PredictorHandle zero() {
    return in_process("zero", [](const Mat&, const Vec&, const Vec&) { return 0.0; });
}

namespace {

Vec pme_weights(const GaussianPrior& prior, const Mat& X, const Vec& y, double noise_var) {
    return noise_var > 0 ? bayes::gaussian_pme(prior, X, y, noise_var) : bayes::gaussian_pme_noiseless(prior, X, y);
}

}  // namespace

PredictorHandle gaussian_pme(const GaussianPrior& prior, double noise_var) {
    return weights("gaussian-pme", [prior, noise_var](const Mat& X, const Vec& y) {
        return pme_weights(prior, X, y, noise_var);
    });
}

PredictorHandle gaussian_pme_features(const FeatureMap& phi, const GaussianPrior& prior, double noise_var) {
    return linear_in_features(
        "gaussian-pme", [prior, noise_var](const Mat& F, const Vec& y) { return pme_weights(prior, F, y, noise_var); },
        phi);
}

PredictorHandle mixture_pme(const std::vector<GaussianPrior>& components, const std::vector<double>& alpha,
                            double noise_var) {
    return weights("mixture-pme", [components, alpha, noise_var](const Mat& X, const Vec& y) {
        return bayes::mixture_pme(components, alpha, X, y, noise_var).combined_mean;
    });
}

PredictorHandle mixture_pme_features(const FeatureMap& phi, const std::vector<GaussianPrior>& components,
                                     const std::vector<double>& alpha, double noise_var) {
    return linear_in_features(
        "mixture-pme",
        [components, alpha, noise_var](const Mat& F, const Vec& y) {
            return bayes::mixture_pme(components, alpha, F, y, noise_var).combined_mean;
        },
        phi);
}

PredictorHandle dmmse(const DiscreteTaskSet& tasks) {
    return weights("dmmse", [tasks](const Mat& X, const Vec& y) { return bayes::dmmse_pme(tasks, X, y); });
}

PredictorHandle ridge(double noise_var) {
    if (!(noise_var > 0)) throw ConfigError("ridge: noise variance must be > 0");
    return weights("ridge", [noise_var](const Mat& X, const Vec& y) { return bayes::ridge_pme(noise_var, X, y); });
}

PredictorHandle ols() {
    return weights("ols", [](const Mat& X, const Vec& y) { return baselines::ols_min_norm(X, y).solution; });
}

PredictorHandle ols_features(const FeatureMap& phi) {
    return linear_in_features(
        "ols-features", [](const Mat& F, const Vec& y) { return baselines::ols_min_norm(F, y).solution; }, phi);
}

PredictorHandle lasso_features(const FeatureMap& phi, double alpha) {
    if (!(alpha >= 0)) throw ConfigError("lasso: penalty must be >= 0");
    return linear_in_features(
        "lasso", [alpha](const Mat& F, const Vec& y) { return baselines::lasso(F, y, alpha).solution; }, phi);
}

PredictorHandle linf() {
    return weights("linf", [](const Mat& X, const Vec& y) { return baselines::linf_min(X, y).solution; });
}

PredictorHandle nuclear(int q) {
    if (q < 1) throw ConfigError("nuclear: q must be >= 1");
    return weights("nuclear", [q](const Mat& X, const Vec& y) { return baselines::nuclear_norm_min(X, y, q).solution; });
}

PredictorHandle tree(int depth) {
    if (depth < 0) throw ConfigError("tree: depth must be >= 0");
    return in_process("tree", [depth](const Mat& X, const Vec& y, const Vec& q) {
        if (X.rows() == 0) return 0.0;
        return baselines::greedy_tree_fit(X, y, depth)(q);
    });
}

PredictorHandle mlp(const baselines::MlpOptions& opts) {
    return in_process("mlp", [opts](const Mat& X, const Vec& y, const Vec& q) {
        if (X.rows() == 0) return 0.0;
        return baselines::mlp_fit(X, y, opts)(q);
    });
}

PredictorHandle enumeration(const posterior::DiscreteSupport& support, double noise_var) {
    return weights("enumeration", [support, noise_var](const Mat& X, const Vec& y) {
        return posterior::enumerate_discrete_pme(support, X, y, noise_var);
    });
}

PredictorHandle mcmc(const posterior::McmcTarget& target, const posterior::SamplerConfig& config) {
    config.validate();
    return weights("mcmc", [target, config](const Mat& X, const Vec& y) {
        return posterior::mcmc_pme(target, X, y, config).mean;
    });
}

// ---------------------------------------------------------------------------

namespace {

double family_scale(const FunctionFamilySpec& f) { return f.normalize ? 1.0 / normalization_constant(f) : 1.0; }

GaussianPrior isotropic(Eigen::Index n, double scale) {
    return GaussianPrior(Vec::Zero(n), Mat::Identity(n, n) * (scale * scale));
}

/// Every s-subset of {0..d-1} in lexicographic order.
std::vector<std::vector<int>> subsets(int d, int s) {
    std::vector<std::vector<int>> out;
    std::vector<int> cur(static_cast<std::size_t>(s));
    std::iota(cur.begin(), cur.end(), 0);
    for (;;) {
        out.push_back(cur);
        int i = s - 1;
        while (i >= 0 && cur[static_cast<std::size_t>(i)] == d - s + i) --i;
        if (i < 0) return out;
        ++cur[static_cast<std::size_t>(i)];
        for (int j = i + 1; j < s; ++j) cur[static_cast<std::size_t>(j)] = cur[static_cast<std::size_t>(j - 1)] + 1;
    }
}

/// Largest support the sparse-linear Gaussian mixture view enumerates.
constexpr double kMaxSparseComponents = 20000;

struct ViewWithNoise {
    GaussianView view;
    double noise_var = 0.0;
};

std::optional<ViewWithNoise> family_view(const FunctionFamilySpec& spec) {
    spec.validate();
    const double s = family_scale(spec);
    auto single = [&](FeatureMap phi, GaussianPrior prior, double noise = 0.0) {
        return std::optional<ViewWithNoise>(
            ViewWithNoise{GaussianView{std::move(phi), {std::move(prior)}, {1.0}}, noise});
    };
    return std::visit(
        overloaded{
            [&](const family::DenseLinear& f) {
                return single(FeatureMap::identity(static_cast<int>(f.prior.dim())),
                              GaussianPrior(f.prior.mean() * s, f.prior.cov() * (s * s)), f.noise_var);
            },
            [&](const family::SkewedCovLinear& f) {
                return single(FeatureMap::identity(f.d), GaussianPrior::skewed(f.d));
            },
            [&](const family::SparseLinear& f) -> std::optional<ViewWithNoise> {
                double count = 1;
                for (int i = 0; i < f.s; ++i) count = count * (f.d - i) / (i + 1);
                if (count > kMaxSparseComponents) return std::nullopt;
                GaussianView v{FeatureMap::identity(f.d), {}, {}};
                for (const auto& support : subsets(f.d, f.s)) {
                    Mat cov = Mat::Zero(f.d, f.d);
                    for (int i : support) cov(i, i) = s * s;
                    v.components.emplace_back(Vec::Zero(f.d), std::move(cov));
                    v.alpha.push_back(1.0 / count);
                }
                return ViewWithNoise{std::move(v), 0.0};
            },
            [&](const family::GMMLinear& f) {
                const int d = static_cast<int>(f.components.front().dim());
                return std::optional<ViewWithNoise>(
                    ViewWithNoise{GaussianView{FeatureMap::identity(d), f.components, f.alpha}, 0.0});
            },
            [&](const family::FourierSeries& f) {
                return single(FeatureMap::fourier(f.N, f.L), isotropic(2 * f.N + 1, s));
            },
            [&](const family::FourierSubset& f) {
                return single(FeatureMap::fourier_subset(f.S, f.L),
                              isotropic(2 * static_cast<Eigen::Index>(f.S.size()) + 1, s));
            },
            [&](const family::RandomFourierFeatures& f) {
                return single(FeatureMap::random_fourier(f.omega, f.delta), isotropic(f.omega.rows(), s));
            },
            [&](const family::MonomialSubset& f) {
                return single(FeatureMap::monomials(f.d, f.S), isotropic(static_cast<Eigen::Index>(f.S.size()), s));
            },
            [&](const family::HaarWavelet& f) {
                return single(FeatureMap::haar(f.levels), isotropic(Eigen::Index{1} << (f.levels + 1), s));
            },
            [&](const auto&) -> std::optional<ViewWithNoise> { return std::nullopt; },
        },
        spec.variant);
}

/// Embeds a Fourier-type family's isotropic prior into the full basis of max frequency N.
std::optional<GaussianPrior> embed_fourier(const FunctionFamilySpec& spec, int N) {
    const double s = family_scale(spec);
    std::vector<int> freqs;
    if (auto* f = std::get_if<family::FourierSeries>(&spec.variant)) {
        for (int n = 1; n <= f->N; ++n) freqs.push_back(n);
    } else if (auto* f = std::get_if<family::FourierSubset>(&spec.variant)) {
        freqs = f->S;
    } else {
        return std::nullopt;
    }
    Vec var = Vec::Zero(2 * N + 1);
    var[0] = s * s;
    for (int n : freqs) var[n] = var[N + n] = s * s;
    return GaussianPrior(Vec::Zero(2 * N + 1), var.asDiagonal());
}

std::optional<double> fourier_half_width(const FunctionFamilySpec& spec, int* max_freq) {
    if (auto* f = std::get_if<family::FourierSeries>(&spec.variant)) {
        *max_freq = std::max(*max_freq, f->N);
        return f->L;
    }
    if (auto* f = std::get_if<family::FourierSubset>(&spec.variant)) {
        for (int n : f->S) *max_freq = std::max(*max_freq, n);
        return f->L;
    }
    return std::nullopt;
}

std::optional<ViewWithNoise> mixture_view(const MixtureSpec& mixture) {
    mixture.validate();
    if (mixture.families.size() == 1) return family_view(mixture.families.front());

    // Fourier-type families with a common half-width share the full basis.
    int N = 0;
    std::optional<double> L;
    bool all_fourier = true;
    for (const auto& f : mixture.families) {
        auto l = fourier_half_width(f, &N);
        if (!l || (L && *L != *l)) {
            all_fourier = false;
            break;
        }
        L = l;
    }
    if (all_fourier) {
        GaussianView v{FeatureMap::fourier(N, *L), {}, {}};
        for (std::size_t i = 0; i < mixture.families.size(); ++i) {
            v.components.push_back(*embed_fourier(mixture.families[i], N));
            v.alpha.push_back(mixture.alpha[i]);
        }
        return ViewWithNoise{std::move(v), 0.0};
    }

    std::optional<ViewWithNoise> out;
    for (std::size_t i = 0; i < mixture.families.size(); ++i) {
        auto fv = family_view(mixture.families[i]);
        if (!fv) return std::nullopt;
        if (!out) {
            out = ViewWithNoise{GaussianView{fv->view.features, {}, {}}, fv->noise_var};
        } else if (out->view.features.to_json() != fv->view.features.to_json() || out->noise_var != fv->noise_var) {
            return std::nullopt;
        }
        for (std::size_t c = 0; c < fv->view.components.size(); ++c) {
            out->view.components.push_back(fv->view.components[c]);
            out->view.alpha.push_back(mixture.alpha[i] * fv->view.alpha[c]);
        }
    }
    return out;
}

bool is_identity(const FeatureMap& phi) { return std::holds_alternative<features::Identity>(phi.variant()); }

PredictorHandle from_view(const ViewWithNoise& v) {
    const auto& view = v.view;
    if (view.components.size() == 1) {
        return is_identity(view.features) ? gaussian_pme(view.components.front(), v.noise_var)
                                          : gaussian_pme_features(view.features, view.components.front(), v.noise_var);
    }
    const double noise = v.noise_var > 0 ? v.noise_var : bayes::kEvidenceNoiseVar;
    return is_identity(view.features) ? mixture_pme(view.components, view.alpha, noise)
                                      : mixture_pme_features(view.features, view.components, view.alpha, noise);
}

posterior::ProductSupport scaled(posterior::ProductSupport support, double s) {
    for (auto& v : support.values) v *= s;
    return support;
}

}  // namespace

std::optional<GaussianView> gaussian_view(const FunctionFamilySpec& family) {
    auto v = family_view(family);
    if (!v) return std::nullopt;
    return v->view;
}

std::optional<GaussianView> gaussian_view(const MixtureSpec& mixture) {
    auto v = mixture_view(mixture);
    if (!v) return std::nullopt;
    return v->view;
}

PredictorHandle bayes_optimal(const MixtureSpec& mixture, const posterior::SamplerConfig& sampler) {
    if (auto v = mixture_view(mixture)) return from_view(*v).with_name("pme");
    if (mixture.families.size() != 1)
        throw UnsupportedVariant("no Bayes-optimal predictor for a mixture of heterogeneous families");
    const auto& spec = mixture.families.front();
    const double s = family_scale(spec);
    auto discrete = [&](const posterior::ProductSupport& support) {
        if (support.size() <= posterior::kMaxEnumeration) return enumeration(support).with_name("pme");
        return mcmc(posterior::McmcTarget::discrete(support), sampler).with_name("pme");
    };
    return std::visit(
        overloaded{
            [&](const family::NoisyLinearDiscrete& f) { return dmmse(DiscreteTaskSet(f.W, f.noise_var)).with_name("pme"); },
            [&](const family::SignVector& f) { return discrete(scaled(posterior::ProductSupport::sign_vectors(f.d), s)); },
            [&](const family::ZConcat& f) { return discrete(scaled(posterior::ProductSupport::z_task(f.d), s)); },
            [&](const family::LowRank& f) {
                return mcmc(posterior::McmcTarget::low_rank(f.q, f.r), sampler).with_name("pme");
            },
            [&](const auto&) -> PredictorHandle {
                throw UnsupportedVariant("no Bayes-optimal predictor for family '" + spec.kind() + "'");
            },
        },
        spec.variant);
}

// ---------------------------------------------------------------------------

PredictorHandle from_spec(const std::string& spec, const MixtureSpec* mixture) {
    std::vector<std::string> parts;
    std::stringstream ss(spec);
    for (std::string part; std::getline(ss, part, ':');) parts.push_back(part);
    if (parts.empty() || parts[0].empty()) throw ConfigError("empty predictor spec");
    const std::string& name = parts[0];
    auto num = [&](std::size_t i, std::optional<double> fallback = std::nullopt) -> double {
        if (i < parts.size()) {
            try {
                std::size_t used = 0;
                const double v = std::stod(parts[i], &used);
                if (used == parts[i].size()) return v;
            } catch (const std::exception&) {
            }
            throw ConfigError("predictor spec '" + spec + "': argument '" + parts[i] + "' is not a number");
        }
        if (fallback) return *fallback;
        throw ConfigError("predictor spec '" + spec + "' needs " + std::to_string(i) + " argument(s)");
    };
    auto need_mixture = [&]() -> const MixtureSpec& {
        if (!mixture) throw ConfigError("predictor '" + name + "' needs the prompt distribution");
        return *mixture;
    };
    auto single_features = [&]() {
        const auto& m = need_mixture();
        if (auto v = gaussian_view(m)) return v->features;
        if (m.families.size() != 1) throw UnsupportedVariant("mixture has no common feature map");
        return family_features(m.families.front());
    };

    if (name == "zero") return zero();
    if (name == "ols") return ols();
    if (name == "ridge") return ridge(num(1));
    if (name == "gaussian-pme") {
        const auto noise = num(1, 0.0);
        if (noise < 0) throw ConfigError("gaussian-pme: noise variance must be >= 0");
        return in_process("gaussian-pme", [noise](const Mat& X, const Vec& y, const Vec& q) {
            return q.dot(pme_weights(GaussianPrior::standard(q.size()), X, y, noise));
        });
    }
    if (name == "pme") {
        posterior::SamplerConfig cfg;
        return bayes_optimal(need_mixture(), cfg);
    }
    if (name == "ols-features") return ols_features(single_features());
    if (name == "lasso") return lasso_features(single_features(), num(1, baselines::kLassoAlphaMultitask));
    if (name == "linf") return linf();
    if (name == "nuclear") return nuclear(static_cast<int>(num(1)));
    if (name == "tree") return tree(static_cast<int>(num(1)));
    if (name == "mlp") {
        baselines::MlpOptions opts;
        opts.hidden = static_cast<int>(num(1, opts.hidden));
        opts.steps = static_cast<int>(num(2, opts.steps));
        return mlp(opts);
    }
    if (name == "mcmc") {
        posterior::SamplerConfig cfg;
        cfg.n_samples = static_cast<std::int64_t>(num(1, static_cast<double>(cfg.n_samples)));
        cfg.burn_in = std::min(cfg.burn_in, cfg.n_samples / 2);
        const auto& m = need_mixture();
        if (m.families.size() != 1) throw UnsupportedVariant("mcmc needs a single-family prompt distribution");
        const auto& f = m.families.front();
        if (auto* sv = std::get_if<family::SignVector>(&f.variant))
            return mcmc(posterior::McmcTarget::discrete(scaled(posterior::ProductSupport::sign_vectors(sv->d),
                                                               family_scale(f))),
                        cfg);
        if (auto* z = std::get_if<family::ZConcat>(&f.variant))
            return mcmc(posterior::McmcTarget::discrete(posterior::ProductSupport::z_task(z->d)), cfg);
        if (auto* lr = std::get_if<family::LowRank>(&f.variant))
            return mcmc(posterior::McmcTarget::low_rank(lr->q, lr->r), cfg);
        if (auto* dl = std::get_if<family::DenseLinear>(&f.variant))
            return mcmc(posterior::McmcTarget::gaussian(dl->prior), cfg);
        throw UnsupportedVariant("mcmc has no target for family '" + f.kind() + "'");
    }
    throw ConfigError("unknown predictor '" + name + "'");
}

}  // namespace icl::bridge::predictors
