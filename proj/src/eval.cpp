#include "icl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <numeric>
#include <regex>
#include <set>
#include <sstream>
#include <unordered_map>

#include "icl/baselines.hpp"

namespace icl::eval {

using bridge::Failure;
using bridge::PredictionRecord;

void BootstrapConfig::validate() const {
    if (n_boot < 1) throw ConfigError("bootstrap needs n_boot >= 1");
    if (!(ci_level > 0.0 && ci_level < 1.0)) throw ConfigError("confidence level must lie in (0, 1)");
}

double EvalCurve::at(Eigen::Index kk) const {
    for (std::size_t i = 0; i < k.size(); ++i)
        if (k[i] == kk) return mean_loss[i];
    throw ConfigError("curve " + name + " has no entry for k = " + std::to_string(kk));
}

namespace {

std::unordered_map<std::string, std::size_t> index_prompts(const std::vector<Prompt>& prompts) {
    std::unordered_map<std::string, std::size_t> ids;
    for (std::size_t i = 0; i < prompts.size(); ++i)
        if (!ids.emplace(prompts[i].id, i).second) throw ConfigError("duplicate prompt id " + prompts[i].id);
    return ids;
}

std::unordered_map<Eigen::Index, std::size_t> index_k(const std::vector<Eigen::Index>& k_range) {
    std::unordered_map<Eigen::Index, std::size_t> ks;
    for (std::size_t j = 0; j < k_range.size(); ++j) {
        if (k_range[j] < 0) throw ConfigError("negative prefix length in k range");
        if (!ks.emplace(k_range[j], j).second)
            throw ConfigError("duplicate k = " + std::to_string(k_range[j]) + " in k range");
    }
    return ks;
}

void check_lengths(const std::vector<Prompt>& prompts, const std::vector<Eigen::Index>& k_range) {
    if (k_range.empty()) return;
    const Eigen::Index kmax = *std::max_element(k_range.begin(), k_range.end());
    for (const auto& p : prompts)
        if (p.length() < kmax + 1)
            throw ConfigError("prompt " + p.id + " has " + std::to_string(p.length()) +
                              " pairs; loss at k = " + std::to_string(kmax) + " needs " + std::to_string(kmax + 1));
}

double quantile_sorted(const std::vector<double>& v, double q) {
    const double h = (static_cast<double>(v.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

Mat next_targets(const std::vector<Prompt>& prompts, const std::vector<Eigen::Index>& k_range) {
    check_lengths(prompts, k_range);
    Mat t(static_cast<Eigen::Index>(prompts.size()), static_cast<Eigen::Index>(k_range.size()));
    for (std::size_t i = 0; i < prompts.size(); ++i) {
        const Function f = prompts[i].function();
        for (std::size_t j = 0; j < k_range.size(); ++j)
            t(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                f(prompts[i].xs.row(k_range[j]).transpose());
    }
    return t;
}

EvalCurve curve_from_losses(std::string name, const std::vector<Eigen::Index>& k_range, const Mat& losses,
                            const BootstrapConfig& boot) {
    boot.validate();
    require_shape(losses.cols() == static_cast<Eigen::Index>(k_range.size()),
                  "curve_from_losses: one loss column per k expected");
    if (losses.rows() == 0) throw ConfigError("curve_from_losses: no prompts");
    if (!losses.allFinite()) throw NumericError("curve_from_losses: non-finite loss");

    EvalCurve c;
    c.name = std::move(name);
    c.k = k_range;
    c.B = static_cast<std::size_t>(losses.rows());
    c.n_boot = boot.n_boot;
    c.ci_level = boot.ci_level;
    const Vec mean = losses.colwise().mean().transpose();

    const Eigen::Index B = losses.rows();
    const auto K = losses.cols();
    Mat boot_means(boot.n_boot, K);
    Rng rng(boot.seed);
    std::uniform_int_distribution<Eigen::Index> pick(0, B - 1);
    Vec acc(K);
    for (int b = 0; b < boot.n_boot; ++b) {
        acc.setZero();
        for (Eigen::Index i = 0; i < B; ++i) acc += losses.row(pick(rng)).transpose();
        boot_means.row(b) = acc.transpose() / static_cast<double>(B);
    }
    const double tail = 0.5 * (1.0 - boot.ci_level);
    std::vector<double> col(static_cast<std::size_t>(boot.n_boot));
    for (Eigen::Index j = 0; j < K; ++j) {
        for (int b = 0; b < boot.n_boot; ++b) col[static_cast<std::size_t>(b)] = boot_means(b, j);
        std::sort(col.begin(), col.end());
        c.mean_loss.push_back(mean[j]);
        c.ci_low.push_back(std::min(quantile_sorted(col, tail), mean[j]));
        c.ci_high.push_back(std::max(quantile_sorted(col, 1.0 - tail), mean[j]));
    }
    return c;
}

Mat losses_from_records(const std::vector<PredictionRecord>& records, const std::vector<Prompt>& prompts,
                        const std::vector<Eigen::Index>& k_range) {
    const auto ids = index_prompts(prompts);
    const auto ks = index_k(k_range);
    const Mat targets = next_targets(prompts, k_range);
    Mat losses = Mat::Constant(targets.rows(), targets.cols(), std::numeric_limits<double>::quiet_NaN());
    for (const auto& r : records) {
        auto pit = ids.find(r.key.prompt_id);
        if (pit == ids.end()) throw AlignmentError("prediction for unknown prompt " + r.key.prompt_id);
        auto kit = ks.find(r.key.k);
        if (kit == ks.end()) continue;
        if (r.key.query_index != 0)
            throw AlignmentError("record " + r.key.str() + " is not a next-target prediction");
        const auto i = static_cast<Eigen::Index>(pit->second);
        const auto j = static_cast<Eigen::Index>(kit->second);
        if (!std::isnan(losses(i, j))) throw AlignmentError("duplicate prediction for " + r.key.str());
        const double e = r.prediction - targets(i, j);
        losses(i, j) = e * e;
    }
    for (Eigen::Index i = 0; i < losses.rows(); ++i)
        for (Eigen::Index j = 0; j < losses.cols(); ++j)
            if (std::isnan(losses(i, j)))
                throw AlignmentError("no prediction for prompt " + prompts[static_cast<std::size_t>(i)].id +
                                     " at k = " + std::to_string(k_range[static_cast<std::size_t>(j)]));
    return losses;
}

EvalCurve curve_from_records(std::string name, const std::vector<PredictionRecord>& records,
                             const std::vector<Prompt>& prompts, const std::vector<Eigen::Index>& k_range,
                             const BootstrapConfig& boot) {
    return curve_from_losses(std::move(name), k_range, losses_from_records(records, prompts, k_range), boot);
}

EvalCurve loss_at_k(const bridge::PredictorHandle& predictor, const std::vector<Prompt>& prompts,
                    const std::vector<Eigen::Index>& k_range, const BootstrapConfig& boot, int workers) {
    boot.validate();
    check_lengths(prompts, k_range);
    index_k(k_range);
    auto batch = bridge::run_batch(predictor, prompts, k_range, bridge::QueryMode::NextTarget, workers);
    if (batch.failures.empty()) return curve_from_records(predictor.name(), batch.records, prompts, k_range, boot);

    std::set<std::string> failed;
    for (const auto& f : batch.failures) failed.insert(f.key.prompt_id);
    std::vector<Prompt> ok;
    for (const auto& p : prompts)
        if (!failed.count(p.id)) ok.push_back(p);
    EvalCurve partial;
    partial.name = predictor.name();
    if (!ok.empty()) {
        std::vector<PredictionRecord> kept;
        for (const auto& r : batch.records)
            if (!failed.count(r.key.prompt_id)) kept.push_back(r);
        partial = curve_from_records(predictor.name(), kept, ok, k_range, boot);
    }
    std::ostringstream msg;
    msg << "predictor " << predictor.name() << " failed on " << batch.failures.size() << " of "
        << batch.failures.size() + batch.records.size() << " queries:";
    const std::size_t shown = std::min<std::size_t>(batch.failures.size(), 5);
    for (std::size_t i = 0; i < shown; ++i)
        msg << "\n  " << batch.failures[i].key.prompt_id << " k=" << batch.failures[i].key.k << ": "
            << batch.failures[i].error;
    if (shown < batch.failures.size()) msg << "\n  ...";
    throw PartialResultError(msg.str(), std::move(batch.failures), std::move(partial));
}

Comparison compare_predictors(const std::vector<bridge::PredictorHandle>& predictors, const std::vector<Prompt>& prompts,
                              const std::vector<Eigen::Index>& k_range, const BootstrapConfig& boot, int workers) {
    Comparison out;
    for (const auto& h : predictors) {
        try {
            out.curves.push_back(loss_at_k(h, prompts, k_range, boot, workers));
        } catch (const PartialResultError& e) {
            out.failures[h.name()] = e.failures;
        }
    }
    return out;
}

namespace {

class GoldFeatureOls : public bridge::Predictor {
public:
    explicit GoldFeatureOls(const std::vector<Prompt>& prompts) {
        for (const auto& p : prompts) {
            const Function f = p.function();
            const auto* lin = std::get_if<Function::Linear>(&f.body());
            if (!lin) throw UnsupportedVariant("prompt " + p.id + " is not generated by a linear family");
            if (!features_.emplace(p.id, lin->features).second) throw ConfigError("duplicate prompt id " + p.id);
        }
    }
    double predict(const Mat& xs, const Vec& ys, const Vec& query, const bridge::QueryKey* key) override {
        if (!key) throw ConfigError("gold-feature OLS needs the prompt id of each query");
        auto it = features_.find(key->prompt_id);
        if (it == features_.end()) throw ConfigError("unknown prompt " + key->prompt_id);
        const FeatureMap& phi = it->second;
        return phi(query).dot(baselines::ols_min_norm(phi.expand(xs), ys).solution);
    }

private:
    std::unordered_map<std::string, FeatureMap> features_;
};

}  // namespace

bridge::PredictorHandle gold_feature_ols(const std::vector<Prompt>& prompts) {
    return bridge::PredictorHandle("ols-gold-features", bridge::Mode::InProcess, bridge::Concurrency::ConcurrentSafe,
                                   std::make_shared<GoldFeatureOls>(prompts));
}

// ---------------------------------------------------------------------------

SuiteKind suite_kind_from_string(const std::string& s) {
    if (s == "monomials") return SuiteKind::Monomials;
    if (s == "fourier-subset") return SuiteKind::FourierSubset;
    if (s == "nlr-discrete" || s == "nlr") return SuiteKind::NlrDiscrete;
    throw ConfigError("unknown suite kind '" + s + "' (monomials | fourier-subset | nlr-discrete)");
}

std::string to_string(SuiteKind k) {
    switch (k) {
        case SuiteKind::Monomials: return "monomials";
        case SuiteKind::FourierSubset: return "fourier-subset";
        case SuiteKind::NlrDiscrete: return "nlr-discrete";
    }
    return "?";
}

SuiteParams SuiteParams::defaults_for(SuiteKind kind) {
    SuiteParams p;
    switch (kind) {
        case SuiteKind::Monomials: break;
        case SuiteKind::FourierSubset:
            p.D = 3;
            p.p = 82;
            break;
        case SuiteKind::NlrDiscrete:
            p.d = 8;
            p.p = 16;
            break;
    }
    return p;
}

namespace {

double binomial(int n, int k) {
    if (k < 0 || k > n) return 0;
    double c = 1;
    for (int i = 0; i < k; ++i) c = c * (n - i) / (i + 1);
    return std::round(c);
}

/// Largest pool that is enumerated outright instead of sampled by rejection.
constexpr double kEnumeratePool = 200000;

std::vector<std::vector<int>> all_subsets(int n, int s) {
    std::vector<std::vector<int>> out;
    std::vector<int> cur(static_cast<std::size_t>(s));
    std::iota(cur.begin(), cur.end(), 0);
    if (s > n) return out;
    for (;;) {
        out.push_back(cur);
        int i = s - 1;
        while (i >= 0 && cur[static_cast<std::size_t>(i)] == n - s + i) --i;
        if (i < 0) return out;
        ++cur[static_cast<std::size_t>(i)];
        for (int j = i + 1; j < s; ++j) cur[static_cast<std::size_t>(j)] = cur[static_cast<std::size_t>(j - 1)] + 1;
    }
}

std::vector<int> random_subset(int n, int s, Rng& rng) {
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = 0; i < s; ++i) {
        std::uniform_int_distribution<int> pick(i, n - 1);
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
    }
    idx.resize(static_cast<std::size_t>(s));
    std::sort(idx.begin(), idx.end());
    return idx;
}

/// K distinct s-subsets of {0..n-1}, then up to n_ood more that are distinct from them.
std::pair<std::vector<std::vector<int>>, std::vector<std::vector<int>>> draw_subsets(int n, int s, std::size_t K,
                                                                                     std::size_t n_ood, Rng& rng) {
    const double pool = binomial(n, s);
    std::vector<std::vector<int>> id, ood;
    if (pool <= kEnumeratePool) {
        auto all = all_subsets(n, s);
        std::shuffle(all.begin(), all.end(), rng);
        id.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(K));
        const std::size_t m = std::min(n_ood, all.size() - K);
        ood.assign(all.begin() + static_cast<std::ptrdiff_t>(K), all.begin() + static_cast<std::ptrdiff_t>(K + m));
        return {id, ood};
    }
    std::set<std::vector<int>> seen;
    while (id.size() < K) {
        auto sub = random_subset(n, s, rng);
        if (seen.insert(sub).second) id.push_back(std::move(sub));
    }
    while (ood.size() < n_ood) {
        auto sub = random_subset(n, s, rng);
        if (seen.insert(sub).second) ood.push_back(std::move(sub));
    }
    return {id, ood};
}

std::vector<std::pair<int, int>> monomial_pool(int d) {
    std::vector<std::pair<int, int>> pool;
    for (int i = 0; i < d; ++i)
        for (int j = i; j < d; ++j) pool.emplace_back(i, j);
    return pool;
}

MixtureSpec uniform_mixture(std::vector<FunctionFamilySpec> families) {
    MixtureSpec m;
    m.alpha.assign(families.size(), 1.0 / static_cast<double>(families.size()));
    m.families = std::move(families);
    return m;
}

}  // namespace

std::string family_key(const FunctionFamilySpec& spec) {
    if (auto* m = std::get_if<family::MonomialSubset>(&spec.variant)) {
        auto pairs = m->S;
        std::sort(pairs.begin(), pairs.end());
        std::string s = "monomials:";
        for (auto [i, j] : pairs) s += "(" + std::to_string(i) + "," + std::to_string(j) + ")";
        return s;
    }
    if (auto* f = std::get_if<family::FourierSubset>(&spec.variant)) {
        auto freqs = f->S;
        std::sort(freqs.begin(), freqs.end());
        std::string s = "fourier:{";
        for (std::size_t i = 0; i < freqs.size(); ++i) s += (i ? "," : "") + std::to_string(freqs[i]);
        return s + "}";
    }
    return spec.id.empty() ? spec.kind() : spec.id;
}

MultiTaskSuite build_multitask_suite(SuiteKind kind, const SuiteParams& params, std::size_t K, std::uint64_t seed) {
    if (K < 1) throw ConfigError("task diversity K must be >= 1");
    if (params.p < 1) throw ConfigError("prompt length p must be >= 1");
    Rng rng(child_seed(seed, 0));
    MultiTaskSuite suite;
    suite.kind = kind;
    suite.K = K;
    InputDistribution input;

    if (kind == SuiteKind::Monomials || kind == SuiteKind::FourierSubset) {
        const bool mono = kind == SuiteKind::Monomials;
        const auto pool_items = mono ? monomial_pool(params.d) : std::vector<std::pair<int, int>>{};
        const int n = mono ? static_cast<int>(pool_items.size()) : params.N;
        if (params.D < 1 || params.D > n)
            throw ConfigError("feature-set size D = " + std::to_string(params.D) + " must lie in [1, " +
                              std::to_string(n) + "]");
        suite.D = params.D;
        suite.pool_size = binomial(n, params.D);
        if (static_cast<double>(K) > suite.pool_size)
            throw ConfigError("K = " + std::to_string(K) + " exceeds the " + std::to_string(suite.pool_size) +
                              " available feature sets");
        auto [id_sets, ood_sets] = draw_subsets(n, params.D, K, params.n_ood_families, rng);
        auto make = [&](const std::vector<int>& sub) {
            if (mono) {
                std::vector<std::pair<int, int>> S;
                for (int i : sub) S.push_back(pool_items[static_cast<std::size_t>(i)]);
                FunctionFamilySpec spec(family::MonomialSubset{std::move(S), params.d}, params.normalize);
                spec.id = family_key(spec);
                return spec;
            }
            std::vector<int> S;
            for (int i : sub) S.push_back(i + 1);
            FunctionFamilySpec spec(family::FourierSubset{std::move(S), params.N, params.L}, params.normalize);
            spec.id = family_key(spec);
            return spec;
        };
        for (const auto& s : id_sets) suite.pretrain_families.push_back(make(s));
        for (const auto& s : ood_sets) suite.ood_families.push_back(make(s));
        input = mono ? InputDistribution::standard_normal(params.d) : InputDistribution::uniform(params.L);
    } else {
        if (params.d < 1) throw ConfigError("NLR dimension must be >= 1");
        if (!(params.noise_var > 0)) throw ConfigError("NLR noise variance must be > 0");
        suite.D = params.d;
        suite.pool_size = std::numeric_limits<double>::infinity();
        std::vector<Vec> W;
        W.reserve(K);
        for (std::size_t i = 0; i < K; ++i) W.push_back(standard_normal(params.d, rng));
        suite.pretrain_families.emplace_back(family::NoisyLinearDiscrete{std::move(W), params.noise_var}, false,
                                             "nlr-pretrain-K" + std::to_string(K));
        suite.ood_families.emplace_back(
            family::DenseLinear{GaussianPrior::standard(params.d), params.noise_var}, false, "nlr-gaussian");
        input = InputDistribution::standard_normal(params.d);
    }

    const auto id_mix = kind == SuiteKind::NlrDiscrete ? MixtureSpec::single(suite.pretrain_families.front())
                                                        : uniform_mixture(suite.pretrain_families);
    suite.id_prompts = generate_prompts(id_mix, input, params.p, 1, child_seed(seed, 1), params.n_prompts);
    if (!suite.ood_families.empty()) {
        const auto ood_mix = kind == SuiteKind::NlrDiscrete ? MixtureSpec::single(suite.ood_families.front())
                                                             : uniform_mixture(suite.ood_families);
        suite.ood_prompts = generate_prompts(ood_mix, input, params.p, 1, child_seed(seed, 2), params.n_prompts);
    } else {
        suite.ood_prompts.input = input;
        suite.ood_prompts.p = params.p;
        std::cerr << "warning: K covers the whole pool; the OOD prompt set is empty\n";
    }
    return suite;
}

// ---------------------------------------------------------------------------

std::vector<double> moving_average(const std::vector<double>& series, std::size_t window) {
    if (window < 1) throw ConfigError("moving-average window must be >= 1");
    std::vector<double> out(series.size());
    for (std::size_t i = 0; i < series.size(); ++i) {
        const std::size_t lo = i + 1 >= window ? i + 1 - window : 0;
        double s = 0.0;
        for (std::size_t j = lo; j <= i; ++j) s += series[j];
        out[i] = s / static_cast<double>(i + 1 - lo);
    }
    return out;
}

ForgettingReport forgetting_from_losses(std::vector<std::int64_t> steps, std::vector<double> id_loss,
                                        std::vector<double> ood_loss, std::size_t window) {
    if (steps.empty()) throw ConfigError("forgetting analysis needs at least one checkpoint");
    if (id_loss.size() != steps.size() || ood_loss.size() != steps.size())
        throw AlignmentError("forgetting analysis: series lengths differ");
    for (std::size_t i = 1; i < steps.size(); ++i)
        if (steps[i] <= steps[i - 1]) throw ConfigError("checkpoint steps must be strictly increasing");
    ForgettingReport r;
    r.window = window;
    r.id_avg = moving_average(id_loss, window);
    r.ood_avg = moving_average(ood_loss, window);
    const auto it = std::min_element(r.ood_avg.begin(), r.ood_avg.end());
    const auto imin = static_cast<std::size_t>(it - r.ood_avg.begin());
    r.t_min = steps[imin];
    const double final_avg = r.ood_avg.back();
    if (*it > 0)
        r.ratio = final_avg / *it;
    else
        r.ratio = final_avg > 0 ? std::numeric_limits<double>::infinity() : 1.0;
    r.steps = std::move(steps);
    r.id_loss = std::move(id_loss);
    r.ood_loss = std::move(ood_loss);
    return r;
}

namespace {

double mean_record_loss(const std::vector<PredictionRecord>& records, const std::vector<Prompt>& gold,
                        const std::unordered_map<std::string, std::size_t>& ids,
                        std::unordered_map<std::string, Function>& cache) {
    if (records.empty()) throw AlignmentError("checkpoint has no predictions");
    double sum = 0.0;
    for (const auto& r : records) {
        auto it = ids.find(r.key.prompt_id);
        if (it == ids.end()) throw AlignmentError("prediction for unknown prompt " + r.key.prompt_id);
        const Prompt& p = gold[it->second];
        if (r.key.query_index != 0 || r.key.k >= p.length())
            throw AlignmentError("record " + r.key.str() + " does not address a next target of prompt " + p.id);
        auto f = cache.find(p.id);
        if (f == cache.end()) f = cache.emplace(p.id, p.function()).first;
        const double e = r.prediction - f->second(p.xs.row(r.key.k).transpose());
        sum += e * e;
    }
    return sum / static_cast<double>(records.size());
}

std::vector<bridge::QueryKey> sorted_keys(const std::vector<PredictionRecord>& records) {
    std::vector<bridge::QueryKey> keys;
    for (const auto& r : records) keys.push_back(r.key);
    std::sort(keys.begin(), keys.end());
    return keys;
}

}  // namespace

ForgettingReport checkpoint_sweep(const std::vector<Checkpoint>& checkpoints, const std::vector<Prompt>& id_gold,
                                  const std::vector<Prompt>& ood_gold, std::size_t window) {
    if (checkpoints.empty()) throw ConfigError("checkpoint sweep needs at least one checkpoint");
    const auto id_ids = index_prompts(id_gold);
    const auto ood_ids = index_prompts(ood_gold);
    const auto id_keys = sorted_keys(checkpoints.front().id_predictions);
    const auto ood_keys = sorted_keys(checkpoints.front().ood_predictions);
    std::unordered_map<std::string, Function> id_cache, ood_cache;
    std::vector<std::int64_t> steps;
    std::vector<double> id_loss, ood_loss;
    for (const auto& c : checkpoints) {
        if (sorted_keys(c.id_predictions) != id_keys || sorted_keys(c.ood_predictions) != ood_keys)
            throw AlignmentError("checkpoint " + std::to_string(c.step) +
                                 " does not cover the same prompts as checkpoint " +
                                 std::to_string(checkpoints.front().step));
        steps.push_back(c.step);
        id_loss.push_back(mean_record_loss(c.id_predictions, id_gold, id_ids, id_cache));
        ood_loss.push_back(mean_record_loss(c.ood_predictions, ood_gold, ood_ids, ood_cache));
    }
    return forgetting_from_losses(std::move(steps), std::move(id_loss), std::move(ood_loss), window);
}

std::vector<Checkpoint> load_checkpoint_dumps(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir);
    const std::regex pattern(R"((\d+)\.(id|ood)\.jsonl)");
    std::map<std::int64_t, std::pair<std::string, std::string>> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        std::smatch m;
        const std::string name = entry.path().filename().string();
        if (!std::regex_match(name, m, pattern)) continue;
        auto& slot = files[std::stoll(m[1].str())];
        (m[2] == "id" ? slot.first : slot.second) = entry.path().string();
    }
    if (files.empty()) throw ConfigError("no <step>.id.jsonl / <step>.ood.jsonl dumps in " + dir);
    std::vector<Checkpoint> out;
    for (const auto& [step, paths] : files) {
        if (paths.first.empty() || paths.second.empty())
            throw AlignmentError("checkpoint " + std::to_string(step) + " lacks its " +
                                 (paths.first.empty() ? "id" : "ood") + " dump in " + dir);
        out.push_back({step, bridge::read_records(paths.first), bridge::read_records(paths.second)});
    }
    return out;
}

namespace {

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(std::move(cur));
    return out;
}

}  // namespace

void write_forgetting_csv(std::ostream& out, const ForgettingReport& r) {
    out << "step,id_loss,ood_loss,id_avg,ood_avg\n";
    for (std::size_t i = 0; i < r.steps.size(); ++i)
        out << r.steps[i] << ',' << fmt17(r.id_loss[i]) << ',' << fmt17(r.ood_loss[i]) << ',' << fmt17(r.id_avg[i])
            << ',' << fmt17(r.ood_avg[i]) << '\n';
}

void write_curves_csv(std::ostream& out, const std::vector<EvalCurve>& curves) {
    if (curves.empty()) throw ConfigError("no curves to export");
    out << "predictor,k,mean,ci_low,ci_high\n";
    for (const auto& c : curves)
        for (std::size_t i = 0; i < c.size(); ++i)
            out << csv_field(c.name) << ',' << c.k[i] << ',' << fmt17(c.mean_loss[i]) << ',' << fmt17(c.ci_low[i])
                << ',' << fmt17(c.ci_high[i]) << '\n';
}

void write_curves_csv(const std::string& path, const std::vector<EvalCurve>& curves) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    write_curves_csv(out, curves);
    if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<EvalCurve> read_curves_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != "predictor,k,mean,ci_low,ci_high")
        throw ConfigError("curve CSV: unexpected header");
    std::vector<EvalCurve> curves;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto f = split_csv(line);
        if (f.size() != 5) throw ConfigError("curve CSV line " + std::to_string(lineno) + ": expected 5 fields");
        if (curves.empty() || curves.back().name != f[0]) {
            curves.emplace_back();
            curves.back().name = f[0];
        }
        auto& c = curves.back();
        try {
            c.k.push_back(std::stoll(f[1]));
            c.mean_loss.push_back(std::stod(f[2]));
            c.ci_low.push_back(std::stod(f[3]));
            c.ci_high.push_back(std::stod(f[4]));
        } catch (const std::exception&) {
            throw ConfigError("curve CSV line " + std::to_string(lineno) + ": malformed number");
        }
    }
    return curves;
}

namespace {

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

void write_curves_svg(std::ostream& out, const std::vector<EvalCurve>& curves, const SvgOptions& opts) {
    if (curves.empty()) throw ConfigError("no curves to plot");
    static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
    double kmin = std::numeric_limits<double>::infinity(), kmax = -kmin;
    double ymin = kmin, ymax = -kmin;
    double min_positive = kmin;
    for (const auto& c : curves)
        for (std::size_t i = 0; i < c.size(); ++i) {
            kmin = std::min(kmin, static_cast<double>(c.k[i]));
            kmax = std::max(kmax, static_cast<double>(c.k[i]));
            for (double v : {c.ci_low[i], c.mean_loss[i], c.ci_high[i]}) {
                ymin = std::min(ymin, v);
                ymax = std::max(ymax, v);
                if (v > 0) min_positive = std::min(min_positive, v);
            }
        }
    auto ty = [&](double v) {
        if (!opts.log_y) return v;
        return std::log10(std::max(v, std::isfinite(min_positive) ? min_positive : 1e-300));
    };
    double lo = ty(ymin), hi = ty(ymax);
    if (hi - lo < 1e-12) {
        lo -= 0.5;
        hi += 0.5;
    }
    if (kmax - kmin < 1e-12) {
        kmin -= 0.5;
        kmax += 0.5;
    }
    const double left = 60, right = 160, top = 30, bottom = 40;
    const double w = opts.width - left - right, h = opts.height - top - bottom;
    auto px = [&](double k) { return left + (k - kmin) / (kmax - kmin) * w; };
    auto py = [&](double v) { return top + (1.0 - (ty(v) - lo) / (hi - lo)) * h; };

    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opts.width << "\" height=\"" << opts.height
        << "\" viewBox=\"0 0 " << opts.width << ' ' << opts.height << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    if (!opts.title.empty())
        out << "<text x=\"" << left << "\" y=\"18\" font-size=\"14\">" << xml_escape(opts.title) << "</text>\n";
    out << "<line x1=\"" << left << "\" y1=\"" << top + h << "\" x2=\"" << left + w << "\" y2=\"" << top + h
        << "\" stroke=\"black\"/>\n"
        << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + h
        << "\" stroke=\"black\"/>\n"
        << "<text x=\"" << left + w / 2 << "\" y=\"" << opts.height - 8 << "\" font-size=\"12\">k</text>\n"
        << "<text x=\"4\" y=\"" << top + 10 << "\" font-size=\"12\">" << (opts.log_y ? "log10 loss" : "loss")
        << "</text>\n"
        << "<text x=\"4\" y=\"" << top + h << "\" font-size=\"10\">" << fmt17(opts.log_y ? lo : ymin).substr(0, 8)
        << "</text>\n"
        << "<text x=\"4\" y=\"" << top + 24 << "\" font-size=\"10\">" << fmt17(opts.log_y ? hi : ymax).substr(0, 8)
        << "</text>\n";
    for (std::size_t ci = 0; ci < curves.size(); ++ci) {
        const auto& c = curves[ci];
        const char* color = kColors[ci % std::size(kColors)];
        std::ostringstream band, line;
        for (std::size_t i = 0; i < c.size(); ++i) band << px(static_cast<double>(c.k[i])) << ',' << py(c.ci_high[i]) << ' ';
        for (std::size_t i = c.size(); i-- > 0;) band << px(static_cast<double>(c.k[i])) << ',' << py(c.ci_low[i]) << ' ';
        for (std::size_t i = 0; i < c.size(); ++i) line << px(static_cast<double>(c.k[i])) << ',' << py(c.mean_loss[i]) << ' ';
        out << "<polygon points=\"" << band.str() << "\" fill=\"" << color << "\" fill-opacity=\"0.2\" stroke=\"none\"/>\n"
            << "<polyline points=\"" << line.str() << "\" fill=\"none\" stroke=\"" << color
            << "\" stroke-width=\"1.5\"/>\n"
            << "<text x=\"" << left + w + 10 << "\" y=\"" << top + 14 + 16 * static_cast<double>(ci)
            << "\" font-size=\"12\" fill=\"" << color << "\">" << xml_escape(c.name) << "</text>\n";
    }
    out << "</svg>\n";
}

void write_curves_svg(const std::string& path, const std::vector<EvalCurve>& curves, const SvgOptions& opts) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    write_curves_svg(out, curves, opts);
    if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace icl::eval
