// Acceptance checks A1-A10. One PASS/FAIL line per criterion with the measured
// quantity, its tolerance and the wall time against the runtime budget.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "icl/baselines.hpp"
#include "icl/bayes.hpp"
#include "icl/eval.hpp"
#include "icl/posterior.hpp"
#include "icl/predictor.hpp"
#include "icl/predictors.hpp"
#include "icl/probe.hpp"
#include "icl/tasks.hpp"

using namespace icl;
namespace pr = icl::bridge::predictors;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    /// Records one sub-check; `what` is printed either way.
    void check(bool ok, const std::string& what) {
        pass &= ok;
        if (detail.tellp() > 0) detail << "; ";
        detail << what << (ok ? "" : " [x]");
    }
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

int failures = 0;

void run(const char* id, double budget_s, const std::function<void(Outcome&)>& body) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        body(o);
    } catch (const std::exception& e) {
        o.check(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = budget_s <= 0 || secs < budget_s;
    const bool pass = o.pass && in_time;
    failures += !pass;
    std::printf("%s %s  %s  (%.2fs%s)\n", id, pass ? "PASS" : "FAIL", o.detail.str().c_str(), secs,
                budget_s > 0 ? (in_time ? fmt(" < %.0fs", budget_s) : fmt(" exceeds %.0fs", budget_s)).c_str() : "");
    std::fflush(stdout);
}

std::vector<Eigen::Index> permutation(Eigen::Index n, Rng& rng) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    return idx;
}

// ---------------------------------------------------------------------------

void a1(Outcome& o) {
    Rng rng(101);
    const int d = 20;
    double worst = 0;
    for (int t = 0; t < 100; ++t) {
        const Eigen::Index k = 1 + t % (d - 1);
        Mat X = standard_normal(k, d, rng);
        Vec y = standard_normal(k, rng);
        Vec pme = bayes::gaussian_pme(GaussianPrior::standard(d), X, y, 1e-10);
        Vec ols = baselines::ols_min_norm(X, y).solution;
        worst = std::max(worst, (pme - ols).cwiseAbs().maxCoeff());
    }
    o.check(worst <= 1e-6, "max|pme - ols| = " + fmt("%.2e", worst) + " <= 1e-6 over 100 instances");
}

void a2(Outcome& o) {
    const int d = 10;
    const auto comps = gmm_pinned_first_coordinate(d);
    const std::vector<double> half{0.5, 0.5};

    // (a) empty prompt
    const double c0 = bayes::mixture_pme(comps, half, Mat(0, d), Vec(0)).combined_mean[0];
    o.check(std::abs(c0) <= 1e-8, "(a) k=0 w[0] = " + fmt("%.1e", c0));

    // (b), (c) prompts from each component
    auto handle = pr::mixture_pme(comps, half);
    double min_beta = 1.0, worst_loss = 0.0;
    for (int c = 0; c < 2; ++c) {
        auto set = generate_prompts(MixtureSpec::single(FunctionFamilySpec(family::DenseLinear{comps[c]})),
                                    InputDistribution::standard_normal(d), d + 1, 1, 200 + c, 100);
        double beta_sum = 0;
        for (const auto& p : set.prompts)
            beta_sum += bayes::mixture_pme(comps, half, p.xs.topRows(d), p.ys.head(d)).beta[c];
        min_beta = std::min(min_beta, beta_sum / 100.0);
        auto curve = eval::loss_at_k(handle, set.prompts, {10}, {100, 0.9, 0});
        worst_loss = std::max(worst_loss, curve.mean_loss[0]);
    }
    o.check(min_beta >= 0.99, "(b) mean beta_gen at k=10 = " + fmt("%.6f", min_beta) + " >= 0.99");
    o.check(worst_loss <= 1e-6, "(c) loss@10 = " + fmt("%.2e", worst_loss) + " <= 1e-6");

    // (d) inputs with a zero first coordinate carry no component information
    Rng rng(202);
    double drift = 0;
    for (const auto& alpha : {half, std::vector<double>{2.0 / 3.0, 1.0 / 3.0}})
        for (int c = 0; c < 2; ++c)
            for (Eigen::Index k = 0; k <= 2 * d; ++k) {
                Mat X = standard_normal(k, d, rng);
                X.col(0).setZero();
                Vec y = X * comps[c].sample(rng);
                drift = std::max(drift, std::abs(bayes::mixture_pme(comps, alpha, X, y).beta[0] - alpha[0]));
            }
    o.check(drift <= 1e-6, "(d) max|beta - alpha| = " + fmt("%.1e", drift) + " <= 1e-6");
}

void a3(Outcome& o) {
    const auto comps = gmm_pinned_first_coordinate(10);
    const double c0 = bayes::mixture_pme(comps, {2.0 / 3.0, 1.0 / 3.0}, Mat(0, 10), Vec(0)).combined_mean[0];
    o.check(std::abs(c0 - 1.0) <= 1e-8, "k=0 w[0] = " + fmt("%.12f", c0) + " (1 +- 1e-8)");
}

void a4(Outcome& o) {
    // Lasso: alpha tuned on a separate batch, then exact support recovery
    {
        FunctionFamilySpec spec(family::SparseLinear{20, 3});
        Rng rng(401);
        std::vector<baselines::TuningTask> tuning;
        for (int t = 0; t < 50; ++t) {
            Vec w = sample_function(spec, rng).weights();
            Mat X = standard_normal(20, 20, rng), Xe = standard_normal(20, 20, rng);
            tuning.push_back({X, X * w, Xe, Xe * w});
        }
        const std::vector<double> grid{1e-4, 1e-3, 1e-2, 0.1};
        const double alpha = baselines::lasso_tune(tuning, grid).alpha;
        int ok = 0;
        for (int t = 0; t < 100; ++t) {
            Vec w = sample_function(spec, rng).weights();
            Mat X = standard_normal(20, 20, rng);
            Vec est = baselines::lasso(X, X * w, alpha).solution;
            bool exact = true;
            for (Eigen::Index j = 0; j < 20; ++j) exact &= (std::abs(est[j]) > 1e-3) == (w[j] != 0.0);
            ok += exact;
        }
        o.check(ok >= 90, "lasso(alpha=" + fmt("%g", alpha) + ") support " + std::to_string(ok) + "/100");
    }
    // L-inf: sign vectors from 14 of 20 measurements
    {
        FunctionFamilySpec spec(family::SignVector{20});
        Rng rng(402);
        int ok = 0;
        for (int t = 0; t < 100; ++t) {
            Vec w = sample_function(spec, rng).weights();
            Mat X = standard_normal(14, 20, rng);
            Vec est = baselines::linf_min(X, X * w).solution;
            bool exact = true;
            for (Eigen::Index j = 0; j < 20; ++j) exact &= (est[j] > 0) == (w[j] > 0) && std::abs(est[j] - w[j]) < 1e-6;
            ok += exact;
        }
        o.check(ok >= 90, "linf sign recovery " + std::to_string(ok) + "/100");
    }
    // nuclear norm: rank-1 6x6 from 35 measurements
    {
        FunctionFamilySpec spec(family::LowRank{6, 1});
        Rng rng(403);
        int ok = 0;
        for (int t = 0; t < 50; ++t) {
            Vec w = sample_function(spec, rng).weights();
            Mat X = standard_normal(35, 36, rng);
            Vec est = baselines::nuclear_norm_min(X, X * w, 6).solution;
            ok += (est - w).squaredNorm() / 36.0 <= 1e-6;
        }
        o.check(ok >= 45, "nuclear MSE<=1e-6 " + std::to_string(ok) + "/50");
    }
}

void a5(Outcome& o) {
    Rng rng(501);
    FunctionFamilySpec spec(family::SignVector{8});
    const auto support = posterior::ProductSupport::sign_vectors(8);
    for (int k : {2, 4, 6}) {
        Vec w = sample_function(spec, rng).weights();
        Mat X = standard_normal(k, 8, rng);
        Vec y = X * w;
        posterior::SamplerConfig cfg;
        cfg.chains = 4;
        cfg.seed = 5000 + static_cast<std::uint64_t>(k);
        auto res = posterior::mcmc_pme(posterior::McmcTarget::discrete(support), X, y, cfg);
        Vec exact = posterior::enumerate_discrete_pme(support, X, y, cfg.noise_var);
        const double mse = probe::weight_mse(res.mean, exact);
        o.check(mse <= 0.05 && res.diagnostics.max_rhat <= 1.1,
                "k=" + std::to_string(k) + " mse " + fmt("%.1e", mse) + " rhat " + fmt("%.3f", res.diagnostics.max_rhat));
    }
}

void a6(Outcome& o) {
    auto params = eval::SuiteParams::defaults_for(eval::SuiteKind::NlrDiscrete);
    params.n_prompts = eval::kDefaultPromptCount;
    std::vector<Eigen::Index> ks;
    for (Eigen::Index k = 1; k <= 15; ++k) ks.push_back(k);
    const eval::BootstrapConfig boot{200, 0.9, 0};

    auto curves = [&](std::size_t K) {
        auto suite = eval::build_multitask_suite(eval::SuiteKind::NlrDiscrete, params, K, 601);
        const auto& nlr = std::get<family::NoisyLinearDiscrete>(suite.pretrain_families.at(0).variant);
        auto dm = eval::loss_at_k(pr::dmmse(DiscreteTaskSet(nlr.W, nlr.noise_var)), suite.ood_prompts.prompts, ks, boot);
        auto rg = eval::loss_at_k(pr::ridge(nlr.noise_var), suite.ood_prompts.prompts, ks, boot);
        return std::pair{dm, rg};
    };

    auto [dm_big, rg_big] = curves(std::size_t{1} << 14);
    double worst = 0;
    Eigen::Index worst_k = 0;
    for (std::size_t j = 0; j < ks.size(); ++j) {
        const double rel = std::abs(dm_big.mean_loss[j] - rg_big.mean_loss[j]) / rg_big.mean_loss[j];
        if (rel > worst) worst = rel, worst_k = ks[j];
    }
    o.check(worst <= 0.10, "K=2^14 max rel gap " + fmt("%.3f", worst) + " at k=" + std::to_string(worst_k) +
                               " (dMMSE " + fmt("%.4f", dm_big.at(worst_k)) + " vs ridge " +
                               fmt("%.4f", rg_big.at(worst_k)) + ", limit 0.10)");

    auto [dm_small, rg_small] = curves(8);
    const double ratio = dm_small.at(15) / rg_small.at(15);
    o.check(ratio >= 1.2, "K=2^3 dMMSE/ridge at k=15 = " + fmt("%.3f", ratio) + " >= 1.2");
}

void a7(Outcome& o) {
    const int d = 20;
    std::vector<std::pair<int, int>> S = {{0, 1}, {2, 3}, {4, 4}, {5, 9}, {7, 12}, {10, 19}, {15, 15}, {6, 18}};
    auto set = generate_prompts(MixtureSpec::single(FunctionFamilySpec(family::MonomialSubset{S, d})),
                                InputDistribution::standard_normal(d), 232, 1, 701, 6);
    std::vector<Eigen::Index> ks;
    for (Eigen::Index k = 0; k < 200; k += 20) ks.push_back(k);
    for (Eigen::Index k = 200; k <= 231; ++k) ks.push_back(k);

    auto first_zero = [&](const FeatureMap& phi) {
        auto c = eval::loss_at_k(pr::ols_features(phi), set.prompts, ks, {50, 0.9, 0});
        for (std::size_t j = 0; j < c.size(); ++j)
            if (c.mean_loss[j] <= 1e-8) return std::pair{c.k[j], j > 0 ? c.mean_loss[j - 1] : 0.0};
        return std::pair{Eigen::Index{-1}, 0.0};
    };
    auto [k_full, before_full] = first_zero(FeatureMap::all_monomials(d));
    auto [k_poly, before_poly] = first_zero(FeatureMap::poly2(d));
    o.check(k_full == 210, "OLS_Phi first <=1e-8 at k=" + std::to_string(k_full) + " (loss just before " +
                               fmt("%.2e", before_full) + ")");
    o.check(k_poly == 231, "OLS_poly2 first <=1e-8 at k=" + std::to_string(k_poly) + " (loss just before " +
                               fmt("%.2e", before_poly) + ")");
}

void a8(Outcome& o) {
    const int N = 10;
    const double L = 5.0;
    Rng rng(801);
    double err = 0;
    for (int t = 0; t < 20; ++t) {
        Vec a = standard_normal(N + 1, rng), b = standard_normal(N + 1, rng);
        b[0] = 0;
        auto h = bridge::in_process("synth", [&](const Mat&, const Vec&, const Vec& q) {
            double v = a[0];
            for (int n = 1; n <= N; ++n) {
                const double th = n * std::numbers::pi * q[0] / L;
                v += a[n] * std::cos(th) + b[n] * std::sin(th);
            }
            return v;
        });
        auto s = probe::dft_spectrum(h, Mat(0, 1), Vec(0), N, L);
        err = std::max({err, (s.a - a).cwiseAbs().maxCoeff(), (s.b - b).cwiseAbs().maxCoeff()});
    }
    o.check(err <= 1e-8, "synthesized coefficients max err " + fmt("%.1e", err));

    const int M = 4;
    auto pme = pr::bayes_optimal(MixtureSpec::single(FunctionFamilySpec(family::FourierSeries{N, L})));
    auto gold = generate_prompts(MixtureSpec::single(FunctionFamilySpec(family::FourierSeries{M, L})),
                                 InputDistribution::uniform(L), 21, 1, 802, 20);
    double leak = 0;
    for (const auto& p : gold.prompts) {
        auto s = probe::dft_spectrum(pme, p.xs, p.ys, N, L);
        leak = std::max(leak, s.power.tail(N - M).maxCoeff());
    }
    o.check(leak <= 1e-8, "PME(M=4, k=21) max power n>4 " + fmt("%.1e", leak));
}

void a9(Outcome& o) {
    // bootstrap determinism
    {
        Rng rng(901);
        Mat losses = standard_normal(300, 5, rng).cwiseAbs();
        const std::vector<Eigen::Index> ks{0, 1, 2, 3, 4};
        auto c1 = eval::curve_from_losses("a", ks, losses, {1000, 0.9, 7});
        auto c2 = eval::curve_from_losses("a", ks, losses, {1000, 0.9, 7});
        o.check(c1.ci_low == c2.ci_low && c1.ci_high == c2.ci_high && c1.mean_loss == c2.mean_loss,
                "bootstrap bands identical for equal seeds");
    }
    // order invariance of every closed-form predictor
    {
        const int d = 6;
        Rng rng(902);
        const auto comps = gmm_pinned_first_coordinate(d);
        DiscreteTaskSet tasks({standard_normal(d, rng), standard_normal(d, rng), standard_normal(d, rng)}, 0.25);
        struct Case {
            bridge::PredictorHandle h;
            int dim;
            bool underdetermined_only;  // equality-constrained solvers need consistent systems
        };
        const std::vector<Case> cases{
            {pr::gaussian_pme(GaussianPrior::standard(d), 0.0), d, false},
            {pr::gaussian_pme(GaussianPrior::standard(d), 1e-10), d, false},
            {pr::gaussian_pme(GaussianPrior::skewed(d), 0.25), d, false},
            {pr::mixture_pme(comps, {0.5, 0.5}), d, false},
            {pr::dmmse(tasks), d, false},
            {pr::ridge(0.25), d, false},
            {pr::ols(), d, false},
            {pr::ols_features(FeatureMap::all_monomials(d)), d, false},
            {pr::lasso_features(FeatureMap::identity(d), 0.1), d, false},
            {pr::linf(), d, true},
            {pr::nuclear(2), 4, true},
        };
        double worst = 0;
        for (int t = 0; t < 30; ++t) {
            const Eigen::Index k = 1 + t % 12;
            for (const auto& c : cases) {
                if (c.underdetermined_only && k >= c.dim) continue;
                Mat X = standard_normal(k, c.dim, rng);
                Vec y = standard_normal(k, rng);
                Vec q = standard_normal(c.dim, rng);
                auto perm = permutation(k, rng);
                Mat Xp(k, c.dim);
                Vec yp(k);
                for (Eigen::Index r = 0; r < k; ++r) Xp.row(r) = X.row(perm[r]), yp[r] = y[perm[r]];
                worst = std::max(worst, std::abs(c.h.predict(X, y, q) - c.h.predict(Xp, yp, q)));
            }
        }
        o.check(worst <= 1e-10, "max order sensitivity over 11 predictors " + fmt("%.1e", worst));
    }
    // protocol round trip
    {
        Rng rng(903);
        bool ok = true;
        for (int t = 0; t < 50; ++t) {
            Mat xs = standard_normal(t % 7, 3, rng) * std::pow(10.0, t % 9 - 4);
            Vec ys = standard_normal(t % 7, rng) * 1e-300;
            Vec q = standard_normal(3, rng) * 1e300;
            auto req = bridge::parse_request(nlohmann::json::parse(bridge::make_request("p/1/2", xs, ys, q).dump()));
            ok &= req.id == "p/1/2" && req.xs == xs && req.ys == ys && req.query == q;
            bridge::PredictionRecord rec{{"p" + std::to_string(t), t, t % 3}, std::nextafter(1.0 / 3.0, 1.0) * t};
            auto back = bridge::PredictionRecord::from_json(nlohmann::json::parse(rec.to_json().dump()));
            ok &= back.key == rec.key && back.prediction == rec.prediction;
        }
#ifdef ICL_PREDICTOR_STUB
        auto echo = bridge::subprocess("echo", ICL_PREDICTOR_STUB);
        for (int t = 1; t < 20; ++t) {
            Mat xs = standard_normal(t, 2, rng);
            Vec ys = standard_normal(t, rng) / 3.0;
            ok &= echo.predict(xs, ys, standard_normal(2, rng)) == ys[t - 1];
        }
#endif
        o.check(ok, "request/record/subprocess round trips bit-identical");
    }
}

void a10(Outcome& o) {
    const int d = 10;
    const auto comps = gmm_pinned_first_coordinate(d);
    auto h = pr::mixture_pme(comps, {0.5, 0.5});
    auto set = generate_prompts(MixtureSpec::single(FunctionFamilySpec(family::GMMLinear{comps, {0.5, 0.5}})),
                                InputDistribution::standard_normal(d), d + 1, 1, 1001, 10);
    double worst = 0;
    for (const auto& p : set.prompts)
        for (Eigen::Index k = 0; k <= 10; ++k) {
            const Mat X = p.xs.topRows(k);
            const Vec y = p.ys.head(k);
            auto r = probe::probe_weights(h, X, y, InputDistribution::standard_normal(d), 0, 1100 + k);
            const Vec internal = bayes::mixture_pme(comps, {0.5, 0.5}, X, y).combined_mean;
            worst = std::max(worst, (r.w_probe - internal).cwiseAbs().maxCoeff());
        }
    o.check(worst <= 1e-8, "max|w_probe - combined mean| over k=0..10 = " + fmt("%.1e", worst));
}

}  // namespace

int main() {
    run("A1", 5, a1);
    run("A2", 30, a2);
    run("A3", 1, a3);
    run("A4", 600, a4);
    run("A5", 300, a5);
    run("A6", 300, a6);
    run("A7", 120, a7);
    run("A8", 60, a8);
    run("A9", 60, a9);
    run("A10", 0, a10);
    std::printf("%d of 10 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
