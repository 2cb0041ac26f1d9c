#include <cmath>
#include <vector>

#include "doctest.h"
#include "icl/bayes.hpp"
#include "icl/function_family.hpp"
#include "icl/posterior.hpp"

using namespace icl;
using namespace icl::posterior;

TEST_CASE("enumeration trivial cases") {
    CHECK(enumerate_discrete_pme(ProductSupport::sign_vectors(2), Mat(0, 2), Vec(0)) == Vec::Zero(2));

    Mat X(1, 3);
    X << 1, 1, 1;
    Vec y(1);
    y << 3;
    Vec w = enumerate_discrete_pme(ProductSupport::sign_vectors(3), X, y, 1e-6);
    CHECK((w - Vec::Ones(3)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("z task enumeration matches hand summation over 16 points") {
    Rng rng(1);
    const std::vector<double> vals = {-2, -1, 1, 2};
    for (int trial = 0; trial < 5; ++trial) {
        Mat X = standard_normal(1, 4, rng);
        Vec y = standard_normal(1, rng);
        const double eps2 = 0.5;
        Vec num = Vec::Zero(4);
        double den = 0.0;
        for (double a : vals)
            for (double b : vals) {
                Vec w(4);
                w << a, b, a, b;
                const double r = y[0] - X.row(0).dot(w);
                const double e = std::exp(-r * r / (2 * eps2));
                num += e * w;
                den += e;
            }
        Vec w = enumerate_discrete_pme(ProductSupport::z_task(4), X, y, eps2);
        CHECK((w - num / den).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("product enumeration equals enumeration of the explicit list") {
    Rng rng(2);
    const int d = 6;
    std::vector<Vec> list;
    for (int code = 0; code < (1 << d); ++code) {
        Vec w(d);
        for (int j = 0; j < d; ++j) w[j] = (code >> j) & 1 ? 1.0 : -1.0;
        list.push_back(w);
    }
    Mat X = standard_normal(3, d, rng);
    Vec y = X * list[17] + 0.1 * standard_normal(3, rng);
    Vec a = enumerate_discrete_pme(ProductSupport::sign_vectors(d), X, y, 0.05);
    Vec b = enumerate_discrete_pme(list, X, y, 0.05);
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
    // the discrete-task estimator computes the same quantity
    Vec c = bayes::dmmse_pme(DiscreteTaskSet(list, 0.05), X, y);
    CHECK((a - c).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("enumeration is deterministic and invariant to constraint order") {
    Rng rng(3);
    Mat X = standard_normal(5, 10, rng);
    Vec y = standard_normal(5, rng);
    Vec a = enumerate_discrete_pme(ProductSupport::sign_vectors(10), X, y, 0.3);
    Mat Xr = X.colwise().reverse();
    Vec yr = y.reverse();
    CHECK(a == enumerate_discrete_pme(ProductSupport::sign_vectors(10), X, y, 0.3));
    CHECK(a == enumerate_discrete_pme(ProductSupport::sign_vectors(10), Xr, yr, 0.3));
}

TEST_CASE("enumeration converges to the average of exactly consistent points as the variance vanishes") {
    // consistent with x1 + x2 = 0, x3 = 1: (1, -1, 1) and (-1, 1, 1)
    Mat X(2, 3);
    X << 1, 1, 0, 0, 0, 1;
    Vec y(2);
    y << 0, 1;
    const Vec target = (Vec(3) << 0, 0, 1).finished();
    double prev = 1e300;
    for (double eps2 : {1.0, 1e-1, 1e-2, 1e-4, 1e-8}) {
        double dist = (enumerate_discrete_pme(ProductSupport::sign_vectors(3), X, y, eps2) - target).norm();
        CHECK(dist <= prev + 1e-15);
        prev = dist;
    }
    CHECK(prev < 1e-12);

    // an explicit support with three consistent points among five
    std::vector<Vec> support = {(Vec(2) << 1, 1).finished(), (Vec(2) << 2, 0).finished(), (Vec(2) << 0, 2).finished(),
                                (Vec(2) << 3, 3).finished(), (Vec(2) << -1, 0).finished()};
    Mat X2(1, 2);
    X2 << 1, 1;
    Vec y2(1);
    y2 << 2;
    Vec w = enumerate_discrete_pme(support, X2, y2, 1e-8);
    CHECK((w - Vec::Constant(2, 1.0)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("enumeration guards its capacity") {
    CHECK_THROWS_AS(enumerate_discrete_pme(ProductSupport::sign_vectors(25), Mat::Zero(1, 25), Vec::Zero(1)),
                    CapacityError);
    CHECK_THROWS_WITH(enumerate_discrete_pme(ProductSupport::sign_vectors(30), Mat::Zero(1, 30), Vec::Zero(1)),
                      doctest::Contains("mcmc"));
    CHECK_THROWS_AS(enumerate_discrete_pme(ProductSupport::sign_vectors(3), Mat::Zero(1, 3), Vec::Zero(1), 0.0),
                    ConfigError);
}

TEST_CASE("sampler configuration is validated") {
    SamplerConfig c;
    c.n_samples = 10;
    c.burn_in = 10;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.noise_var = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.step_size = -1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.burn_in = -1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("chain summaries: independent draws, autocorrelated draws, disagreeing chains") {
    Rng rng(4);
    const Eigen::Index n = 20000;
    Mat iid = standard_normal(4, n, rng);
    auto s = summarize_chains(iid);
    CHECK(s.rhat < 1.01);
    CHECK(s.ess == doctest::Approx(4.0 * n).epsilon(0.15));

    // AR(1) with phi = 0.9 has integrated autocorrelation time (1 + phi) / (1 - phi) = 19
    Mat ar(4, n);
    for (int c = 0; c < 4; ++c) {
        double v = 0.0;
        std::normal_distribution<double> g(0.0, 1.0);
        for (Eigen::Index i = 0; i < n; ++i) ar(c, i) = v = 0.9 * v + g(rng);
    }
    CHECK(summarize_chains(ar).ess == doctest::Approx(4.0 * n / 19.0).epsilon(0.25));

    Mat apart = standard_normal(4, 1000, rng);
    apart.row(0).array() += 5.0;
    CHECK(summarize_chains(apart).rhat > 1.1);

    Mat constant = Mat::Constant(4, 100, 2.0);
    CHECK(summarize_chains(constant).rhat == 1.0);
}

TEST_CASE("random-walk PME matches the Gaussian closed form") {
    Rng rng(5);
    const auto prior = GaussianPrior::standard(5);
    Mat X = standard_normal(3, 5, rng);
    Vec y = X * prior.sample(rng);
    SamplerConfig cfg;
    cfg.n_samples = 40000;
    cfg.burn_in = 10000;
    cfg.seed = 11;
    auto res = mcmc_pme(McmcTarget::gaussian(prior), X, y, cfg);
    Vec exact = bayes::gaussian_pme(prior, X, y, cfg.noise_var);
    CHECK(res.diagnostics.converged());
    for (Eigen::Index j = 0; j < 5; ++j) CHECK(std::abs(res.mean[j] - exact[j]) <= 3.0 * res.diagnostics.mc_stderr[j]);
    CHECK(res.diagnostics.acceptance_rate > 0.1);
    CHECK(res.diagnostics.acceptance_rate < 0.5);
}

TEST_CASE("pCN sampling matches the Gaussian closed form at a loose likelihood") {
    Rng rng(6);
    const auto prior = GaussianPrior::standard(4);
    Mat X = standard_normal(2, 4, rng);
    Vec y = X * prior.sample(rng);
    SamplerConfig cfg;
    cfg.n_samples = 40000;
    cfg.burn_in = 5000;
    cfg.noise_var = 0.5;
    cfg.step_size = 0.5;
    cfg.seed = 12;
    auto res = mcmc_pme(McmcTarget::gaussian(prior, McmcTarget::Move::CrankNicolson), X, y, cfg);
    Vec exact = bayes::gaussian_pme(prior, X, y, cfg.noise_var);
    CHECK(res.diagnostics.converged());
    for (Eigen::Index j = 0; j < 4; ++j) CHECK(std::abs(res.mean[j] - exact[j]) <= 3.0 * res.diagnostics.mc_stderr[j]);
}

TEST_CASE("empty prompts sample the prior") {
    SamplerConfig cfg;
    cfg.n_samples = 20000;
    cfg.burn_in = 2000;
    cfg.seed = 13;
    const auto prior = GaussianPrior(Vec::LinSpaced(3, -1.0, 1.0), Mat::Identity(3, 3));
    auto res = mcmc_pme(McmcTarget::gaussian(prior), Mat(0, 3), Vec(0), cfg);
    for (Eigen::Index j = 0; j < 3; ++j)
        CHECK(std::abs(res.mean[j] - prior.mean()[j]) <= 3.0 * res.diagnostics.mc_stderr[j]);
}

TEST_CASE("generic prior sampler and log density interface") {
    Rng rng(7);
    Mat X = standard_normal(2, 3, rng);
    Vec y = standard_normal(2, rng);
    SamplerConfig cfg;
    cfg.noise_var = 0.2;
    cfg.seed = 14;
    auto res = mcmc_pme([](Rng& r) { return standard_normal(3, r); },
                        [](const Vec& w) { return -0.5 * w.squaredNorm(); }, X, y, cfg);
    Vec exact = bayes::gaussian_pme(GaussianPrior::standard(3), X, y, cfg.noise_var);
    for (Eigen::Index j = 0; j < 3; ++j) CHECK(std::abs(res.mean[j] - exact[j]) <= 3.0 * res.diagnostics.mc_stderr[j]);
}

TEST_CASE("estimator spread shrinks with more samples") {
    Rng rng(8);
    const auto prior = GaussianPrior::standard(5);
    Mat X = standard_normal(3, 5, rng);
    Vec y = X * prior.sample(rng);
    auto spread = [&](std::int64_t kept) {
        double acc = 0.0;
        const int pairs = 6;
        for (int p = 0; p < pairs; ++p) {
            SamplerConfig cfg;
            cfg.burn_in = 4000;
            cfg.n_samples = cfg.burn_in + kept;
            cfg.seed = 100 + 2 * static_cast<std::uint64_t>(p);
            Vec a = mcmc_pme(McmcTarget::gaussian(prior), X, y, cfg).mean;
            cfg.seed += 1;
            Vec b = mcmc_pme(McmcTarget::gaussian(prior), X, y, cfg).mean;
            acc += (a - b).squaredNorm();
        }
        return std::sqrt(acc / pairs);
    };
    const double small = spread(2500), large = spread(10000);
    MESSAGE("seed-to-seed RMS disagreement: " << small << " -> " << large);
    CHECK(small / large >= 1.5);
}

TEST_CASE("low-rank sampling in factor coordinates agrees across seeds") {
    FunctionFamilySpec spec(family::LowRank{4, 1});
    Rng rng(9);
    Vec w = sample_function(spec, rng).weights();
    Mat X = standard_normal(6, 16, rng);
    Vec y = X * w;
    SamplerConfig cfg;
    cfg.n_samples = 40000;
    cfg.burn_in = 10000;
    cfg.noise_var = 1e-2;
    cfg.seed = 21;
    auto a = mcmc_pme(McmcTarget::low_rank(4, 1), X, y, cfg);
    cfg.seed = 22;
    auto b = mcmc_pme(McmcTarget::low_rank(4, 1), X, y, cfg);
    for (Eigen::Index j = 0; j < 16; ++j) {
        const double se = std::hypot(a.diagnostics.mc_stderr[j], b.diagnostics.mc_stderr[j]);
        CHECK(std::abs(a.mean[j] - b.mean[j]) <= 3.0 * se);
    }
}

TEST_CASE("discrete sampling agrees with enumeration on sign vectors") {
    Rng rng(10);
    FunctionFamilySpec spec(family::SignVector{8});
    for (int k : {2, 4, 6}) {
        Vec w = sample_function(spec, rng).weights();
        Mat X = standard_normal(k, 8, rng);
        Vec y = X * w;
        SamplerConfig cfg;
        cfg.n_samples = 20000;
        cfg.burn_in = 5000;
        cfg.seed = 30 + static_cast<std::uint64_t>(k);
        auto support = ProductSupport::sign_vectors(8);
        auto res = mcmc_pme(McmcTarget::discrete(support), X, y, cfg);
        Vec exact = enumerate_discrete_pme(support, X, y, cfg.noise_var);
        CHECK(res.diagnostics.max_rhat <= 1.1);
        CHECK((res.mean - exact).squaredNorm() / 8.0 <= 0.05);
    }
}

TEST_CASE("diagnostics serialize and flag unmixed chains") {
    Diagnostics d;
    d.max_rhat = 1.5;
    d.ess = d.rhat = d.mc_stderr = Vec::Zero(1);
    auto j = d.to_json();
    CHECK(j["converged"] == false);
    CHECK(j.contains("acceptance_rate"));
}
