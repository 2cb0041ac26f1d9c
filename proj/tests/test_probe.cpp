#include <cmath>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "icl/bayes.hpp"
#include "icl/predictors.hpp"
#include "icl/probe.hpp"

using namespace icl;
using namespace icl::probe;
namespace pr = icl::bridge::predictors;

TEST_CASE("probing an exactly linear predictor recovers its weights") {
    Rng rng(1);
    for (int d : {1, 3, 10, 20}) {
        const Vec w = standard_normal(d, rng);
        auto h = bridge::in_process("lin", [w](const Mat&, const Vec&, const Vec& q) { return w.dot(q); });
        auto r = probe_weights(h, Mat(0, d), Vec(0), InputDistribution::standard_normal(d), 0, 5);
        CHECK(r.n_queries == 2 * d);
        CHECK((r.w_probe - w).cwiseAbs().maxCoeff() <= 1e-10);
        CHECK(r.residual <= 1e-10);
        CHECK(r.residual >= 0);
    }
}

TEST_CASE("probing the Gaussian PME returns the posterior mean") {
    Rng rng(2);
    const auto prior = GaussianPrior::skewed(8);
    auto h = pr::gaussian_pme(prior, 1e-4);
    for (Eigen::Index k : {0, 3, 7, 12}) {
        Mat X = standard_normal(k, 8, rng);
        Vec y = standard_normal(k, rng);
        auto r = probe_weights(h, X, y, InputDistribution::standard_normal(8), 0, 9);
        CHECK((r.w_probe - bayes::gaussian_pme(prior, X, y, 1e-4)).cwiseAbs().maxCoeff() <= 1e-8);
    }
}

TEST_CASE("mixture PME probe on the symmetric pinned-coordinate mixture") {
    const auto comps = gmm_pinned_first_coordinate(10);
    auto h = pr::mixture_pme(comps, {0.5, 0.5});
    auto r = probe_weights(h, Mat(0, 10), Vec(0), InputDistribution::standard_normal(10), 0, 3);
    CHECK(std::abs(r.w_probe[0]) <= 1e-6);

    // internal combined mean at every prefix length of a prompt from component 0
    FunctionFamilySpec spec(family::GMMLinear{comps, {0.5, 0.5}});
    auto set = generate_prompts(MixtureSpec::single(spec), InputDistribution::standard_normal(10), 11, 1, 4, 3);
    for (const auto& p : set.prompts)
        for (Eigen::Index k = 0; k <= 10; ++k) {
            const Mat X = p.xs.topRows(k);
            const Vec y = p.ys.head(k);
            auto pr_ = probe_weights(h, X, y, InputDistribution::standard_normal(10), 0, 100 + k);
            const Vec internal = bayes::mixture_pme(comps, {0.5, 0.5}, X, y).combined_mean;
            CHECK((pr_.w_probe - internal).cwiseAbs().maxCoeff() <= 1e-8);
        }
}

TEST_CASE("probe argument and failure handling") {
    auto lin = bridge::in_process("lin", [](const Mat&, const Vec&, const Vec& q) { return q.sum(); });
    CHECK_THROWS_AS(probe_weights(lin, Mat(0, 3), Vec(0), Mat::Zero(2, 3)), ConfigError);
    CHECK_THROWS_AS(probe_weights(lin, Mat(0, 3), Vec(0), InputDistribution::standard_normal(2), 0, 1), ShapeError);

    int calls = 0;
    auto flaky = bridge::in_process(
        "flaky",
        [&](const Mat&, const Vec&, const Vec&) -> double {
            if (++calls == 4) throw NumericError("bad");
            return 0.0;
        },
        bridge::Concurrency::Serial);
    try {
        probe_weights(flaky, Mat(0, 2), Vec(0), InputDistribution::standard_normal(2), 0, 1);
        FAIL("expected PredictorError");
    } catch (const bridge::PredictorError& e) {
        CHECK(std::string(e.what()).find("probe query 3") != std::string::npos);
    }
}

TEST_CASE("a pure cosine has a single spectral line") {
    const double L = 5.0;
    auto h = bridge::in_process("cos3", [L](const Mat&, const Vec&, const Vec& q) {
        return std::cos(3 * std::numbers::pi * q[0] / L);
    });
    auto s = dft_spectrum(h, Mat(0, 1), Vec(0), 10, L, 256);
    REQUIRE(s.power.size() == 11);
    CHECK(std::abs(s.power[3] - 1.0) <= 1e-10);
    for (int n = 0; n <= 10; ++n) {
        if (n != 3) CHECK(s.power[n] <= 1e-10);
        CHECK(s.power[n] == s.a[n] * s.a[n] + s.b[n] * s.b[n]);
        CHECK(s.power[n] >= 0);
    }
}

TEST_CASE("synthesized spectra are recovered") {
    Rng rng(4);
    for (int N : {0, 1, 4, 10}) {
        for (int m : {2 * N + 1, 2 * N + 2, 64, 256}) {
            if (m < 2 * N + 1) continue;
            const double L = 0.5 + N;
            Vec a = standard_normal(N + 1, rng), b = standard_normal(N + 1, rng);
            b[0] = 0;
            const Vec x = dft_grid(L, m);
            Vec v(m);
            for (int i = 0; i < m; ++i) {
                v[i] = a[0];
                for (int n = 1; n <= N; ++n) {
                    const double t = n * std::numbers::pi * x[i] / L;
                    v[i] += a[n] * std::cos(t) + b[n] * std::sin(t);
                }
            }
            auto s = spectrum_from_values(v, N, L);
            CHECK((s.a - a).cwiseAbs().maxCoeff() <= 1e-8);
            CHECK((s.b - b).cwiseAbs().maxCoeff() <= 1e-8);

            // a constant offset moves a_0 only
            auto shifted = spectrum_from_values((v.array() + 2.5).matrix(), N, L);
            CHECK(std::abs(shifted.a[0] - a[0] - 2.5) <= 1e-8);
            for (int n = 1; n <= N; ++n) CHECK(std::abs(shifted.power[n] - s.power[n]) <= 1e-8);
        }
    }
    CHECK_THROWS_AS(spectrum_from_values(Vec::Zero(6), 3, 1.0), ConfigError);
    auto zero = pr::zero();
    CHECK_THROWS_AS(dft_spectrum(zero, Mat(0, 1), Vec(0), 10, 1.0, 20), ConfigError);
    CHECK_THROWS_AS(dft_spectrum(zero, Mat(0, 2), Vec(0), 1, 1.0, 20), ShapeError);
}

TEST_CASE("Fourier PME with a determined prompt has no power above the gold frequency") {
    const int N = 10, M = 4;
    const double L = 5.0;
    auto pme = pr::bayes_optimal(MixtureSpec::single(FunctionFamilySpec(family::FourierSeries{N, L})));
    auto gold_set = generate_prompts(MixtureSpec::single(FunctionFamilySpec(family::FourierSeries{M, L})),
                                     InputDistribution::uniform(L), 2 * N + 1, 1, 17, 10);
    for (const auto& p : gold_set.prompts) {
        auto s = dft_spectrum(pme, p.xs, p.ys, N, L);
        for (int n = M + 1; n <= N; ++n) CHECK(s.power[n] <= 1e-8);
    }
}

TEST_CASE("Fourier PME spreads power across frequencies at k = 2") {
    const int N = 10;
    const double L = 5.0;
    auto mix = MixtureSpec::single(FunctionFamilySpec(family::FourierSeries{N, L}));
    auto pme = pr::bayes_optimal(mix);
    auto set = generate_prompts(mix, InputDistribution::uniform(L), 2, 1, 23, 100);
    Vec avg = Vec::Zero(N + 1);
    for (const auto& p : set.prompts) avg += dft_spectrum(pme, p.xs, p.ys, N, L).power;
    avg /= 100.0;
    const Vec tail = avg.tail(N);
    CHECK(tail.maxCoeff() / tail.minCoeff() <= 10.0);
}

TEST_CASE("weight_mse") {
    CHECK(weight_mse(Vec::Ones(4), Vec::Ones(4)) == 0.0);
    Vec a(2), b(2);
    a << 1, 0;
    b << 0, 1;
    CHECK(weight_mse(a, b) == 1.0);
    Rng rng(6);
    for (int t = 0; t < 50; ++t) {
        const int d = 1 + t % 9;
        Vec u = standard_normal(d, rng), v = standard_normal(d, rng);
        double s = 0;
        for (int i = 0; i < d; ++i) s += (u[i] - v[i]) * (u[i] - v[i]);
        CHECK(weight_mse(u, v) == doctest::Approx(s / d).epsilon(1e-14));
    }
    CHECK_THROWS_AS(weight_mse(Vec::Zero(2), Vec::Zero(3)), ShapeError);
}
