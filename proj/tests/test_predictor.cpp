#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>
#include <vector>

#include "doctest.h"
#include "icl/bayes.hpp"
#include "icl/predictor.hpp"
#include "icl/predictors.hpp"

using namespace icl;
using namespace icl::bridge;

namespace {

const std::string kStub = ICL_PREDICTOR_STUB;

std::vector<Prompt> dense_prompts(int d, Eigen::Index p, std::size_t count, std::uint64_t seed,
                                  Eigen::Index n_queries = 1) {
    auto mix = MixtureSpec::single(FunctionFamilySpec(family::DenseLinear{GaussianPrior::standard(d)}));
    return generate_prompts(mix, InputDistribution::standard_normal(d), p, n_queries, seed, count).prompts;
}

/// Doubles that stress shortest round-trip formatting.
double awkward_double(Rng& rng) {
    std::uniform_int_distribution<int> kind(0, 5);
    std::normal_distribution<double> normal;
    switch (kind(rng)) {
        case 0: return normal(rng);
        case 1: return normal(rng) * 1e300;
        case 2: return normal(rng) * 1e-300;
        case 3: return std::numeric_limits<double>::denorm_min() * (1 + kind(rng));
        case 4: return 0.1 * kind(rng);
        default: return std::nextafter(1.0, 2.0) * normal(rng);
    }
}

std::string dump(const std::vector<PredictionRecord>& records) {
    std::ostringstream s;
    write_records(s, records);
    return s.str();
}

}  // namespace

TEST_CASE("prediction records and requests round-trip exactly") {
    Rng rng(11);
    for (int t = 0; t < 500; ++t) {
        PredictionRecord r{{"p" + std::to_string(t), t % 7, t % 3}, awkward_double(rng)};
        const auto back = PredictionRecord::from_json(nlohmann::json::parse(r.to_json().dump()));
        CHECK(back.key == r.key);
        CHECK(back.prediction == r.prediction);
    }
    for (int t = 0; t < 50; ++t) {
        const Eigen::Index k = t % 5, d = 1 + t % 4;
        Mat xs(k, d);
        Vec ys(k), q(d);
        for (Eigen::Index i = 0; i < k; ++i) {
            for (Eigen::Index j = 0; j < d; ++j) xs(i, j) = awkward_double(rng);
            ys[i] = awkward_double(rng);
        }
        for (Eigen::Index j = 0; j < d; ++j) q[j] = awkward_double(rng);
        const auto req = parse_request(nlohmann::json::parse(make_request("id" + std::to_string(t), xs, ys, q).dump()));
        CHECK(req.id == "id" + std::to_string(t));
        CHECK(req.xs == xs);
        CHECK(req.ys == ys);
        CHECK(req.query == q);
    }
}

TEST_CASE("record files are sorted, unique and finite") {
    std::vector<PredictionRecord> recs = {{{"b", 0, 0}, 1.0}, {{"a", 2, 0}, 2.0}, {{"a", 1, 1}, 3.0}, {{"a", 1, 0}, 4.0}};
    std::istringstream in(dump(recs));
    const auto back = read_records(in);
    REQUIRE(back.size() == 4);
    CHECK(back[0].key == QueryKey{"a", 1, 0});
    CHECK(back[1].key == QueryKey{"a", 1, 1});
    CHECK(back[2].key == QueryKey{"a", 2, 0});
    CHECK(back[3].key == QueryKey{"b", 0, 0});

    recs.push_back({{"b", 0, 0}, 5.0});
    CHECK_THROWS_AS(dump(recs), ConfigError);
    std::istringstream bad(R"({"prompt_id":"a","k":0,"query_index":0,"prediction":null})");
    CHECK_THROWS_AS(read_records(bad), PredictorError);
}

TEST_CASE("prediction-file handle serves stored records") {
    auto h = prediction_file("file", std::vector<PredictionRecord>{{{"p0", 3, 0}, 1.25}, {{"p0", 3, 1}, -2.5}});
    CHECK(h.mode() == Mode::PredictionFile);
    CHECK(h.concurrency() == Concurrency::ConcurrentSafe);
    const Mat xs = Mat::Zero(3, 2);
    const Vec ys = Vec::Zero(3), q = Vec::Zero(2);
    QueryKey k0{"p0", 3, 0}, k1{"p0", 3, 1}, missing{"p1", 3, 0};
    CHECK(h.predict(xs, ys, q, &k0) == 1.25);
    CHECK(h.predict(xs, ys, q, &k1) == -2.5);
    CHECK_THROWS_AS(h.predict(xs, ys, q, &missing), PredictorError);
    CHECK_THROWS_AS(h.predict(xs, ys, q), PredictorError);
}

TEST_CASE("in-process Gaussian PME handle equals the two-step computation") {
    Rng rng(3);
    const auto prior = GaussianPrior::standard(6);
    auto h = predictors::gaussian_pme(prior, 1e-3);
    for (int t = 0; t < 20; ++t) {
        const Eigen::Index k = t % 9;
        Mat X = standard_normal(k, 6, rng);
        Vec y = standard_normal(k, rng), q = standard_normal(6, rng);
        const Vec w = bayes::gaussian_pme(prior, X, y, 1e-3);
        CHECK(std::abs(h.predict(X, y, q) - w.dot(q)) <= 1e-12);
    }
}

TEST_CASE("handle rejects shape mismatches and non-finite values") {
    auto h = in_process("nan", [](const Mat&, const Vec&, const Vec&) { return std::nan(""); });
    CHECK_THROWS_AS(h.predict(Mat::Zero(2, 3), Vec::Zero(1), Vec::Zero(3)), ShapeError);
    CHECK_THROWS_AS(h.predict(Mat::Zero(2, 3), Vec::Zero(2), Vec::Zero(2)), ShapeError);
    try {
        h.predict(Mat::Zero(1, 2), Vec::Ones(1), Vec::Zero(2));
        FAIL("expected PredictorError");
    } catch (const PredictorError& e) {
        CHECK(e.request.at("ys") == nlohmann::json::array({1.0}));
    }
    auto throwing = in_process("throws", [](const Mat&, const Vec&, const Vec&) -> double {
        throw NumericError("boom");
    });
    CHECK_THROWS_AS(throwing.predict(Mat::Zero(0, 1), Vec(0), Vec::Zero(1)), PredictorError);
}

TEST_CASE("subprocess echo stub round-trips values exactly") {
    auto h = subprocess("stub", kStub);
    CHECK(h.mode() == Mode::Subprocess);
    CHECK(h.concurrency() == Concurrency::Serial);
    Rng rng(5);
    CHECK(h.predict(Mat(0, 2), Vec(0), Vec::Zero(2)) == 0.0);
    for (int t = 0; t < 200; ++t) {
        const Eigen::Index k = 1 + t % 6;
        Mat X = standard_normal(k, 2, rng);
        Vec y(k);
        for (Eigen::Index i = 0; i < k; ++i) y[i] = awkward_double(rng);
        CHECK(h.predict(X, y, Vec::Zero(2)) == y[k - 1]);
    }
}

TEST_CASE("subprocess protocol violations become predictor errors") {
    const Mat X = Mat::Ones(2, 1);
    const Vec y = Vec::Ones(2), q = Vec::Ones(1);
    for (const std::string mode : {"bad-id", "garbage", "null", "error"}) {
        CAPTURE(mode);
        auto h = subprocess("stub", kStub + " --mode " + mode);
        try {
            h.predict(X, y, q);
            FAIL("expected PredictorError");
        } catch (const PredictorError& e) {
            CHECK(e.request.at("ys") == nlohmann::json::array({1.0, 1.0}));
        }
    }
    SUBCASE("timeout") {
        auto slow = subprocess("slow", kStub + " --delay-ms 400", SubprocessOptions{std::chrono::milliseconds(50)});
        CHECK_THROWS_AS(slow.predict(X, y, q), PredictorError);
    }
    SUBCASE("exit mid-stream") {
        auto h = subprocess("dies", kStub + " --exit-after 2");
        CHECK(h.predict(X, y, q) == 1.0);
        CHECK(h.predict(X, y, q) == 1.0);
        CHECK_THROWS_AS(h.predict(X, y, q), PredictorError);
        CHECK(h.predict(X, y, q) == 1.0);  // restarted
    }
    SUBCASE("missing executable") {
        auto h = subprocess("missing", "/nonexistent/predictor-binary");
        CHECK_THROWS_AS(h.predict(X, y, q), PredictorError);
    }
}

TEST_CASE("serial handles never see interleaved requests") {
    const auto prompts = dense_prompts(2, 6, 12, 7);
    std::vector<Eigen::Index> ks = {0, 1, 2, 3, 4, 5};

    std::atomic<int> inside{0};
    std::atomic<bool> overlap{false};
    auto guarded = in_process(
        "guarded",
        [&](const Mat&, const Vec& ys, const Vec&) {
            if (inside.fetch_add(1) != 0) overlap = true;
            std::this_thread::sleep_for(std::chrono::microseconds(200));
            inside.fetch_sub(1);
            return ys.size() ? ys[ys.size() - 1] : 0.0;
        },
        Concurrency::Serial);
    auto res = run_batch(guarded, prompts, ks, QueryMode::NextTarget, 8);
    CHECK_FALSE(overlap.load());
    CHECK(res.failures.empty());

    auto stub = subprocess("stub", kStub + " --detect-overlap --delay-ms 1");
    auto sres = run_batch(stub, prompts, ks, QueryMode::NextTarget, 4);
    CHECK(sres.failures.empty());
    CHECK(sres.records.size() == prompts.size() * ks.size());
}

TEST_CASE("run_batch emits one record per slot in sorted order") {
    const auto prompts = dense_prompts(3, 4, 2, 9, 5);
    auto h = predictors::ols();
    auto res = run_batch(h, prompts, {0, 1}, QueryMode::NextTarget);
    REQUIRE(res.records.size() == 4);
    CHECK(res.records[0].key == QueryKey{"p0", 0, 0});
    CHECK(res.records[3].key == QueryKey{"p1", 1, 0});

    auto probe = run_batch(h, prompts, {0, 2, 4}, QueryMode::ProbeQueries);
    CHECK(probe.records.size() == 2 * 3 * 5);
    CHECK_THROWS_AS(run_batch(h, prompts, {4}, QueryMode::NextTarget), ConfigError);
}

TEST_CASE("run_batch output is deterministic and worker-count independent") {
    const auto prompts = dense_prompts(4, 10, 16, 21);
    std::vector<Eigen::Index> ks;
    for (Eigen::Index k = 0; k < 10; ++k) ks.push_back(k);
    auto serial = predictors::ridge(0.5).with_name("ridge");
    auto a = dump(run_batch(in_process("r", [&](const Mat& X, const Vec& y, const Vec& q) {
                                return serial.predict(X, y, q);
                            }, Concurrency::Serial),
                            prompts, ks, QueryMode::NextTarget)
                      .records);
    auto b = dump(run_batch(serial, prompts, ks, QueryMode::NextTarget).records);
    auto c = dump(run_batch(serial, prompts, ks, QueryMode::NextTarget, 8).records);
    CHECK(a == b);
    CHECK(b == c);
}

TEST_CASE("partial failures produce a manifest and keep the successes") {
    const auto prompts = dense_prompts(2, 5, 3, 4);
    auto flaky = in_process("flaky", [](const Mat& X, const Vec&, const Vec&) -> double {
        if (X.rows() == 2) throw NumericError("k = 2 unsupported");
        return 1.0;
    });
    auto res = run_batch(flaky, prompts, {0, 1, 2, 3}, QueryMode::NextTarget, 2);
    CHECK(res.records.size() == 9);
    REQUIRE(res.failures.size() == 3);
    for (const auto& f : res.failures) CHECK(f.key.k == 2);

    const auto path = (std::filesystem::temp_directory_path() / "icl_failures_test.json").string();
    write_failure_manifest(path, res.failures);
    std::ifstream in(path);
    const auto j = nlohmann::json::parse(in);
    REQUIRE(j.size() == 3);
    CHECK(j[0].at("prompt_id") == "p0");
    CHECK(j[0].at("k") == 2);
    CHECK(j[0].at("error").get<std::string>().find("unsupported") != std::string::npos);
    std::filesystem::remove(path);
}

TEST_CASE("predictor specs resolve to the expected estimators") {
    Rng rng(8);
    Mat X = standard_normal(5, 3, rng);
    Vec y = standard_normal(5, rng), q = standard_normal(3, rng);
    CHECK(predictors::from_spec("zero").predict(X, y, q) == 0.0);
    CHECK(std::abs(predictors::from_spec("ridge:0.25").predict(X, y, q) - q.dot(bayes::ridge_pme(0.25, X, y))) < 1e-14);
    CHECK_THROWS_AS(predictors::from_spec("ridge"), ConfigError);
    CHECK_THROWS_AS(predictors::from_spec("ridge:abc"), ConfigError);
    CHECK_THROWS_AS(predictors::from_spec("nope"), ConfigError);
    CHECK_THROWS_AS(predictors::from_spec("pme"), ConfigError);

    auto mix = MixtureSpec::single(FunctionFamilySpec(family::DenseLinear{GaussianPrior::standard(3)}));
    auto pme = predictors::from_spec("pme", &mix);
    CHECK(pme.name() == "pme");
    const Vec w = bayes::gaussian_pme_noiseless(GaussianPrior::standard(3), X.topRows(2), y.head(2));
    CHECK(std::abs(pme.predict(X.topRows(2), y.head(2), q) - q.dot(w)) < 1e-10);

    auto tree_mix = MixtureSpec::single(FunctionFamilySpec(family::DecisionTree{2, 3}));
    CHECK_THROWS_AS(predictors::bayes_optimal(tree_mix), UnsupportedVariant);
}

TEST_CASE("Gaussian views of linear families") {
    auto fourier = FunctionFamilySpec(family::FourierSeries{3, 2.0});
    auto v = predictors::gaussian_view(fourier);
    REQUIRE(v);
    CHECK(v->features.size() == 7);
    CHECK(v->components.size() == 1);

    // mixture of Fourier families of different max frequency shares the N = 4 basis
    MixtureSpec m{{FunctionFamilySpec(family::FourierSeries{2, 2.0}), FunctionFamilySpec(family::FourierSeries{4, 2.0})},
                  {0.5, 0.5}};
    auto mv = predictors::gaussian_view(m);
    REQUIRE(mv);
    CHECK(mv->features.size() == 9);
    REQUIRE(mv->components.size() == 2);
    const Vec var0 = mv->components[0].cov().diagonal();
    CHECK(var0[0] == 1.0);
    CHECK(var0[2] == 1.0);
    CHECK(var0[3] == 0.0);   // cos 3
    CHECK(var0[4 + 2] == 1.0);  // sin 2
    CHECK(var0[4 + 3] == 0.0);

    auto sparse = predictors::gaussian_view(FunctionFamilySpec(family::SparseLinear{6, 2}));
    REQUIRE(sparse);
    CHECK(sparse->components.size() == 15);

    CHECK_FALSE(predictors::gaussian_view(FunctionFamilySpec(family::SignVector{4})));
}
