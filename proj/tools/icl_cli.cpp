// Command-line front end: prompt generation, reference predictors, probes,
// evaluation curves and multi-task suites.
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "icl/eval.hpp"
#include "icl/json_util.hpp"
#include "icl/predictor.hpp"
#include "icl/predictors.hpp"
#include "icl/probe.hpp"
#include "icl/tasks.hpp"

using namespace icl;
namespace pr = icl::bridge::predictors;
using nlohmann::json;

namespace {

/// "0,3,5" and inclusive ranges "a:b" (or "a:b:step"), mixed freely.
std::vector<Eigen::Index> parse_k_list(const std::string& text) {
    std::set<Eigen::Index> ks;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        std::vector<long> parts;
        std::stringstream is(item);
        std::string p;
        while (std::getline(is, p, ':')) {
            try {
                parts.push_back(std::stol(p));
            } catch (const std::exception&) {
                throw ConfigError("bad k-list entry '" + item + "'");
            }
        }
        if (parts.size() == 1) parts = {parts[0], parts[0], 1};
        if (parts.size() == 2) parts.push_back(1);
        if (parts.size() != 3 || parts[2] <= 0 || parts[0] < 0 || parts[1] < parts[0])
            throw ConfigError("bad k-list entry '" + item + "'");
        for (long k = parts[0]; k <= parts[1]; k += parts[2]) ks.insert(k);
    }
    if (ks.empty()) throw ConfigError("empty k-list");
    return {ks.begin(), ks.end()};
}

std::vector<Eigen::Index> k_list_or_all(const std::string& text, Eigen::Index p) {
    if (!text.empty()) return parse_k_list(text);
    std::vector<Eigen::Index> ks;
    for (Eigen::Index k = 0; k < p; ++k) ks.push_back(k);
    return ks;
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

GaussianPrior prior_from_json(const json& j) {
    Vec mean = vec_from_json(j.at("mean"));
    return GaussianPrior(mean, mat_from_json(j.at("cov"), mean.size()));
}

std::string csv_num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path);
    return out;
}

/// Writes successful records and, when any failed, the failure manifest.
int finish_batch(const bridge::BatchResult& r, const std::string& out, std::string manifest) {
    bridge::write_records(out, r.records);
    std::cerr << "wrote " << r.records.size() << " predictions to " << out << '\n';
    if (r.failures.empty()) return 0;
    if (manifest.empty()) manifest = out + ".failures.json";
    bridge::write_failure_manifest(manifest, r.failures);
    std::cerr << r.failures.size() << " predictions failed, see " << manifest << '\n';
    return 2;
}

struct PredictorChoice {
    std::string spec;
    std::string cmd;
    int timeout_ms = 60000;

    void add_to(CLI::App* app) {
        auto* s = app->add_option("--predictor", spec, "Built-in predictor spec, e.g. ols, ridge:0.25, pme, lasso:0.1");
        auto* c = app->add_option("--predictor-cmd", cmd, "Command line of an external predictor speaking the line protocol");
        app->add_option("--timeout-ms", timeout_ms, "Per-request timeout for --predictor-cmd")->capture_default_str();
        s->excludes(c);
    }

    bridge::PredictorHandle make(const MixtureSpec& mixture) const {
        if (spec.empty() && cmd.empty()) throw ConfigError("need --predictor or --predictor-cmd");
        if (!cmd.empty())
            return bridge::subprocess("external", cmd, {std::chrono::milliseconds(timeout_ms)});
        return pr::from_spec(spec, &mixture);
    }
};

// --- generate ---------------------------------------------------------------

struct GenerateArgs {
    std::string config, out;
    std::uint64_t seed = 0;
    std::size_t count = 0;
};

/// Config: {"mixture": {...}} or {"family": {...}}, plus "input", "p", optional "n_queries".
int run_generate(const GenerateArgs& a) {
    const json cfg = read_json_file(a.config);
    MixtureSpec mixture = cfg.contains("mixture") ? MixtureSpec::from_json(cfg.at("mixture"))
                                                  : MixtureSpec::single(FunctionFamilySpec::from_json(cfg.at("family")));
    const InputDistribution input = cfg.contains("input") ? InputDistribution::from_json(cfg.at("input"))
                                                          : InputDistribution::standard_normal(mixture.input_dim());
    const auto p = cfg.at("p").get<Eigen::Index>();
    const auto n_queries = cfg.value("n_queries", Eigen::Index{1});
    auto set = generate_prompts(mixture, input, p, n_queries, a.seed, a.count);
    write_prompt_set(a.out, set);
    std::cerr << "wrote " << set.prompts.size() << " prompts to " << a.out << '\n';
    return 0;
}

// --- pme --------------------------------------------------------------------

struct PmeArgs {
    std::string prompts, predictor, params, out, k_list, failures;
    int workers = 1;
};

std::optional<family::NoisyLinearDiscrete> find_nlr(const MixtureSpec& m) {
    for (const auto& f : m.families)
        if (auto* n = std::get_if<family::NoisyLinearDiscrete>(&f.variant)) return *n;
    return std::nullopt;
}

int run_pme(const PmeArgs& a) {
    const auto set = read_prompt_set(a.prompts);
    const json params = a.params.empty() ? json::object() : read_json_file(a.params);
    const int d = set.input.dim;
    const auto nlr = find_nlr(set.mixture);
    const double default_noise = nlr ? nlr->noise_var : 0.0;
    const double s2 = params.value("noise_var", default_noise);

    bridge::PredictorHandle h = pr::zero();
    if (a.predictor == "gaussian") {
        h = pr::gaussian_pme(params.contains("prior") ? prior_from_json(params["prior"]) : GaussianPrior::standard(d), s2);
    } else if (a.predictor == "skewed") {
        h = pr::gaussian_pme(GaussianPrior::skewed(d), s2);
    } else if (a.predictor == "gmm") {
        std::vector<GaussianPrior> comps;
        std::vector<double> alpha;
        if (params.contains("components")) {
            for (const auto& c : params["components"]) comps.push_back(prior_from_json(c));
            alpha = params.at("alpha").get<std::vector<double>>();
        } else if (auto view = pr::gaussian_view(set.mixture)) {
            comps = view->components;
            alpha = view->alpha;
        } else {
            comps = gmm_pinned_first_coordinate(d);
            alpha = {0.5, 0.5};
        }
        h = pr::mixture_pme(comps, alpha, params.value("noise_var", bayes::kEvidenceNoiseVar));
    } else if (a.predictor == "dmmse") {
        std::vector<Vec> tasks;
        if (params.contains("tasks")) {
            for (const auto& t : params["tasks"]) tasks.push_back(vec_from_json(t));
        } else if (nlr) {
            tasks = nlr->W;
        } else {
            throw ConfigError("dmmse needs \"tasks\" in --params or a discrete-task prompt set");
        }
        h = pr::dmmse(DiscreteTaskSet(std::move(tasks), s2));
    } else if (a.predictor == "ridge") {
        h = pr::ridge(params.value("noise_var", nlr ? nlr->noise_var : 0.25));
    } else {
        throw ConfigError("unknown --predictor " + a.predictor);
    }
    const auto ks = k_list_or_all(a.k_list, set.p);
    auto r = bridge::run_batch(h, set.prompts, ks, bridge::QueryMode::NextTarget, a.workers);
    return finish_batch(r, a.out, a.failures);
}

// --- baseline ---------------------------------------------------------------

struct BaselineArgs {
    std::string name, prompts, out, basis, k_list, failures;
    double alpha = 0.1;
    int q = 0, depth = 4, hidden = 100, steps = 100, workers = 1;
};

/// fourier:N | monomial:i-j,k-l,... | monomial-full | haar | rff (taken from the prompt set).
FeatureMap parse_basis(const std::string& basis, const PromptSet& set) {
    const auto colon = basis.find(':');
    const std::string kind = basis.substr(0, colon);
    const std::string arg = colon == std::string::npos ? "" : basis.substr(colon + 1);
    if (kind == "fourier") {
        if (arg.empty()) throw ConfigError("fourier basis needs N");
        return FeatureMap::fourier(std::stoi(arg), set.input.half_width());
    }
    if (kind == "monomial") {
        std::vector<std::pair<int, int>> pairs;
        std::stringstream ss(arg);
        std::string item;
        while (std::getline(ss, item, ',')) {
            const auto dash = item.find('-');
            if (dash == std::string::npos) throw ConfigError("monomial term must be i-j, got '" + item + "'");
            pairs.emplace_back(std::stoi(item.substr(0, dash)), std::stoi(item.substr(dash + 1)));
        }
        if (pairs.empty()) throw ConfigError("monomial basis needs at least one term");
        return FeatureMap::monomials(set.input.dim, pairs);
    }
    if (kind == "monomial-full") return FeatureMap::all_monomials(set.input.dim);
    if (kind == "haar") return FeatureMap::haar();
    if (kind == "rff") {
        for (const auto& f : set.mixture.families)
            if (auto* r = std::get_if<family::RandomFourierFeatures>(&f.variant))
                return FeatureMap::random_fourier(r->omega, r->delta);
        throw ConfigError("rff basis needs a random-Fourier-feature prompt set");
    }
    throw ConfigError("unknown basis " + basis);
}

int run_baseline(const BaselineArgs& a) {
    const auto set = read_prompt_set(a.prompts);
    const int d = set.input.dim;
    std::optional<FeatureMap> phi;
    if (!a.basis.empty()) phi = parse_basis(a.basis, set);

    bridge::PredictorHandle h = pr::zero();
    if (a.name == "ols") {
        h = phi ? pr::ols_features(*phi) : pr::ols();
    } else if (a.name == "ols-features") {
        h = phi ? pr::ols_features(*phi) : pr::from_spec("ols-features", &set.mixture);
    } else if (a.name == "ridge") {
        h = pr::ridge(a.alpha);
    } else if (a.name == "lasso") {
        h = pr::lasso_features(phi ? *phi : FeatureMap::identity(d), a.alpha);
    } else if (a.name == "linf") {
        h = pr::linf();
    } else if (a.name == "nuclear") {
        int q = a.q;
        if (q == 0) {
            q = static_cast<int>(std::lround(std::sqrt(static_cast<double>(d))));
            if (q * q != d) throw ConfigError("nuclear needs --q when d is not a perfect square");
        }
        h = pr::nuclear(q);
    } else if (a.name == "tree") {
        h = pr::tree(a.depth);
    } else if (a.name == "mlp") {
        baselines::MlpOptions o;
        o.hidden = a.hidden;
        o.steps = a.steps;
        h = pr::mlp(o);
    } else {
        throw ConfigError("unknown baseline " + a.name);
    }
    const auto ks = k_list_or_all(a.k_list, set.p);
    auto r = bridge::run_batch(h, set.prompts, ks, bridge::QueryMode::NextTarget, a.workers);
    return finish_batch(r, a.out, a.failures);
}

// --- sample-pme -------------------------------------------------------------

struct SampleArgs {
    std::string prompts, prior, out, diagnostics, k_list;
    std::int64_t samples = 20000, burn = 5000;
    std::uint64_t seed = 0;
    int chains = 4;
    double noise_var = posterior::kSamplerNoiseVar;
};

posterior::McmcTarget parse_target(const std::string& prior, int d) {
    if (prior == "sign") return posterior::McmcTarget::discrete(posterior::ProductSupport::sign_vectors(d));
    if (prior == "z") return posterior::McmcTarget::discrete(posterior::ProductSupport::z_task(d));
    if (prior == "gaussian") return posterior::McmcTarget::gaussian(GaussianPrior::standard(d));
    if (prior.rfind("lowrank:", 0) == 0) {
        const auto arg = prior.substr(8);
        const auto comma = arg.find(',');
        if (comma == std::string::npos) throw ConfigError("lowrank prior needs q,r");
        const int q = std::stoi(arg.substr(0, comma)), r = std::stoi(arg.substr(comma + 1));
        if (q * q != d) throw ConfigError("lowrank q must satisfy q^2 = d");
        return posterior::McmcTarget::low_rank(q, r);
    }
    throw ConfigError("unknown --prior " + prior);
}

int run_sample(const SampleArgs& a) {
    const auto set = read_prompt_set(a.prompts);
    const auto target = parse_target(a.prior, set.input.dim);
    posterior::SamplerConfig cfg;
    cfg.n_samples = a.samples;
    cfg.burn_in = a.burn;
    cfg.chains = a.chains;
    cfg.noise_var = a.noise_var;
    cfg.validate();

    std::vector<bridge::PredictionRecord> records;
    json diag = json::array();
    int unconverged = 0;
    const auto ks = k_list_or_all(a.k_list, set.p);
    for (std::size_t i = 0; i < set.prompts.size(); ++i) {
        const auto& p = set.prompts[i];
        for (auto k : ks) {
            if (k >= p.length()) throw ConfigError("prompt " + p.id + " is shorter than k + 1");
            cfg.seed = child_seed(child_seed(a.seed, i), static_cast<std::uint64_t>(k));
            auto res = posterior::mcmc_pme(target, p.xs.topRows(k), p.ys.head(k), cfg);
            const Vec q = p.xs.row(k).transpose();
            records.push_back({{p.id, k, 0}, res.mean.dot(q)});
            if (!res.diagnostics.converged()) ++unconverged;
            diag.push_back({{"prompt_id", p.id}, {"k", k}, {"seed", cfg.seed}, {"diagnostics", res.diagnostics.to_json()}});
        }
    }
    bridge::write_records(a.out, records);
    cfg.seed = a.seed;
    const std::string diag_path = a.diagnostics.empty() ? a.out + ".diagnostics.json" : a.diagnostics;
    json side{{"config", cfg.to_json()}, {"prior", a.prior}, {"runs", diag}};
    open_out(diag_path) << side.dump(2) << '\n';
    std::cerr << "wrote " << records.size() << " predictions to " << a.out << ", diagnostics to " << diag_path << '\n';
    if (unconverged > 0) std::cerr << "warning: " << unconverged << " runs have R-hat > 1.1\n";
    return 0;
}

// --- probe / dft ------------------------------------------------------------

struct ProbeArgs {
    PredictorChoice predictor;
    std::string prompts, out, k_list;
    Eigen::Index n_queries = 0;
    std::uint64_t seed = 0;
};

int run_probe(const ProbeArgs& a) {
    const auto set = read_prompt_set(a.prompts);
    auto h = a.predictor.make(set.mixture);
    const auto ks = k_list_or_all(a.k_list, set.p + 1);
    const int d = set.input.dim;
    auto out = open_out(a.out);
    out << "prompt_id,k,n_queries,residual";
    for (int j = 0; j < d; ++j) out << ",w" << j;
    out << '\n';
    for (std::size_t i = 0; i < set.prompts.size(); ++i) {
        const auto& p = set.prompts[i];
        for (auto k : ks) {
            if (k > p.length()) throw ConfigError("k exceeds prompt length");
            const auto seed = child_seed(child_seed(a.seed, i), static_cast<std::uint64_t>(k));
            auto r = probe::probe_weights(h, p.xs.topRows(k), p.ys.head(k), set.input, a.n_queries, seed);
            out << p.id << ',' << k << ',' << r.n_queries << ',' << csv_num(r.residual);
            for (int j = 0; j < d; ++j) out << ',' << csv_num(r.w_probe[j]);
            out << '\n';
        }
    }
    std::cerr << "wrote probes to " << a.out << '\n';
    return 0;
}

struct DftArgs {
    PredictorChoice predictor;
    std::string prompts, out, k_list;
    int N = 10, m = probe::kDefaultGridSize;
    double L = 0.0;
};

int run_dft(const DftArgs& a) {
    const auto set = read_prompt_set(a.prompts);
    auto h = a.predictor.make(set.mixture);
    const double L = a.L > 0 ? a.L : set.input.half_width();
    const auto ks = k_list_or_all(a.k_list, set.p + 1);
    auto out = open_out(a.out);
    out << "prompt_id,k,n,a,b,power\n";
    for (const auto& p : set.prompts)
        for (auto k : ks) {
            if (k > p.length()) throw ConfigError("k exceeds prompt length");
            auto s = probe::dft_spectrum(h, p.xs.topRows(k), p.ys.head(k), a.N, L, a.m);
            for (int n = 0; n <= a.N; ++n)
                out << p.id << ',' << k << ',' << n << ',' << csv_num(s.a[n]) << ',' << csv_num(s.b[n]) << ','
                    << csv_num(s.power[n]) << '\n';
        }
    std::cerr << "wrote spectra to " << a.out << '\n';
    return 0;
}

// --- eval -------------------------------------------------------------------

struct EvalArgs {
    std::vector<std::string> preds, predictors, predictor_cmds;
    std::string gold, out, svg, k_list, title;
    int bootstrap = 1000, workers = 1;
    double ci = 0.90;
    std::uint64_t seed = 0;
    bool log_y = false;
};

int run_eval(const EvalArgs& a) {
    const auto set = read_prompt_set(a.gold);
    eval::BootstrapConfig boot{a.bootstrap, a.ci, a.seed};
    boot.validate();

    std::vector<Eigen::Index> ks;
    if (!a.k_list.empty()) ks = parse_k_list(a.k_list);

    std::vector<eval::EvalCurve> curves;
    int status = 0;
    for (const auto& path : a.preds) {
        const auto records = bridge::read_records(path);
        auto file_ks = ks;
        if (file_ks.empty()) {
            std::set<Eigen::Index> seen;
            for (const auto& r : records) seen.insert(r.key.k);
            file_ks.assign(seen.begin(), seen.end());
        }
        const std::string name = std::filesystem::path(path).stem().string();
        curves.push_back(eval::curve_from_records(name, records, set.prompts, file_ks, boot));
    }

    std::vector<bridge::PredictorHandle> handles;
    for (const auto& s : a.predictors) handles.push_back(pr::from_spec(s, &set.mixture).with_name(s));
    for (std::size_t i = 0; i < a.predictor_cmds.size(); ++i)
        handles.push_back(bridge::subprocess("cmd" + std::to_string(i), a.predictor_cmds[i]));
    if (!handles.empty()) {
        const auto run_ks = ks.empty() ? k_list_or_all("", set.p) : ks;
        auto cmp = eval::compare_predictors(handles, set.prompts, run_ks, boot, a.workers);
        for (auto& c : cmp.curves) curves.push_back(std::move(c));
        for (const auto& [name, failures] : cmp.failures) {
            const std::string manifest = a.out + "." + name + ".failures.json";
            bridge::write_failure_manifest(manifest, failures);
            std::cerr << name << ": " << failures.size() << " failures, see " << manifest << '\n';
            status = 2;
        }
    }
    if (curves.empty()) throw ConfigError("nothing to evaluate: pass --preds or --predictor");

    eval::write_curves_csv(a.out, curves);
    if (!a.svg.empty()) eval::write_curves_svg(a.svg, curves, {a.log_y, 640, 400, a.title});
    for (const auto& c : curves)
        std::cerr << c.name << ": " << c.size() << " points, final loss " << c.mean_loss.back() << '\n';
    return status;
}

// --- suite / sweep ----------------------------------------------------------

struct SuiteArgs {
    std::string kind, id_out, ood_out, families_out;
    std::size_t K = 100;
    std::uint64_t seed = 0;
    std::size_t n_prompts = 0, n_ood_families = 0;
    Eigen::Index p = 0;
};

int run_suite(const SuiteArgs& a) {
    const auto kind = eval::suite_kind_from_string(a.kind);
    auto params = eval::SuiteParams::defaults_for(kind);
    if (a.n_prompts) params.n_prompts = a.n_prompts;
    if (a.n_ood_families) params.n_ood_families = a.n_ood_families;
    if (a.p) params.p = a.p;
    auto suite = eval::build_multitask_suite(kind, params, a.K, a.seed);
    write_prompt_set(a.id_out, suite.id_prompts);
    write_prompt_set(a.ood_out, suite.ood_prompts);
    if (!a.families_out.empty()) {
        json j{{"kind", eval::to_string(kind)}, {"K", suite.K}, {"D", suite.D}, {"pool_size", suite.pool_size}};
        for (const auto& f : suite.pretrain_families) j["pretrain"].push_back(eval::family_key(f));
        for (const auto& f : suite.ood_families) j["ood"].push_back(eval::family_key(f));
        // usable as `pme --predictor dmmse --params`
        if (auto nlr = find_nlr(MixtureSpec{suite.pretrain_families, {}})) {
            for (const auto& t : nlr->W) j["tasks"].push_back(to_json(t));
            j["noise_var"] = nlr->noise_var;
        }
        open_out(a.families_out) << j.dump(2) << '\n';
    }
    std::cerr << "suite " << a.kind << " K=" << suite.K << " (pool " << suite.pool_size << "): "
              << suite.id_prompts.prompts.size() << " ID and " << suite.ood_prompts.prompts.size() << " OOD prompts\n";
    return 0;
}

struct SweepArgs {
    std::string dumps_dir, id_gold, ood_gold, out;
    std::size_t window = 10;
};

int run_sweep(const SweepArgs& a) {
    const auto checkpoints = eval::load_checkpoint_dumps(a.dumps_dir);
    const auto id = read_prompt_set(a.id_gold);
    const auto ood = read_prompt_set(a.ood_gold);
    auto report = eval::checkpoint_sweep(checkpoints, id.prompts, ood.prompts, a.window);
    auto out = open_out(a.out);
    eval::write_forgetting_csv(out, report);
    std::cerr << checkpoints.size() << " checkpoints; OOD minimum at step " << report.t_min << ", final/min ratio "
              << report.ratio << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"In-context learning reference estimators and evaluation tools"};
    app.require_subcommand(1);
    int status = 0;

    GenerateArgs gen;
    auto* g = app.add_subcommand("generate", "Sample a prompt-set file");
    g->add_option("--config", gen.config, "JSON with mixture|family, input, p, n_queries")->required()->check(CLI::ExistingFile);
    g->add_option("--out", gen.out)->required();
    g->add_option("--seed", gen.seed)->capture_default_str();
    g->add_option("--count", gen.count)->required();
    g->callback([&] { status = run_generate(gen); });

    PmeArgs pme;
    auto* pm = app.add_subcommand("pme", "Closed-form posterior-mean predictions");
    pm->add_option("--prompts", pme.prompts)->required()->check(CLI::ExistingFile);
    pm->add_option("--predictor", pme.predictor)->required()->check(CLI::IsMember({"gaussian", "skewed", "gmm", "dmmse", "ridge"}));
    pm->add_option("--params", pme.params, "JSON with noise_var, prior, components/alpha or tasks")->check(CLI::ExistingFile);
    pm->add_option("--out", pme.out)->required();
    pm->add_option("--k-list", pme.k_list, "Prefix lengths, e.g. 0:20 or 1,5,10 (default 0..p-1)");
    pm->add_option("--workers", pme.workers)->capture_default_str();
    pm->add_option("--failures", pme.failures, "Failure manifest path");
    pm->callback([&] { status = run_pme(pme); });

    BaselineArgs bl;
    auto* b = app.add_subcommand("baseline", "Convex and learned baseline predictions");
    b->add_option("--name", bl.name)->required()->check(
        CLI::IsMember({"ols", "ols-features", "ridge", "lasso", "linf", "nuclear", "tree", "mlp"}));
    b->add_option("--prompts", bl.prompts)->required()->check(CLI::ExistingFile);
    b->add_option("--out", bl.out)->required();
    b->add_option("--alpha", bl.alpha, "Lasso penalty or ridge noise variance")->capture_default_str();
    b->add_option("--basis", bl.basis, "fourier:N | monomial:i-j,... | monomial-full | haar | rff");
    b->add_option("--q", bl.q, "Matrix side for nuclear (default sqrt(d))");
    b->add_option("--depth", bl.depth)->capture_default_str();
    b->add_option("--hidden", bl.hidden)->capture_default_str();
    b->add_option("--steps", bl.steps)->capture_default_str();
    b->add_option("--k-list", bl.k_list);
    b->add_option("--workers", bl.workers)->capture_default_str();
    b->add_option("--failures", bl.failures);
    b->callback([&] { status = run_baseline(bl); });

    SampleArgs sm;
    auto* s = app.add_subcommand("sample-pme", "MCMC posterior-mean predictions");
    s->add_option("--prompts", sm.prompts)->required()->check(CLI::ExistingFile);
    s->add_option("--prior", sm.prior, "sign | z | lowrank:q,r | gaussian")->required();
    s->add_option("--samples", sm.samples, "Iterations per chain, burn-in included")->capture_default_str();
    s->add_option("--burn", sm.burn)->capture_default_str();
    s->add_option("--chains", sm.chains)->capture_default_str();
    s->add_option("--noise-var", sm.noise_var)->capture_default_str();
    s->add_option("--seed", sm.seed)->capture_default_str();
    s->add_option("--out", sm.out)->required();
    s->add_option("--diagnostics", sm.diagnostics, "Sidecar JSON (default <out>.diagnostics.json)");
    s->add_option("--k-list", sm.k_list);
    s->callback([&] { status = run_sample(sm); });

    ProbeArgs pb;
    auto* p = app.add_subcommand("probe", "Implied weights of a predictor per prompt prefix");
    pb.predictor.add_to(p);
    p->add_option("--prompts", pb.prompts)->required()->check(CLI::ExistingFile);
    p->add_option("--k-list", pb.k_list, "Prefix lengths (default 0..p)");
    p->add_option("--n-queries", pb.n_queries, "Probe queries per prefix (default 2d)");
    p->add_option("--seed", pb.seed)->capture_default_str();
    p->add_option("--out", pb.out)->required();
    p->callback([&] { status = run_probe(pb); });

    DftArgs df;
    auto* f = app.add_subcommand("dft", "Fourier spectrum of a scalar-input predictor");
    df.predictor.add_to(f);
    f->add_option("--prompts", df.prompts)->required()->check(CLI::ExistingFile);
    f->add_option("--N", df.N)->capture_default_str();
    f->add_option("--L", df.L, "Half-width (default from the prompt set)");
    f->add_option("--m", df.m)->capture_default_str();
    f->add_option("--k-list", df.k_list);
    f->add_option("--out", df.out)->required();
    f->callback([&] { status = run_dft(df); });

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "Loss curves with bootstrap bands");
    e->add_option("--preds", ev.preds, "Prediction files")->check(CLI::ExistingFile);
    e->add_option("--predictor", ev.predictors, "Built-in predictors to run on the gold prompts");
    e->add_option("--predictor-cmd", ev.predictor_cmds, "External predictors to run on the gold prompts");
    e->add_option("--gold", ev.gold)->required()->check(CLI::ExistingFile);
    e->add_option("--bootstrap", ev.bootstrap)->capture_default_str();
    e->add_option("--ci", ev.ci)->capture_default_str();
    e->add_option("--seed", ev.seed)->capture_default_str();
    e->add_option("--k-list", ev.k_list);
    e->add_option("--workers", ev.workers)->capture_default_str();
    e->add_option("--out", ev.out)->required();
    e->add_option("--svg", ev.svg);
    e->add_flag("--log-y", ev.log_y);
    e->add_option("--title", ev.title);
    e->callback([&] { status = run_eval(ev); });

    SuiteArgs su;
    auto* u = app.add_subcommand("suite", "Multi-task ID/OOD prompt sets");
    u->add_option("--kind", su.kind)->required()->check(CLI::IsMember({"monomials", "fourier-subset", "nlr", "nlr-discrete"}));
    u->add_option("--K", su.K)->capture_default_str();
    u->add_option("--seed", su.seed)->capture_default_str();
    u->add_option("--n-prompts", su.n_prompts);
    u->add_option("--n-ood-families", su.n_ood_families);
    u->add_option("--p", su.p);
    u->add_option("--id-out", su.id_out)->required();
    u->add_option("--ood-out", su.ood_out)->required();
    u->add_option("--families-out", su.families_out);
    u->callback([&] { status = run_suite(su); });

    SweepArgs sw;
    auto* w = app.add_subcommand("sweep", "Forgetting analysis over checkpoint dumps");
    w->add_option("--dumps-dir", sw.dumps_dir)->required()->check(CLI::ExistingDirectory);
    w->add_option("--id-gold", sw.id_gold)->required()->check(CLI::ExistingFile);
    w->add_option("--ood-gold", sw.ood_gold)->required()->check(CLI::ExistingFile);
    w->add_option("--window", sw.window)->capture_default_str();
    w->add_option("--out", sw.out)->required();
    w->callback([&] { status = run_sweep(sw); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        return app.exit(err);
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << '\n';
        return 1;
    }
    return status;
}
