#include "icl/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "icl/json_util.hpp"

namespace icl {

using nlohmann::json;

InputDistribution InputDistribution::standard_normal(int d) {
    InputDistribution in{Kind::StandardNormal, d, -1.0, 1.0};
    in.validate();
    return in;
}

InputDistribution InputDistribution::uniform(double L) { return uniform(-L, L); }

InputDistribution InputDistribution::uniform(double lo, double hi) {
    InputDistribution in{Kind::Uniform, 1, lo, hi};
    in.validate();
    return in;
}

void InputDistribution::validate() const {
    if (dim < 1) throw ConfigError("input distribution: d must be >= 1");
    if (kind == Kind::Uniform && !(hi > lo)) throw ConfigError("input distribution: uniform needs L > 0");
}

Mat InputDistribution::sample(Eigen::Index n, Rng& rng) const {
    if (kind == Kind::StandardNormal) return icl::standard_normal(n, dim, rng);
    std::uniform_real_distribution<double> unif(lo, hi);
    Mat m(n, dim);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < dim; ++j) m(i, j) = unif(rng);
    return m;
}

json InputDistribution::to_json() const {
    if (kind == Kind::StandardNormal) return {{"kind", "normal"}, {"d", dim}};
    return {{"kind", "uniform"}, {"d", dim}, {"lo", lo}, {"hi", hi}};
}

InputDistribution InputDistribution::from_json(const json& j) {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "normal") return standard_normal(j.at("d").get<int>());
    if (kind == "uniform") {
        if (j.contains("L")) return uniform(j.at("L").get<double>());
        return uniform(j.at("lo").get<double>(), j.at("hi").get<double>());
    }
    throw ConfigError("unknown input distribution kind: " + kind);
}

// ---------------------------------------------------------------------------

MixtureSpec MixtureSpec::single(FunctionFamilySpec family) { return MixtureSpec{{std::move(family)}, {1.0}}; }

void MixtureSpec::validate() const {
    if (families.empty()) throw ConfigError("mixture: no function families");
    if (families.size() != alpha.size()) throw ConfigError("mixture: |families| != |alpha|");
    double sum = 0.0;
    for (double a : alpha) {
        if (!(a >= 0.0)) throw ConfigError("mixture: alpha entries must be >= 0");
        sum += a;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("mixture: alpha must sum to 1");
    for (const auto& f : families)
        if (f.input_dim() != families.front().input_dim())
            throw ConfigError("mixture: families disagree on input dimension");
}

int MixtureSpec::input_dim() const {
    validate();
    return families.front().input_dim();
}

json MixtureSpec::to_json() const {
    json fams = json::array();
    for (const auto& f : families) fams.push_back(f.to_json());
    return {{"families", fams}, {"alpha", alpha}};
}

MixtureSpec MixtureSpec::from_json(const json& j) {
    MixtureSpec m;
    for (const auto& f : j.at("families")) m.families.push_back(FunctionFamilySpec::from_json(f));
    if (j.contains("alpha")) {
        m.alpha = j.at("alpha").get<std::vector<double>>();
    } else if (!m.families.empty()) {
        m.alpha.assign(m.families.size(), 1.0 / static_cast<double>(m.families.size()));
    }
    m.validate();
    return m;
}

// ---------------------------------------------------------------------------

Function Prompt::function() const { return Function::from_json(function_params); }

json Prompt::to_json() const {
    return {{"id", id},
            {"xs", icl::to_json(xs)},
            {"ys", icl::to_json(ys)},
            {"query_xs", icl::to_json(query_xs)},
            {"query_ys", icl::to_json(query_ys)},
            {"family_id", family_id},
            {"family_index", family_index},
            {"function_params", function_params},
            {"seed", seed}};
}

Prompt Prompt::from_json(const json& j) {
    Prompt p;
    p.id = j.at("id").get<std::string>();
    p.ys = vec_from_json(j.at("ys"));
    p.query_xs = mat_from_json(j.at("query_xs"));
    p.xs = mat_from_json(j.at("xs"), p.query_xs.cols());
    p.query_ys = vec_from_json(j.at("query_ys"));
    p.family_id = j.value("family_id", std::string{});
    p.family_index = j.value("family_index", 0);
    p.function_params = j.value("function_params", json::object());
    p.seed = j.value("seed", std::uint64_t{0});
    require_shape(p.xs.rows() == p.ys.size(), "prompt " + p.id + ": |xs| != |ys|");
    require_shape(p.query_xs.rows() == p.query_ys.size(), "prompt " + p.id + ": |query_xs| != |query_ys|");
    return p;
}

Prompt make_prompt(const Function& f, Mat xs, Mat query_xs, std::uint64_t noise_seed) {
    Prompt p;
    p.ys = f.evaluate(xs);
    if (f.noise_var() > 0) {
        Rng rng(noise_seed);
        p.ys += std::sqrt(f.noise_var()) * icl::standard_normal(p.ys.size(), rng);
    }
    p.query_ys = f.evaluate(query_xs);
    p.xs = std::move(xs);
    p.query_xs = std::move(query_xs);
    p.function_params = f.to_json();
    p.seed = noise_seed;
    return p;
}

Prompt sample_prompt(const MixtureSpec& mixture, const InputDistribution& input, Eigen::Index p,
                     Eigen::Index n_queries, std::uint64_t seed) {
    mixture.validate();
    input.validate();
    if (p < 0) throw ConfigError("sample_prompt: p must be >= 0");
    if (n_queries < 1) throw ConfigError("sample_prompt: n_queries must be >= 1");
    if (mixture.input_dim() != input.dim)
        throw ConfigError("sample_prompt: input distribution dimension differs from the family's");

    Rng pick(child_seed(seed, 0));
    const int family = sample_categorical(mixture.alpha, pick);
    const auto& spec = mixture.families[static_cast<std::size_t>(family)];
    Function f = sample_function(spec, child_seed(seed, 1));
    Rng xs_rng(child_seed(seed, 2));
    Rng q_rng(child_seed(seed, 3));
    Mat xs = input.sample(p, xs_rng);
    Mat qs = input.sample(n_queries, q_rng);
    Prompt out = make_prompt(f, std::move(xs), std::move(qs), child_seed(seed, 4));
    out.seed = seed;
    out.family_id = spec.id;
    out.family_index = family;
    return out;
}

json PromptSet::header() const {
    return {{"format_version", kFormatVersion}, {"mixture", mixture.to_json()}, {"input", input.to_json()},
            {"p", p},
            {"n_queries", n_queries},
            {"seed", seed},
            {"count", prompts.size()}};
}

PromptSet generate_prompts(const MixtureSpec& mixture, const InputDistribution& input, Eigen::Index p,
                           Eigen::Index n_queries, std::uint64_t seed, std::size_t count) {
    PromptSet set{mixture, input, p, n_queries, seed, {}};
    set.prompts.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        Prompt pr = sample_prompt(mixture, input, p, n_queries, child_seed(seed, i));
        pr.id = "p" + std::to_string(i);
        set.prompts.push_back(std::move(pr));
    }
    return set;
}

void write_prompt_set(std::ostream& out, const PromptSet& set) {
    out << set.header().dump() << '\n';
    for (const auto& p : set.prompts) out << p.to_json().dump() << '\n';
    if (!out) throw std::runtime_error("failed writing prompt set");
}

void write_prompt_set(const std::string& path, const PromptSet& set) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    write_prompt_set(out, set);
}

PromptSet read_prompt_set(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("prompt file is empty");
    json h = json::parse(line);
    if (h.value("format_version", 0) != PromptSet::kFormatVersion)
        throw ConfigError("unsupported prompt file format_version");
    PromptSet set{MixtureSpec::from_json(h.at("mixture")), InputDistribution::from_json(h.at("input")),
                  h.at("p").get<Eigen::Index>(), h.at("n_queries").get<Eigen::Index>(),
                  h.at("seed").get<std::uint64_t>(), {}};
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        set.prompts.push_back(Prompt::from_json(json::parse(line)));
    }
    return set;
}

PromptSet read_prompt_set(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open prompt file " + path);
    return read_prompt_set(in);
}

// ---------------------------------------------------------------------------

int CurriculumAttribute::value(std::int64_t step) const {
    if (step < 0) throw ConfigError("curriculum: step must be >= 0");
    if (interval < 1) throw ConfigError("curriculum: interval must be >= 1");
    const std::int64_t v = start + static_cast<std::int64_t>(increment) * (step / interval);
    return static_cast<int>(std::min<std::int64_t>(end, v));
}

CurriculumSchedule CurriculumSchedule::linear_regression() { return {{5, 20, 1, 2000}, {10, 40, 2, 2000}, {}}; }

CurriculumSchedule CurriculumSchedule::fourier_series() {
    return {CurriculumAttribute::fixed(1), {7, 43, 4, 2000}, CurriculumAttribute{1, 10, 1, 2000}};
}

CurriculumSchedule CurriculumSchedule::gmm_p10() { return {{5, 10, 1, 2000}, {5, 10, 1, 2000}, {}}; }

CurriculumSchedule CurriculumSchedule::gmm_p20() { return {{5, 10, 1, 2000}, {10, 20, 2, 2000}, {}}; }

CurriculumValues CurriculumSchedule::value(std::int64_t step) const {
    CurriculumValues v{dims.value(step), points.value(step), std::nullopt};
    if (extra) v.extra = extra->value(step);
    return v;
}

CurriculumValues curriculum_value(const CurriculumSchedule& schedule, std::int64_t step) {
    return schedule.value(step);
}

}  // namespace icl
