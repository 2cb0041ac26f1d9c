#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "icl/core.hpp"
#include "icl/function_family.hpp"

namespace icl {

/// Distribution the prompt inputs x_i are drawn from, i.i.d.
struct InputDistribution {
    enum class Kind { StandardNormal, Uniform };

    Kind kind = Kind::StandardNormal;
    int dim = 1;
    double lo = -1.0;  // uniform only
    double hi = 1.0;

    static InputDistribution standard_normal(int d);
    /// Uniform on [-L, L] for scalar inputs.
    static InputDistribution uniform(double L);
    static InputDistribution uniform(double lo, double hi);

    void validate() const;
    double half_width() const { return 0.5 * (hi - lo); }

    /// n x dim samples, drawn row by row so prefixes are stable in n.
    Mat sample(Eigen::Index n, Rng& rng) const;

    nlohmann::json to_json() const;
    static InputDistribution from_json(const nlohmann::json& j);
};

/// Hierarchical task mixture: a family is chosen with probability alpha_i.
struct MixtureSpec {
    std::vector<FunctionFamilySpec> families;
    std::vector<double> alpha;

    static MixtureSpec single(FunctionFamilySpec family);

    void validate() const;
    int input_dim() const;

    nlohmann::json to_json() const;
    static MixtureSpec from_json(const nlohmann::json& j);
};

struct Prompt {
    std::string id;
    Mat xs;  // p x d
    Vec ys;  // p, noisy for NoisyLinearDiscrete
    Mat query_xs;
    Vec query_ys;  // noiseless f(query_xs)
    std::string family_id;
    int family_index = 0;
    nlohmann::json function_params;
    std::uint64_t seed = 0;

    Eigen::Index length() const { return xs.rows(); }
    Eigen::Index dim() const { return xs.cols(); }

    /// Reconstructs the generating function from function_params.
    Function function() const;

    nlohmann::json to_json() const;
    static Prompt from_json(const nlohmann::json& j);
};

/// Builds a prompt from an already-sampled function and fixed inputs. Noise is
/// drawn from `noise_seed` when the function carries a noise variance.
Prompt make_prompt(const Function& f, Mat xs, Mat query_xs, std::uint64_t noise_seed);

Prompt sample_prompt(const MixtureSpec& mixture, const InputDistribution& input, Eigen::Index p,
                     Eigen::Index n_queries, std::uint64_t seed);

struct PromptSet {
    MixtureSpec mixture;
    InputDistribution input;
    Eigen::Index p = 0;
    Eigen::Index n_queries = 1;
    std::uint64_t seed = 0;
    std::vector<Prompt> prompts;

    static constexpr int kFormatVersion = 1;

    nlohmann::json header() const;
};

/// `count` prompts; prompt i uses child_seed(seed, i) and id "p<i>".
PromptSet generate_prompts(const MixtureSpec& mixture, const InputDistribution& input, Eigen::Index p,
                           Eigen::Index n_queries, std::uint64_t seed, std::size_t count);

/// JSON-lines: header line, then one prompt per line.
void write_prompt_set(std::ostream& out, const PromptSet& set);
void write_prompt_set(const std::string& path, const PromptSet& set);
PromptSet read_prompt_set(std::istream& in);
PromptSet read_prompt_set(const std::string& path);

/// One curriculum attribute: value(t) = min(end, start + increment * floor(t / interval)).
struct CurriculumAttribute {
    int start;
    int end;
    int increment = 0;
    int interval = 1;

    static CurriculumAttribute fixed(int v) { return {v, v, 0, 1}; }
    int value(std::int64_t step) const;
};

struct CurriculumValues {
    int dims;
    int points;
    std::optional<int> extra;
};

struct CurriculumSchedule {
    CurriculumAttribute dims;
    CurriculumAttribute points;
    std::optional<CurriculumAttribute> extra;  // e.g. max frequency N

    /// Dense, sparse and sign-vector regression.
    static CurriculumSchedule linear_regression();
    static CurriculumSchedule fourier_series();
    static CurriculumSchedule gmm_p10();
    static CurriculumSchedule gmm_p20();

    CurriculumValues value(std::int64_t step) const;
};

CurriculumValues curriculum_value(const CurriculumSchedule& schedule, std::int64_t step);

}  // namespace icl
